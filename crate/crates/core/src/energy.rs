//! The free energy, its gradient (the chemical potential), stationary
//! residuals, dissipation and the mass/flux bookkeeping.
//!
//! The discrete energy is
//! `E(u) = 1/2 u^T G u + sum W F(u) + alpha/2 u^T T u + beta/2 u^T S u`,
//! and `mu = M^{-1} grad E`, so `<mu, w>_M = dE(u)[w]` holds exactly.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{PairField, StripGrid};
use crate::operators::WentzellOperator;
use crate::potential::{Potential, PotentialCheck, SampleRange};
use crate::sparse::{dot, wdot, Csr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub e_bulk: f64,
    pub e_surf: f64,
    pub e_total: f64,
    pub dissipation: f64,
    pub mass_bulk: f64,
    pub mass_total: f64,
    pub flux: f64,
    pub bulk_res: f64,
    pub bdry_res: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str =
        "e_bulk,e_surf,e_total,dissipation,mass_bulk,mass_total,flux,bulk_res,bdry_res";

    pub fn csv_fields(&self) -> [f64; 9] {
        [
            self.e_bulk,
            self.e_surf,
            self.e_total,
            self.dissipation,
            self.mass_bulk,
            self.mass_total,
            self.flux,
            self.bulk_res,
            self.bdry_res,
        ]
    }
}

/// Energy functional on a fixed operator and potential.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    op: Arc<WentzellOperator>,
    pot: Potential,
    quad: Csr,
    check: PotentialCheck,
}

impl EnergyModel {
    pub fn new(op: impl Into<Arc<WentzellOperator>>, pot: Potential) -> Result<Self> {
        Self::with_range(op, pot, SampleRange::default())
    }

    pub fn with_range(
        op: impl Into<Arc<WentzellOperator>>,
        pot: Potential,
        range: SampleRange,
    ) -> Result<Self> {
        let op = op.into();
        let check = pot.validate(range)?;
        let quad = op.forms().energy_stiffness(op.constants());
        Ok(Self {
            op,
            pot,
            quad,
            check,
        })
    }

    pub fn op(&self) -> &WentzellOperator {
        &self.op
    }

    pub fn op_arc(&self) -> Arc<WentzellOperator> {
        Arc::clone(&self.op)
    }

    pub fn grid(&self) -> &StripGrid {
        self.op.grid()
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn potential_check(&self) -> &PotentialCheck {
        &self.check
    }

    /// Hessian of the quadratic part, `G + alpha T + beta S`.
    pub fn quadratic_part(&self) -> &Csr {
        &self.quad
    }

    fn bulk_f_sum(&self, u: &[f64]) -> f64 {
        let w = &self.op.forms().bulk_mass;
        w.iter().zip(u).map(|(w, &s)| w * self.pot.big_f(s)).sum()
    }

    /// `(E_bulk, E_surf)`.
    pub fn energy_parts(&self, u: &PairField) -> Result<(f64, f64)> {
        self.grid().check(u)?;
        let v = u.values();
        let forms = self.op.forms();
        let c = self.op.constants();
        let bulk = 0.5 * forms.grad.form(v, v) + self.bulk_f_sum(v);
        let surf = 0.5 * c.alpha * forms.tangential.form(v, v)
            + 0.5 * c.beta * wdot(&forms.surface_mass, v, v);
        Ok((bulk, surf))
    }

    pub fn energy(&self, u: &PairField) -> Result<f64> {
        let (b, s) = self.energy_parts(u)?;
        Ok(b + s)
    }

    /// `E(u) - E(psi)`, accurate down to rounding of the difference itself.
    pub fn energy_gap(&self, u: &PairField, psi: &PairField) -> Result<f64> {
        self.grid().check(u)?;
        self.grid().check(psi)?;
        let (a, b) = (u.values(), psi.values());
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let quad = 0.5 * self.quad.form(&d, &s);
        let w = &self.op.forms().bulk_mass;
        let pot: f64 = (0..a.len())
            .map(|k| w[k] * self.pot.big_f_difference(a[k], b[k]))
            .sum();
        Ok(quad + pot)
    }

    /// `grad E` in the Euclidean pairing: `K_E u + W f(u)`.
    pub fn gradient(&self, u: &PairField) -> Result<Vec<f64>> {
        self.grid().check(u)?;
        let mut g = self.quad.matvec(u.values());
        let w = &self.op.forms().bulk_mass;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += w[k] * self.pot.f(u.values()[k]);
        }
        Ok(g)
    }

    /// The chemical potential: the gradient of `E` in the pairing of `A`.
    pub fn chemical_potential(&self, u: &PairField) -> Result<PairField> {
        let g = self.gradient(u)?;
        Ok(u.with_values(
            g.iter().zip(self.op.mass()).map(|(g, m)| g / m).collect(),
        ))
    }

    /// Jacobian of `grad E`: `K_E + W diag f'(u)`.
    pub fn hessian(&self, u: &PairField) -> Result<Csr> {
        self.grid().check(u)?;
        let w = &self.op.forms().bulk_mass;
        let d: Vec<f64> = u
            .values()
            .iter()
            .zip(w)
            .map(|(&s, w)| w * self.pot.f_prime(s))
            .collect();
        Ok(self.quad.add_diagonal(&d))
    }

    /// `(||-Lap u + f(u)||_{L2(Omega)}, ||-alpha LB u + dnu u + beta u||_{L2(Gamma)})`,
    /// evaluated consistently with the discrete energy: interior nodes use
    /// `mu`, wall nodes the wall part of `grad E` per unit length.
    pub fn stationary_residual(&self, u: &PairField) -> Result<(f64, f64)> {
        let g = self.gradient(u)?;
        Ok(self.residuals_from_gradient(&g))
    }

    pub(crate) fn residuals_from_gradient(&self, g: &[f64]) -> (f64, f64) {
        let grid = self.grid();
        let forms = self.op.forms();
        let mut bulk = 0.0;
        for (k, gk) in g.iter().enumerate() {
            if !grid.on_gamma(k) {
                let w = forms.bulk_mass[k];
                bulk += gk * gk / w;
            }
        }
        let mut bdry = 0.0;
        for &k in grid.boundary_nodes() {
            let s = forms.surface_mass[k];
            bdry += g[k] * g[k] / s;
        }
        (bulk.sqrt(), bdry.sqrt())
    }

    /// `int |grad mu|^2 dx + (c/b) int mu^2 dS`
    pub fn dissipation(&self, mu: &PairField) -> Result<f64> {
        self.op.a_form(mu, mu)
    }

    pub fn mass_bulk(&self, u: &PairField) -> f64 {
        dot(&self.op.forms().bulk_mass, u.values())
    }

    /// `int u dx + (1/b) int u dS`
    pub fn mass_total(&self, u: &PairField) -> f64 {
        dot(self.op.mass(), u.values())
    }

    /// `-(c/b) int mu dS`, the rate of change of `mass_total`.
    pub fn flux(&self, mu: &PairField) -> f64 {
        let c = self.op.constants();
        -(c.c / c.b) * dot(&self.op.forms().surface_mass, mu.values())
    }

    /// `C_f = |Omega| min(0, min_{|s| <= N2} F(s))`.
    pub fn c_f(&self) -> f64 {
        self.grid().area() * self.check.min_f_inner.min(0.0)
    }

    /// Coercive lower bound `min(1, alpha, beta)/2 ||u||_V^2 + C_f <= E(u)`.
    pub fn lower_bound(&self, u: &PairField) -> f64 {
        let c = self.op.constants();
        let v = self.op.v_norm(u);
        0.5 * 1f64.min(c.alpha).min(c.beta) * v * v + self.c_f()
    }

    pub fn report(&self, u: &PairField) -> Result<EnergyReport> {
        let (e_bulk, e_surf) = self.energy_parts(u)?;
        let g = self.gradient(u)?;
        let mu = u.with_values(g.iter().zip(self.op.mass()).map(|(g, m)| g / m).collect());
        let (bulk_res, bdry_res) = self.residuals_from_gradient(&g);
        Ok(EnergyReport {
            e_bulk,
            e_surf,
            e_total: e_bulk + e_surf,
            dissipation: self.dissipation(&mu)?,
            mass_bulk: self.mass_bulk(u),
            mass_total: self.mass_total(u),
            flux: self.flux(&mu),
            bulk_res,
            bdry_res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Constants;

    fn model(nx: usize, ny: usize) -> EnergyModel {
        let g = StripGrid::strip(1.0, 1.0, nx, ny).unwrap();
        let op = WentzellOperator::new(g, Constants::default()).unwrap();
        EnergyModel::new(op, Potential::double_well()).unwrap()
    }

    #[test]
    fn zero_field() {
        let m = model(8, 8);
        let u = PairField::zeros(m.grid());
        let r = m.report(&u).unwrap();
        assert!((r.e_bulk - 0.25).abs() < 1e-14);
        assert_eq!(r.e_surf, 0.0);
        assert_eq!(r.e_total, r.e_bulk + r.e_surf);
        assert_eq!(m.chemical_potential(&u).unwrap().max_abs(), 0.0);
        assert_eq!((r.bulk_res, r.bdry_res), (0.0, 0.0));
    }

    #[test]
    fn unit_field() {
        let m = model(8, 8);
        let g = m.grid();
        let u = PairField::constant(g, 1.0);
        let r = m.report(&u).unwrap();
        assert!(r.e_bulk.abs() < 1e-15);
        assert!((r.e_surf - 1.0).abs() < 1e-14);
        assert!(r.bulk_res < 1e-14);
        assert!((r.bdry_res - 2f64.sqrt()).abs() < 1e-14);
        let mu = m.chemical_potential(&u).unwrap();
        let want = PairField::from_parts(g, |_, _| 0.0, |_, _| 1.0);
        for k in 0..g.len() {
            assert!((mu.values()[k] - want.values()[k]).abs() < 1e-14);
        }
        // a(1, 1) = |Gamma|: only the wall term survives
        let one = PairField::constant(g, 1.0);
        assert!((m.dissipation(&one).unwrap() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gap_matches_direct_difference() {
        let m = model(8, 8);
        let g = m.grid();
        let u = PairField::from_fn(g, |x, y| 0.3 * (6.0 * x).sin() + y);
        let psi = PairField::from_fn(g, |x, _| 0.1 * x);
        let direct = m.energy(&u).unwrap() - m.energy(&psi).unwrap();
        assert!((m.energy_gap(&u, &psi).unwrap() - direct).abs() < 1e-13);
        let tiny = psi.add(&PairField::constant(g, 1e-9));
        let gap = m.energy_gap(&tiny, &psi).unwrap();
        assert!(gap.is_finite());
    }

    #[test]
    fn mass_and_flux() {
        let m = model(8, 8);
        let u = PairField::constant(m.grid(), 1.0);
        assert!((m.mass_bulk(&u) - 1.0).abs() < 1e-14);
        assert!((m.mass_total(&u) - 3.0).abs() < 1e-14);
        assert!((m.flux(&u) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn lower_bound_holds_for_wells() {
        let m = model(8, 8);
        for c in [-2.0, -1.0, 0.0, 0.5, 1.0, 3.0] {
            let u = PairField::constant(m.grid(), c);
            assert!(m.energy(&u).unwrap() >= m.lower_bound(&u) - 1e-12);
        }
    }
}
