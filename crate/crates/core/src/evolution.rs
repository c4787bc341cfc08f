//! Time stepping for the gradient flow `U_t = -A mu(U)`.
//!
//! Both schemes are written in increment form, `U_{n+1} = U_n + delta`, with
//! the right-hand side proportional to `K mu(U_n)`, so equilibria are exact
//! fixed points. Multiplying through by the pairing weights `M` keeps every
//! system in terms of the assembled forms:
//!
//! * stabilized semi-implicit: `(M + dt K M^{-1} (K_E + S W)) delta = -dt K mu_n`
//! * fully implicit: `M (U - U_n) + dt K M^{-1} grad E(U) = 0`, by Newton.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::PairField;
use crate::sparse::{Csr, Factorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StabilizedSemiImplicit,
    NewtonImplicit,
}

/// Relative slack allowed by the energy guard.
pub const ENERGY_GUARD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Fixed stabilization constant; `None` tracks `max |f'|` over the range
    /// of the iterates seen so far.
    pub stabilization: Option<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub energy_guard: bool,
    pub dt_min: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::StabilizedSemiImplicit,
            dt: 1e-3,
            stabilization: None,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            energy_guard: true,
            dt_min: 1e-8,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt) {
            return Err(Error::param("dt_min", "must satisfy 0 < dt_min <= dt"));
        }
        if let Some(s) = self.stabilization {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param("stabilization", "must be nonnegative"));
            }
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::param("newton_tol", "need a positive tolerance and iteration cap"));
        }
        Ok(())
    }
}

/// One accepted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: PairField,
    pub dt: f64,
    /// Newton iterations (0 for the semi-implicit scheme).
    pub iterations: usize,
    /// Rejected attempts (dt halvings) before acceptance.
    pub rejected: usize,
}

/// A stepper bound to one energy model. Caches the factorized
/// semi-implicit system per `(dt, S)`.
pub struct Stepper<'m> {
    model: &'m EnergyModel,
    cfg: StepperConfig,
    dt: f64,
    s_auto: f64,
    cache: Option<(f64, f64, Factorization)>,
    inv_mass: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m EnergyModel, cfg: StepperConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            cfg,
            dt: cfg.dt,
            s_auto: 0.0,
            cache: None,
            inv_mass: model.op().mass().iter().map(|m| 1.0 / m).collect(),
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// The time step the next attempt will use.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Stabilization constant for a state: fixed, or the running maximum of
    /// `max |f'|` over the state's range.
    pub fn stabilization_for(&mut self, u: &PairField) -> f64 {
        match self.cfg.stabilization {
            Some(s) => s,
            None => {
                let (lo, hi) = u.min_max();
                let s = self.model.potential().max_abs_f_prime(lo, hi);
                self.s_auto = self.s_auto.max(s);
                self.s_auto
            }
        }
    }

    fn semi_implicit_matrix(&self, dt: f64, s: f64) -> Csr {
        let op = self.model.op();
        let w = &op.forms().bulk_mass;
        let p = self
            .model
            .quadratic_part()
            .add_diagonal(&w.iter().map(|w| s * w).collect::<Vec<_>>());
        let scaled: Vec<f64> = self.inv_mass.iter().map(|m| dt * m).collect();
        op.stiffness()
            .mul_diag_mul(&scaled, &p)
            .add_diagonal(op.mass())
    }

    /// One semi-implicit increment at the given `dt`, without the guard.
    pub fn semi_implicit_increment(&mut self, u: &PairField, dt: f64) -> Result<PairField> {
        let s = self.stabilization_for(u);
        let stale = !matches!(&self.cache, Some((d, ss, _)) if *d == dt && *ss == s);
        if stale {
            let m = self.semi_implicit_matrix(dt, s);
            self.cache = Some((dt, s, Factorization::lu(&m)?));
        }
        let op = self.model.op();
        let g = self.model.gradient(u)?;
        let mu: Vec<f64> = g.iter().zip(&self.inv_mass).map(|(g, m)| g * m).collect();
        let rhs: Vec<f64> = op.stiffness().matvec(&mu).iter().map(|v| -dt * v).collect();
        let delta = self.cache.as_ref().expect("factorized above").2.solve(&rhs)?;
        Ok(u.with_values(u.values().iter().zip(&delta).map(|(a, d)| a + d).collect()))
    }

    /// Fully implicit step by Newton's method. Returns the new state and the
    /// number of iterations.
    pub fn newton_increment(&self, u_n: &PairField, dt: f64) -> Result<(PairField, usize)> {
        let op = self.model.op();
        let k = op.stiffness();
        let scaled: Vec<f64> = self.inv_mass.iter().map(|m| dt * m).collect();
        let mut u = u_n.clone();
        for iter in 0..self.cfg.newton_max_iter {
            let g = self.model.gradient(&u)?;
            let kg = k.matvec(&g.iter().zip(&scaled).map(|(g, s)| g * s).collect::<Vec<_>>());
            let r: Vec<f64> = (0..u.len())
                .map(|i| op.mass()[i] * (u.values()[i] - u_n.values()[i]) + kg[i])
                .collect();
            // residual measured as the H norm of M^{-1} r
            let res = r
                .iter()
                .zip(&self.inv_mass)
                .map(|(r, im)| r * r * im)
                .sum::<f64>()
                .sqrt();
            if res <= self.cfg.newton_tol {
                return Ok((u, iter.max(1)));
            }
            let jac = k
                .mul_diag_mul(&scaled, &self.model.hessian(&u)?)
                .add_diagonal(op.mass());
            let du = Factorization::lu(&jac)?.solve(&r)?;
            u = u.with_values(u.values().iter().zip(&du).map(|(a, d)| a - d).collect());
        }
        let g = self.model.gradient(&u)?;
        let kg = k.matvec(&g.iter().zip(&scaled).map(|(g, s)| g * s).collect::<Vec<_>>());
        let res = (0..u.len())
            .map(|i| {
                let r = op.mass()[i] * (u.values()[i] - u_n.values()[i]) + kg[i];
                r * r * self.inv_mass[i]
            })
            .sum::<f64>()
            .sqrt();
        if res <= self.cfg.newton_tol {
            return Ok((u, self.cfg.newton_max_iter));
        }
        Err(Error::NewtonDiverged {
            iters: self.cfg.newton_max_iter,
            residual: res,
        })
    }

    /// Advances one step, halving `dt` on guard violations or Newton failure
    /// until `dt_min`. The reduced `dt` is kept for subsequent steps.
    pub fn step(&mut self, u: &PairField) -> Result<StepOutcome> {
        let e0 = if self.cfg.energy_guard {
            self.model.energy(u)?
        } else {
            0.0
        };
        let mut rejected = 0;
        loop {
            let dt = self.dt;
            let attempt = match self.cfg.scheme {
                Scheme::StabilizedSemiImplicit => {
                    self.semi_implicit_increment(u, dt).map(|v| (v, 0))
                }
                Scheme::NewtonImplicit => self.newton_increment(u, dt),
            };
            let accepted = match attempt {
                Ok((v, iters)) => {
                    if !self.cfg.energy_guard {
                        Some((v, iters))
                    } else {
                        let e1 = self.model.energy(&v)?;
                        (e1 <= e0 + ENERGY_GUARD_TOL * (1.0 + e0.abs())).then_some((v, iters))
                    }
                }
                Err(Error::NewtonDiverged { .. }) | Err(Error::Factorization(_)) => None,
                Err(e) => return Err(e),
            };
            if let Some((state, iterations)) = accepted {
                return Ok(StepOutcome {
                    state,
                    dt,
                    iterations,
                    rejected,
                });
            }
            rejected += 1;
            let next = 0.5 * dt;
            if next < self.cfg.dt_min {
                return Err(Error::GuardAbort { t: f64::NAN, dt });
            }
            log::debug!("step rejected at dt = {dt:e}; retrying with {next:e}");
            self.dt = next;
        }
    }
}

/// Output cadence of [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub t_end: f64,
    /// Record scalars every this many accepted steps.
    pub series_stride: usize,
    /// Keep a field snapshot every this many accepted steps (0: never; the
    /// initial and final states are always kept).
    pub snapshot_stride: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            series_stride: 1,
            snapshot_stride: 100,
        }
    }
}

/// Per-row diagnostics alongside the energy report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    /// Step that produced this state (0 for the initial row).
    pub dt: f64,
    /// `||u_t||_X` with `u_t = -A mu(U)`.
    pub ut_xnorm: f64,
    pub x_dist: Option<f64>,
    pub v_dist: Option<f64>,
    /// `|(m_{n+1} - m_n)/dt - flux(mu(U_{n+1}))|` for the step into this row.
    pub mass_flux_defect: f64,
    /// `max(|mu(U_n)|_inf, |mu(U_{n+1})|_inf)` for that step.
    pub mu_scale: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "t,dt,ut_xnorm,x_dist,v_dist,mass_flux_defect";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { t: f64, dt: f64, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub energy_reports: Vec<EnergyReport>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<(f64, PairField)>,
    pub final_state: PairField,
    pub final_time: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Largest per-step mass/flux defect relative to `dt * mu_scale`,
    /// over all steps (not only recorded rows).
    pub max_mass_flux_ratio: f64,
    /// Largest relative energy increase over all steps.
    pub max_energy_increase: f64,
    pub status: RunStatus,
}

impl TrajectoryRecord {
    pub fn x_dist_to_ref(&self) -> Option<Vec<f64>> {
        self.diagnostics.iter().map(|d| d.x_dist).collect()
    }

    pub fn v_dist_to_ref(&self) -> Option<Vec<f64>> {
        self.diagnostics.iter().map(|d| d.v_dist).collect()
    }

    pub fn ut_xnorm(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.ut_xnorm).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.energy_reports.iter().map(|r| r.e_total).collect()
    }
}

fn mu_of(model: &EnergyModel, u: &PairField) -> Result<PairField> {
    model.chemical_potential(u)
}

fn row(
    model: &EnergyModel,
    u: &PairField,
    t: f64,
    reference: Option<&PairField>,
) -> Result<(EnergyReport, StepDiagnostics)> {
    let op = model.op();
    let report = model.report(u)?;
    let mu = mu_of(model, u)?;
    let ut = op.apply(&mu)?;
    let ut_xnorm = op.x_norm(&ut)?;
    let (x_dist, v_dist) = match reference {
        Some(psi) => {
            let d = u.sub(psi);
            (Some(op.x_norm(&d)?), Some(op.v_norm(&d)))
        }
        None => (None, None),
    };
    Ok((
        report,
        StepDiagnostics {
            t,
            dt: 0.0,
            ut_xnorm,
            x_dist,
            v_dist,
            mass_flux_defect: 0.0,
            mu_scale: mu.max_abs(),
        },
    ))
}

/// Integrates from `u0` to `cfg.t_end`. Stepper failures end the run early
/// with [`RunStatus::Aborted`] and the last accepted state kept.
pub fn evolve(
    model: &EnergyModel,
    u0: &PairField,
    stepper_cfg: StepperConfig,
    cfg: EvolveConfig,
    reference: Option<&PairField>,
) -> Result<TrajectoryRecord> {
    model.grid().check(u0)?;
    if let Some(psi) = reference {
        model.grid().check(psi)?;
    }
    if !(cfg.t_end > 0.0) || cfg.series_stride == 0 {
        return Err(Error::param("t_end", "need t_end > 0 and a positive series stride"));
    }
    let mut stepper = Stepper::new(model, stepper_cfg)?;
    let (r0, d0) = row(model, u0, 0.0, reference)?;
    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        energy_reports: vec![r0],
        diagnostics: vec![d0],
        snapshots: vec![(0.0, u0.clone())],
        final_state: u0.clone(),
        final_time: 0.0,
        steps: 0,
        rejected_steps: 0,
        max_mass_flux_ratio: 0.0,
        max_energy_increase: f64::NEG_INFINITY,
        status: RunStatus::Completed,
    };
    let mut u = u0.clone();
    let mut t = 0.0;
    let mut e = model.energy(&u)?;
    let mut mass = model.mass_total(&u);
    let mut mu_n_scale = mu_of(model, &u)?.max_abs();
    // relative tolerance on the final time so rounding in t never adds a
    // sliver step
    let t_tol = 1e-9 * stepper_cfg.dt;
    while t < cfg.t_end - t_tol {
        let remaining = cfg.t_end - t;
        if stepper.dt() > remaining {
            stepper.dt = remaining;
        }
        let out = match stepper.step(&u) {
            Ok(o) => o,
            Err(err) => {
                let (err, dt) = match err {
                    Error::GuardAbort { dt, .. } => (Error::GuardAbort { t, dt }, dt),
                    other => (other, stepper.dt()),
                };
                log::warn!("run aborted at t = {t}: {err}");
                rec.status = RunStatus::Aborted {
                    t,
                    dt,
                    reason: err.to_string(),
                };
                break;
            }
        };
        rec.steps += 1;
        rec.rejected_steps += out.rejected;
        t = if (cfg.t_end - (t + out.dt)).abs() <= t_tol {
            cfg.t_end
        } else {
            t + out.dt
        };
        let e_next = model.energy(&out.state)?;
        rec.max_energy_increase = rec
            .max_energy_increase
            .max((e_next - e) / (1.0 + e.abs()));
        let mu_next = mu_of(model, &out.state)?;
        let mass_next = model.mass_total(&out.state);
        let defect = ((mass_next - mass) / out.dt - model.flux(&mu_next)).abs();
        let mu_scale = mu_n_scale.max(mu_next.max_abs());
        if mu_scale > 0.0 {
            rec.max_mass_flux_ratio = rec.max_mass_flux_ratio.max(defect / (out.dt * mu_scale));
        }
        u = out.state;
        e = e_next;
        mass = mass_next;
        mu_n_scale = mu_next.max_abs();
        if rec.steps % cfg.series_stride == 0 || t >= cfg.t_end {
            let (r, mut d) = row(model, &u, t, reference)?;
            d.dt = out.dt;
            d.mass_flux_defect = defect;
            d.mu_scale = mu_scale;
            rec.times.push(t);
            rec.energy_reports.push(r);
            rec.diagnostics.push(d);
        }
        if cfg.snapshot_stride > 0 && rec.steps % cfg.snapshot_stride == 0 && t < cfg.t_end {
            rec.snapshots.push((t, u.clone()));
        }
    }
    if rec.snapshots.last().map(|s| s.0) != Some(t) {
        rec.snapshots.push((t, u.clone()));
    }
    if rec.steps == 0 {
        rec.max_energy_increase = 0.0;
    }
    rec.final_state = u;
    rec.final_time = t;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StripGrid;
    use crate::operators::{Constants, WentzellOperator};
    use crate::potential::Potential;

    fn model(nx: usize, ny: usize) -> EnergyModel {
        let g = StripGrid::strip(1.0, 1.0, nx, ny).unwrap();
        let op = WentzellOperator::new(g, Constants::default()).unwrap();
        EnergyModel::new(op, Potential::double_well()).unwrap()
    }

    #[test]
    fn zero_is_a_fixed_point_of_both_schemes() {
        let m = model(8, 8);
        let u = PairField::zeros(m.grid());
        for scheme in [Scheme::StabilizedSemiImplicit, Scheme::NewtonImplicit] {
            let cfg = StepperConfig {
                scheme,
                ..Default::default()
            };
            let mut s = Stepper::new(&m, cfg).unwrap();
            let out = s.step(&u).unwrap();
            assert_eq!(out.state.max_abs(), 0.0);
            assert!(out.iterations <= 1);
        }
    }

    #[test]
    fn unit_field_loses_mass_through_the_wall() {
        let m = model(6, 6);
        let u = PairField::constant(m.grid(), 1.0);
        let mut s = Stepper::new(&m, StepperConfig::default()).unwrap();
        let v = s.step(&u).unwrap().state;
        assert!(m.energy(&v).unwrap() < m.energy(&u).unwrap());
        assert!(m.mass_total(&v) < m.mass_total(&u));
        for &k in m.grid().boundary_nodes() {
            assert!(v.values()[k] < 1.0);
        }
    }

    #[test]
    fn constant_trajectory_from_zero() {
        let m = model(8, 8);
        let u = PairField::zeros(m.grid());
        let rec = evolve(
            &m,
            &u,
            StepperConfig::default(),
            EvolveConfig {
                t_end: 0.01,
                series_stride: 1,
                snapshot_stride: 3,
            },
            None,
        )
        .unwrap();
        assert_eq!(rec.steps, 10);
        assert_eq!(rec.status, RunStatus::Completed);
        assert_eq!(*rec.times.last().unwrap(), 0.01);
        for r in &rec.energy_reports {
            assert!((r.e_total - 0.25).abs() < 1e-15);
        }
        assert!(rec.x_dist_to_ref().is_none());
    }

    #[test]
    fn guard_halves_dt_and_aborts_below_minimum() {
        let m = model(6, 6);
        let u = PairField::from_fn(m.grid(), |x, y| (6.0 * x).sin() * (1.0 + y));
        // negative stabilization is rejected; a zero one with huge dt can
        // violate the guard and must be cut back
        let cfg = StepperConfig {
            dt: 10.0,
            stabilization: Some(0.0),
            dt_min: 5.0,
            ..Default::default()
        };
        let mut s = Stepper::new(&m, cfg).unwrap();
        match s.step(&u) {
            Ok(out) => assert!(m.energy(&out.state).unwrap() <= m.energy(&u).unwrap() + 1e-12),
            Err(e) => assert!(matches!(e, Error::GuardAbort { .. })),
        }
        let bad = StepperConfig {
            stabilization: Some(-1.0),
            ..Default::default()
        };
        assert!(Stepper::new(&m, bad).is_err());
    }
}
