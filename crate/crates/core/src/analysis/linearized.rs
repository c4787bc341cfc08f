//! The linearization of the chemical potential about `psi + v`.

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::PairField;
use crate::sparse::Csr;

/// `L(v) h = M^{-1} J h` with `J = K_E + W diag f'(psi + v)`: the bulk rows
/// are `-Lap h + f'(psi + v) h`, the wall rows carry
/// `-alpha LB h + dnu h + beta h`. `L(v)` is self-adjoint in the pairing
/// `<x, y>_M`, because `M L = J` is symmetric.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    jac: Csr,
    mass: Vec<f64>,
    base: PairField,
    perturbation: PairField,
    lower_bound: f64,
}

impl LinearizedOperator {
    pub fn assemble(model: &EnergyModel, psi: &PairField, v: &PairField) -> Result<Self> {
        let grid = model.grid();
        grid.check(psi)?;
        grid.check(v)?;
        let at = psi.add(v);
        let pot = model.potential();
        let slope: Vec<f64> = at.values().iter().map(|&s| pot.f_prime(s)).collect();
        let mut l = Self::with_slope(model, &slope)?;
        l.base = psi.clone();
        l.perturbation = v.clone();
        Ok(l)
    }

    /// `M^{-1} (K_E + W diag slope)` for an arbitrary nodal slope in place of
    /// `f'(psi + v)`; base point and perturbation are recorded as zero.
    pub fn with_slope(model: &EnergyModel, slope: &[f64]) -> Result<Self> {
        let grid = model.grid();
        let zero = PairField::zeros(grid);
        if slope.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: slope.len(),
            });
        }
        let w = &model.op().forms().bulk_mass;
        let mass = model.op().mass().to_vec();
        let diag: Vec<f64> = w.iter().zip(slope).map(|(w, s)| w * s).collect();
        // K_E is positive semidefinite, so the Rayleigh quotient of L is at
        // least the smallest weighted slope (or zero)
        let lower_bound = diag
            .iter()
            .zip(&mass)
            .map(|(d, m)| d / m)
            .fold(0.0_f64, f64::min);
        Ok(Self {
            jac: model.quadratic_part().add_diagonal(&diag),
            mass,
            base: zero.clone(),
            perturbation: zero,
            lower_bound,
        })
    }

    /// A guaranteed lower bound on the spectrum of `L`.
    pub fn spectral_lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// The symmetric form `J = M L`.
    pub fn form(&self) -> &Csr {
        &self.jac
    }

    /// The pairing weights in which `L` is self-adjoint.
    pub fn h_weights(&self) -> &[f64] {
        &self.mass
    }

    pub fn base_point(&self) -> &PairField {
        &self.base
    }

    pub fn perturbation(&self) -> &PairField {
        &self.perturbation
    }

    /// `L` as an explicit (nonsymmetric) matrix.
    pub fn matrix(&self) -> Csr {
        let inv: Vec<f64> = self.mass.iter().map(|m| 1.0 / m).collect();
        self.jac.scaled_rows(&inv)
    }

    pub fn apply(&self, h: &PairField) -> PairField {
        let jh = self.jac.matvec(h.values());
        h.with_values(jh.iter().zip(&self.mass).map(|(j, m)| j / m).collect())
    }

    /// `|| M L - (M L)^T ||_F / || M L ||_F`, computed from the explicit
    /// matrix of `L`.
    pub fn self_adjointness_residual(&self) -> f64 {
        let wl = self.matrix().scaled_rows(&self.mass);
        let scale = wl.frobenius();
        if scale == 0.0 {
            0.0
        } else {
            wl.asymmetry() / scale
        }
    }
}
