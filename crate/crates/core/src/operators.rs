//! Discrete differential operators and the Wentzell operator `A`.
//!
//! All quadratic forms are assembled edge by edge, so every symmetric
//! identity below holds to rounding:
//!
//! * `G`: bulk Dirichlet form, `u^T G u ~ int |grad u|^2 dx`
//! * `T`: tangential form on the walls, `u^T T u ~ int |grad_par u|^2 dS`
//! * `S`: diagonal wall mass, `u^T S u ~ int u^2 dS`
//! * `W`: diagonal bulk mass
//!
//! With pairing weights `M = W + S / b` and stiffness `K = G + (c / b) S`,
//! the Wentzell operator is `A = M^{-1} K`, so `<A u, v>_M = u^T K v` exactly.
//! Interior rows of `A` are the 5-point (3-point in 1-D) negative Laplacian.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMode, PairField, StripGrid};
use crate::sparse::{wdot, Builder, Csr, Factorization};

/// Positive constants of the boundary conditions: `alpha`, `beta` weight the
/// surface energy, `b`, `c` enter the Wentzell condition for `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            b: 1.0,
            c: 1.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("b", self.b),
            ("c", self.c),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(
                    name,
                    format!("must be a strictly positive constant, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// The elementary forms of a grid.
#[derive(Debug, Clone)]
pub struct Forms {
    pub grad: Csr,
    pub tangential: Csr,
    pub bulk_mass: Vec<f64>,
    pub surface_mass: Vec<f64>,
}

impl Forms {
    pub fn new(grid: &StripGrid) -> Self {
        let n = grid.len();
        let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
        let mut grad = Builder::new(n);
        for j in 0..ny - 1 {
            for i in 0..nx {
                grad.edge(grid.idx(i, j), grid.idx(i, j + 1), hx / hy);
            }
        }
        let mut tangential = Builder::new(n);
        if grid.mode() == GridMode::Strip2D {
            for j in 0..ny {
                let wy = if grid.is_wall_row(j) { 0.5 * hy } else { hy };
                for i in 0..nx {
                    let (p, q) = (grid.idx(i, j), grid.idx((i + 1) % nx, j));
                    grad.edge(p, q, wy / hx);
                    if grid.is_wall_row(j) {
                        tangential.edge(p, q, 1.0 / hx);
                    }
                }
            }
        }
        Self {
            grad: grad.build(),
            tangential: tangential.build(),
            bulk_mass: grid.bulk_weights().to_vec(),
            surface_mass: grid.surface_mass().to_vec(),
        }
    }

    /// Hessian of the quadratic part of the free energy: `G + alpha T + beta S`.
    pub fn energy_stiffness(&self, consts: &Constants) -> Csr {
        self.grad
            .combine(1.0, &self.tangential, consts.alpha)
            .add_diagonal(
                &self
                    .surface_mass
                    .iter()
                    .map(|s| consts.beta * s)
                    .collect::<Vec<_>>(),
            )
    }

    /// `||u||_V^2 = int |grad u|^2 dx + int (|grad_par u|^2 + u^2) dS`
    pub fn v_norm(&self, u: &[f64]) -> f64 {
        let q = self.grad.form(u, u)
            + self.tangential.form(u, u)
            + wdot(&self.surface_mass, u, u);
        q.max(0.0).sqrt()
    }

    /// `int |grad u|^2 dx + int u^2 dS`, the equivalent H^1 norm.
    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        (self.grad.form(u, u) + wdot(&self.surface_mass, u, u))
            .max(0.0)
            .sqrt()
    }
}

/// Pointwise Laplacian. Interior nodes use the standard 5-point (3-point)
/// stencil; wall rows use a one-sided second-order difference across the
/// wall, for diagnostics that need a value of `Delta u` on Gamma.
pub fn laplacian(grid: &StripGrid, u: &PairField) -> Result<Vec<f64>> {
    grid.check(u)?;
    let v = u.values();
    let (hx, hy, ny) = (grid.hx(), grid.hy(), grid.ny());
    let strip = grid.mode() == GridMode::Strip2D;
    let out = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let xx = if strip {
                (v[grid.east(k)] - 2.0 * v[k] + v[grid.west(k)]) / (hx * hx)
            } else {
                0.0
            };
            let yy = if j == 0 {
                let c = |s| v[grid.idx(i, s)];
                (2.0 * c(0) - 5.0 * c(1) + 4.0 * c(2) - c(3)) / (hy * hy)
            } else if j == ny - 1 {
                let c = |s| v[grid.idx(i, ny - 1 - s)];
                (2.0 * c(0) - 5.0 * c(1) + 4.0 * c(2) - c(3)) / (hy * hy)
            } else {
                (v[grid.idx(i, j + 1)] - 2.0 * v[k] + v[grid.idx(i, j - 1)]) / (hy * hy)
            };
            xx + yy
        })
        .collect();
    Ok(out)
}

/// Laplace-Beltrami operator along the walls: the periodic second
/// difference on a strip, identically zero on an interval.
pub fn laplace_beltrami(grid: &StripGrid, u: &PairField) -> Result<Vec<f64>> {
    grid.check(u)?;
    let v = u.values();
    let hx = grid.hx();
    Ok(grid
        .boundary_nodes()
        .iter()
        .map(|&k| match grid.mode() {
            GridMode::Strip2D => (v[grid.east(k)] - 2.0 * v[k] + v[grid.west(k)]) / (hx * hx),
            GridMode::Interval1D => 0.0,
        })
        .collect())
}

/// Outward normal derivative at each wall node, three-point one-sided.
pub fn normal_derivative(grid: &StripGrid, u: &PairField) -> Result<Vec<f64>> {
    grid.check(u)?;
    let v = u.values();
    let hy = grid.hy();
    Ok(grid
        .boundary_nodes()
        .iter()
        .map(|&k| (3.0 * v[k] - 4.0 * v[grid.inward(k, 1)] + v[grid.inward(k, 2)]) / (2.0 * hy))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    pub h_norm: f64,
    pub v_norm: f64,
    pub x_norm: f64,
    pub h1_equiv_norm: f64,
}

/// The Wentzell operator with its form, pairing weights and a cached
/// factorization of the stiffness. Immutable after construction; solves
/// borrow it shared.
#[derive(Debug)]
pub struct WentzellOperator {
    grid: Arc<StripGrid>,
    consts: Constants,
    forms: Forms,
    stiffness: Csr,
    mass: Vec<f64>,
    factor: Factorization,
    lambda_min: OnceLock<f64>,
}

impl WentzellOperator {
    pub fn new(grid: impl Into<Arc<StripGrid>>, consts: Constants) -> Result<Self> {
        consts.validate()?;
        let grid = grid.into();
        let forms = Forms::new(&grid);
        let ratio = consts.c / consts.b;
        let stiffness = forms
            .grad
            .add_diagonal(&forms.surface_mass.iter().map(|s| ratio * s).collect::<Vec<_>>());
        let mass = forms
            .bulk_mass
            .iter()
            .zip(&forms.surface_mass)
            .map(|(w, s)| w + s / consts.b)
            .collect();
        let factor = Factorization::cholesky(&stiffness)?;
        let op = Self {
            grid,
            consts,
            forms,
            stiffness,
            mass,
            factor,
            lambda_min: OnceLock::new(),
        };
        debug_assert!(op.grid.len() > 4096 || op.lambda_min() > 0.0);
        Ok(op)
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<StripGrid> {
        Arc::clone(&self.grid)
    }

    pub fn constants(&self) -> &Constants {
        &self.consts
    }

    pub fn forms(&self) -> &Forms {
        &self.forms
    }

    /// `K`: the assembled form `a(u, v) = u^T K v`.
    pub fn stiffness(&self) -> &Csr {
        &self.stiffness
    }

    /// Diagonal pairing weights `M`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `A = M^{-1} K` as an explicit matrix.
    pub fn a_matrix(&self) -> Csr {
        let inv: Vec<f64> = self.mass.iter().map(|m| 1.0 / m).collect();
        self.stiffness.scaled_rows(&inv)
    }

    pub fn apply(&self, u: &PairField) -> Result<PairField> {
        self.grid.check(u)?;
        let ku = self.stiffness.matvec(u.values());
        Ok(u.with_values(ku.iter().zip(&self.mass).map(|(k, m)| k / m).collect()))
    }

    /// `a(u, v) = int grad u . grad v dx + (c / b) int u v dS`
    pub fn a_form(&self, u: &PairField, v: &PairField) -> Result<f64> {
        self.grid.check(u)?;
        self.grid.check(v)?;
        Ok(self.stiffness.form(u.values(), v.values()))
    }

    /// `A^{-1} g`, i.e. the solution of `-Delta u = g` in the bulk with
    /// `b dnu u + c u = b g` on the walls.
    pub fn solve(&self, g: &PairField) -> Result<PairField> {
        self.grid.check(g)?;
        let rhs: Vec<f64> = g.values().iter().zip(&self.mass).map(|(g, m)| g * m).collect();
        Ok(g.with_values(self.factor.solve(&rhs)?))
    }

    pub fn inner(&self, u: &PairField, v: &PairField) -> f64 {
        wdot(&self.mass, u.values(), v.values())
    }

    pub fn h_norm(&self, u: &PairField) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// `||v||_X^2 = <A^{-1} v, v>`
    pub fn x_norm(&self, v: &PairField) -> Result<f64> {
        let w = self.solve(v)?;
        Ok(self.inner(&w, v).max(0.0).sqrt())
    }

    /// Second route to the X norm: `||v||_X^2 = a(w, w)` with `w = A^{-1} v`.
    pub fn x_norm_by_form(&self, v: &PairField) -> Result<f64> {
        let w = self.solve(v)?;
        Ok(self.a_form(&w, &w)?.max(0.0).sqrt())
    }

    pub fn v_norm(&self, u: &PairField) -> f64 {
        self.forms.v_norm(u.values())
    }

    pub fn h1_norm(&self, u: &PairField) -> f64 {
        self.forms.h1_norm(u.values())
    }

    pub fn norms(&self, u: &PairField) -> Result<NormReport> {
        Ok(NormReport {
            h_norm: self.h_norm(u),
            v_norm: self.v_norm(u),
            x_norm: self.x_norm(u)?,
            h1_equiv_norm: self.h1_norm(u),
        })
    }

    /// Smallest eigenvalue of `A`, by inverse iteration in the `M` inner
    /// product. Computed once.
    pub fn lambda_min(&self) -> f64 {
        *self.lambda_min.get_or_init(|| self.inverse_iteration())
    }

    /// `C_grid = 1 / sqrt(lambda_min(A))`, so `||v||_X <= C_grid ||v||_H`.
    pub fn c_grid(&self) -> f64 {
        1.0 / self.lambda_min().sqrt()
    }

    fn inverse_iteration(&self) -> f64 {
        let n = self.grid.len();
        let mut x: Vec<f64> = (0..n).map(|k| 1.0 + 0.01 * ((k % 7) as f64)).collect();
        let mut lambda = f64::INFINITY;
        for _ in 0..500 {
            let mx: Vec<f64> = x.iter().zip(&self.mass).map(|(a, m)| a * m).collect();
            let Ok(y) = self.factor.solve(&mx) else {
                return f64::NAN;
            };
            let norm = wdot(&self.mass, &y, &y).sqrt();
            x = y.into_iter().map(|v| v / norm).collect();
            let next = self.stiffness.form(&x, &x);
            let done = (next - lambda).abs() <= 1e-14 * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        lambda
    }

    /// Coordinate dump of `A`: one `row col value` line per stored entry.
    pub fn dump_matrix(&self, mut out: impl Write) -> Result<()> {
        let a = self.a_matrix();
        writeln!(out, "# {} {} {}", a.dim(), a.dim(), a.nnz())?;
        for r in 0..a.dim() {
            for (c, v) in a.row(r) {
                writeln!(out, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}
