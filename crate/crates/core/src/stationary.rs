//! Equilibria: critical points of the discrete energy, found by descent and
//! polished by Newton's method, and identification of a trajectory's limit.

use serde::Serialize;

use crate::analysis::{spectrum, LinearizedOperator};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::PairField;
use crate::sparse::{dot, Factorization};

/// Residual level below which Newton is attempted directly.
pub const DEFAULT_BASIN: f64 = 1e-2;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MinimizeThenNewton,
    NewtonOnly,
    TrajectoryLimit,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSolution {
    #[serde(skip)]
    pub psi: PairField,
    pub energy: f64,
    pub bulk_res: f64,
    pub bdry_res: f64,
    pub method: Method,
    pub newton_iters: usize,
    /// `bulk_res + bdry_res` before each Newton iteration and at the end.
    pub residual_history: Vec<f64>,
    /// Order estimate `log(r2/r1) / log(r1/r0)` from the last three
    /// residuals above rounding level.
    pub convergence_order: Option<f64>,
    pub converged: bool,
    /// Dimension of the Jacobian's numerical kernel, when a singular
    /// Jacobian stopped the iteration.
    pub kernel_dim: Option<usize>,
    /// `||u_final - psi||_X` for limits of trajectories.
    pub distance_x: Option<f64>,
}

impl EquilibriumSolution {
    pub fn residual(&self) -> f64 {
        self.bulk_res + self.bdry_res
    }

    /// Ratio test on the final (up to three) Newton steps: every step above
    /// rounding level contracts by at least 10 and the ratios
    /// `r_{k+1} / r_k^2` do not grow by more than a factor 10; a step that
    /// lands on the rounding floor is consistent with any rate.
    pub fn is_quadratic(&self) -> bool {
        quadratic_ratio_test(&self.residual_history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when `||mu||_H <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// At gradient-converged points, step along a direction of negative
    /// curvature if one exists, and continue.
    pub escape_saddles: bool,
    pub max_escapes: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 5000,
            memory: 10,
            escape_saddles: true,
            max_escapes: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub u: PairField,
    pub energy: f64,
    /// `||mu(u)||_H` at the returned point.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub escapes: usize,
    /// Smallest Hessian eigenvalue at the last curvature check.
    pub lambda_min: Option<f64>,
    /// Energies of the accepted iterates, starting with the initial one.
    pub energy_history: Vec<f64>,
}

fn mu_norm(model: &EnergyModel, g: &[f64]) -> f64 {
    g.iter()
        .zip(model.op().mass())
        .map(|(g, m)| g * g / m)
        .sum::<f64>()
        .sqrt()
}

/// Limited-memory quasi-Newton descent on the discrete energy. The gradient
/// is `mu` (in the weighted pairing); the initial inverse Hessian is the
/// inverse of the quadratic part plus the pairing weights, which removes the
/// grid-dependent stiffness of the Laplacian.
pub fn minimize_energy(
    model: &EnergyModel,
    u_init: &PairField,
    opts: MinimizeOptions,
) -> Result<MinimizeResult> {
    model.grid().check(u_init)?;
    let mass = model.op().mass();
    let precond = Factorization::cholesky(&model.quadratic_part().add_diagonal(mass))?;
    let mut u = u_init.clone();
    let mut g = model.gradient(&u)?;
    let mut energy = model.energy(&u)?;
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut energy_history = vec![energy];
    let mut escapes = 0;
    let mut lambda_min = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if mu_norm(model, &g) <= opts.tol {
            if !opts.escape_saddles || escapes >= opts.max_escapes {
                converged = true;
                break;
            }
            let zero = u.with_values(vec![0.0; u.len()]);
            let lin = LinearizedOperator::assemble(model, &u, &zero)?;
            let spec = spectrum(&lin, 1)?;
            let lam = spec.lambda_min();
            lambda_min = Some(lam);
            if lam >= -spec.kernel_tol * spec.max_abs {
                converged = true;
                break;
            }
            let phi = &spec.eigenvectors[0];
            let mut a = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let mut trial = u.clone();
                trial.axpy(a, phi);
                let gap = model.energy_gap(&trial, &u)?;
                if gap < 0.0 {
                    log::info!("escaping saddle (lambda_min = {lam:.3e}) with step {a:.3e}");
                    u = trial;
                    energy += gap;
                    moved = true;
                    break;
                }
                a *= 0.5;
            }
            if !moved {
                converged = true;
                break;
            }
            escapes += 1;
            g = model.gradient(&u)?;
            energy_history.push(energy);
            history.clear();
            continue;
        }
        // two-loop recursion with the preconditioner as initial inverse
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
            alphas.push(a);
        }
        let mut r = precond.solve(&q)?;
        if let Some((s, y, _)) = history.last() {
            let py = precond.solve(y)?;
            let gamma = dot(s, y) / dot(y, &py);
            r.iter_mut().for_each(|r| *r *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &r);
            r.iter_mut().zip(s).for_each(|(r, s)| *r += (a - b) * s);
        }
        let mut d: Vec<f64> = r.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = precond.solve(&g)?.into_iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut a = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = u.with_values(u.values().iter().zip(&d).map(|(u, d)| u + a * d).collect());
            let gap = model.energy_gap(&trial, &u)?;
            if gap <= 1e-4 * a * slope {
                accepted = Some((trial, gap));
                break;
            }
            a *= 0.5;
        }
        let Some((next, gap)) = accepted else {
            log::debug!("line search stalled at ||mu|| = {:e}", mu_norm(model, &g));
            break;
        };
        let g_next = model.gradient(&next)?;
        let s: Vec<f64> = d.iter().map(|d| a * d).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        u = next;
        g = g_next;
        energy += gap;
        energy_history.push(energy);
        iterations += 1;
    }
    let grad_norm = mu_norm(model, &g);
    converged = converged || grad_norm <= opts.tol;
    Ok(MinimizeResult {
        energy: model.energy(&u)?,
        u,
        grad_norm,
        iterations,
        converged,
        escapes,
        lambda_min,
        energy_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Target for `bulk_res + bdry_res`.
    pub tol: f64,
    /// Largest starting residual accepted.
    pub basin: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            basin: DEFAULT_BASIN,
            max_iter: 30,
        }
    }
}

/// Relative rounding level of a residual sum, used to ignore stagnated
/// entries when estimating the convergence order.
const ORDER_FLOOR: f64 = 1e-13;

fn floor_of(history: &[f64]) -> f64 {
    ORDER_FLOOR * history.first().copied().unwrap_or(0.0).max(1.0)
}

pub(crate) fn quadratic_ratio_test(history: &[f64]) -> bool {
    let floor = floor_of(history);
    let tail = &history[history.len().saturating_sub(4)..];
    let mut ratios = Vec::new();
    for w in tail.windows(2) {
        let (r0, r1) = (w[0], w[1]);
        if r0 <= floor {
            break;
        }
        if r1 <= floor {
            ratios.push(None);
            break;
        }
        if r1 > 0.1 * r0 {
            return false;
        }
        ratios.push(Some(r1 / (r0 * r0)));
    }
    let finite: Vec<f64> = ratios.iter().flatten().copied().collect();
    if ratios.is_empty() {
        return false;
    }
    match (finite.first(), finite.last()) {
        (Some(first), Some(last)) => *last <= 10.0 * first,
        _ => true,
    }
}

fn order_estimate(history: &[f64]) -> Option<f64> {
    let floor = floor_of(history);
    let usable: Vec<f64> = history.iter().copied().filter(|&r| r > floor).collect();
    if usable.len() < 3 {
        return None;
    }
    let n = usable.len();
    let (r0, r1, r2) = (usable[n - 3], usable[n - 2], usable[n - 1]);
    if !(r1 < r0 && r2 < r1) {
        return None;
    }
    Some((r2 / r1).ln() / (r1 / r0).ln())
}

/// Newton's method on `grad E(U) = 0` with the Jacobian `K_E + W f'(u)`.
pub fn newton_refine(
    model: &EnergyModel,
    u_init: &PairField,
    opts: NewtonOptions,
) -> Result<EquilibriumSolution> {
    model.grid().check(u_init)?;
    let mut u = u_init.clone();
    let mut g = model.gradient(&u)?;
    let (b0, s0) = model.residuals_from_gradient(&g);
    if b0 + s0 > opts.basin {
        return Err(Error::Precondition(format!(
            "starting residual {:e} exceeds the Newton basin threshold {:e}; minimize first",
            b0 + s0,
            opts.basin
        )));
    }
    let mut history = vec![b0 + s0];
    let mut iters = 0;
    let mut kernel_dim = None;
    while history.last().copied().unwrap_or(0.0) > opts.tol && iters < opts.max_iter {
        let jac = model.hessian(&u)?;
        let step = Factorization::lu(&jac).and_then(|f| f.solve(&g));
        let du = match step {
            Ok(du) => du,
            Err(Error::Factorization(msg)) => {
                log::warn!("singular Jacobian at residual {:e}: {msg}", history.last().unwrap());
                let zero = u.with_values(vec![0.0; u.len()]);
                let lin = LinearizedOperator::assemble(model, &u, &zero)?;
                kernel_dim = Some(spectrum(&lin, 1)?.kernel_dim);
                break;
            }
            Err(e) => return Err(e),
        };
        u = u.with_values(u.values().iter().zip(&du).map(|(u, d)| u - d).collect());
        g = model.gradient(&u)?;
        let (b, s) = model.residuals_from_gradient(&g);
        history.push(b + s);
        iters += 1;
        if b + s > 10.0 * opts.basin {
            break;
        }
    }
    let (bulk_res, bdry_res) = model.residuals_from_gradient(&g);
    Ok(EquilibriumSolution {
        energy: model.energy(&u)?,
        psi: u,
        bulk_res,
        bdry_res,
        method: Method::NewtonOnly,
        newton_iters: iters,
        convergence_order: order_estimate(&history),
        residual_history: history,
        converged: bulk_res + bdry_res <= opts.tol,
        kernel_dim,
        distance_x: None,
    })
}

/// Descent to the basin of a critical point, then Newton polishing.
pub fn find_equilibrium(
    model: &EnergyModel,
    u_init: &PairField,
    min_opts: MinimizeOptions,
    newton: NewtonOptions,
) -> Result<(MinimizeResult, EquilibriumSolution)> {
    let min = minimize_energy(model, u_init, min_opts)?;
    let mut sol = newton_refine(model, &min.u, newton)?;
    sol.method = Method::MinimizeThenNewton;
    Ok((min, sol))
}

/// Identifies the equilibrium a trajectory approaches by Newton's method
/// from its final state.
pub fn omega_limit(
    model: &EnergyModel,
    traj_final: &PairField,
    opts: NewtonOptions,
) -> Result<EquilibriumSolution> {
    let (b, s) = model.stationary_residual(traj_final)?;
    let mut sol = match newton_refine(model, traj_final, opts) {
        Ok(sol) => sol,
        Err(Error::Precondition(_)) => {
            return Err(Error::Precondition(format!(
                "trajectory is not yet near an equilibrium (residual {:e} > {:e}); run longer",
                b + s,
                opts.basin
            )))
        }
        Err(e) => return Err(e),
    };
    if !sol.converged {
        return Err(Error::Precondition(format!(
            "newton from the final state stalled at residual {:e}; run longer",
            sol.residual()
        )));
    }
    sol.method = Method::TrajectoryLimit;
    sol.distance_x = Some(model.op().x_norm(&traj_final.sub(&sol.psi))?);
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StripGrid;
    use crate::operators::{Constants, WentzellOperator};
    use crate::potential::Potential;

    fn model(lx: f64, ly: f64, nx: usize, ny: usize) -> EnergyModel {
        let g = StripGrid::strip(lx, ly, nx, ny).unwrap();
        let op = WentzellOperator::new(g, Constants::default()).unwrap();
        EnergyModel::new(op, Potential::double_well()).unwrap()
    }

    #[test]
    fn zero_is_recovered_exactly() {
        let m = model(1.0, 1.0, 8, 8);
        let z = PairField::zeros(m.grid());
        let sol = newton_refine(&m, &z, NewtonOptions::default()).unwrap();
        assert_eq!(sol.psi.max_abs(), 0.0);
        assert_eq!(sol.newton_iters, 0);
        assert!(sol.converged);
        let min = minimize_energy(&m, &z, MinimizeOptions::default()).unwrap();
        assert_eq!(min.u.max_abs(), 0.0);
        assert!(min.lambda_min.unwrap() > 0.0);
    }

    #[test]
    fn far_start_is_rejected() {
        let m = model(1.0, 1.0, 8, 8);
        let u = PairField::from_fn(m.grid(), |x, _| 2.0 * (6.0 * x).sin());
        let err = newton_refine(&m, &u, NewtonOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn descent_never_increases_energy() {
        let m = model(1.0, 1.0, 8, 8);
        let u = PairField::from_fn(m.grid(), |x, y| 0.8 * (6.0 * x).sin() + y - 0.5);
        let r = minimize_energy(&m, &u, MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let sol = newton_refine(&m, &r.u, NewtonOptions::default()).unwrap();
        assert!(sol.residual() <= 1e-8);
    }

    #[test]
    fn order_estimate_of_quadratic_sequence() {
        let h = [1e-2, 1e-4, 1e-8];
        assert!((order_estimate(&h).unwrap() - 2.0).abs() < 1e-12);
        assert!(order_estimate(&[1e-2, 1e-4]).is_none());
    }

    #[test]
    fn ratio_test_separates_quadratic_from_linear() {
        assert!(quadratic_ratio_test(&[1e-4, 3e-10, 8e-14]));
        assert!(quadratic_ratio_test(&[1e-1, 1e-3, 1e-7, 1e-14]));
        assert!(!quadratic_ratio_test(&[1e-2, 5e-3, 2.5e-3]));
        assert!(!quadratic_ratio_test(&[1e-2, 1e-4, 1e-6, 1e-8]));
        assert!(!quadratic_ratio_test(&[0.0]));
    }
}
