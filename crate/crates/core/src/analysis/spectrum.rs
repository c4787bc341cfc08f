//! Eigenpairs of the linearized operator in its self-adjoint pairing, the
//! numerical kernel, the orthogonal projections onto kernel and range, and
//! the solution of the (augmented) linearized equation.
//!
//! Eigenproblems are posed as `J x = lambda M x`. Up to [`DENSE_LIMIT`]
//! unknowns the symmetric matrix `M^{-1/2} J M^{-1/2}` is diagonalized
//! densely; beyond that, shift-invert subspace iteration below the
//! spectrum's guaranteed lower bound is used.

use faer::{Mat, Side};
use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::Serialize;

use super::linearized::LinearizedOperator;
use crate::error::{Error, Result};
use crate::grid::PairField;
use crate::sparse::{wdot, Factorization};

pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;
pub const DENSE_LIMIT: usize = 4096;
/// Ratio `max |lambda| / min nonzero |lambda|` above which solves are flagged.
pub const CONDITION_WARN: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    pub kernel_tol: f64,
    pub dense_limit: usize,
    pub max_iter: usize,
    /// Relative eigen-residual required by the iterative path.
    pub tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            kernel_tol: DEFAULT_KERNEL_TOL,
            dense_limit: DENSE_LIMIT,
            max_iter: 2000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// No negative and no zero eigenvalues: a strict local minimum.
    Minimum,
    /// At least one negative eigenvalue.
    Saddle,
    /// A nontrivial kernel and no negative eigenvalues.
    Degenerate,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Minimum => "minimum",
            Classification::Saddle => "saddle",
            Classification::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// The `k` smallest algebraic and `k` smallest-magnitude eigenvalues,
    /// merged and ascending.
    pub eigenvalues: Vec<f64>,
    /// `||J x - lambda M x||_{M^{-1}}` of each reported pair.
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    pub kernel_tol: f64,
    pub kernel_dim: usize,
    pub n_negative: usize,
    /// Smallest `|lambda|` outside the kernel.
    pub min_nonzero_abs: f64,
    pub condition: f64,
    pub ill_conditioned: bool,
    /// Whether the full spectrum was computed (dense path); otherwise
    /// counts refer to the computed eigenvalues only.
    pub complete: bool,
    pub method: &'static str,
    pub classification: Classification,
    /// `M`-orthonormal eigenvectors matching `eigenvalues`.
    #[serde(skip)]
    pub eigenvectors: Vec<PairField>,
    /// `M`-orthonormal basis of the numerical kernel.
    #[serde(skip)]
    pub kernel_basis: Vec<PairField>,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl SpectralReport {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    /// Orthogonal projection onto the kernel: `sum_i <phi_i, f> phi_i`.
    pub fn project_kernel(&self, f: &PairField) -> PairField {
        let mut out = f.with_values(vec![0.0; f.len()]);
        for phi in &self.kernel_basis {
            let c = wdot(&self.weights, phi.values(), f.values());
            out.axpy(c, phi);
        }
        out
    }

    /// Orthogonal projection onto the range, `I - Pi_K`.
    pub fn project_range(&self, f: &PairField) -> PairField {
        f.sub(&self.project_kernel(f))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn eigen_residual(l: &LinearizedOperator, lambda: f64, x: &[f64]) -> f64 {
    let jx = l.form().matvec(x);
    let m = l.h_weights();
    jx.iter()
        .zip(x)
        .zip(m)
        .map(|((j, x), m)| {
            let r = j - lambda * m * x;
            r * r / m
        })
        .sum::<f64>()
        .sqrt()
}

/// Fixes the sign of an eigenvector so its largest entry is positive.
fn normalize_sign(x: &mut [f64]) {
    let mut best = 0.0_f64;
    for &v in x.iter() {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

fn select(all: &[f64], k: usize) -> Vec<usize> {
    let n = all.len();
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..k).collect();
    let mut by_abs: Vec<usize> = (0..n).collect();
    by_abs.sort_by(|&a, &b| all[a].abs().total_cmp(&all[b].abs()).then(a.cmp(&b)));
    idx.extend(by_abs.into_iter().take(k));
    idx.sort_unstable();
    idx.dedup();
    idx
}

pub fn spectrum(l: &LinearizedOperator, k: usize) -> Result<SpectralReport> {
    spectrum_with(l, k, SpectrumOptions::default())
}

pub fn spectrum_with(
    l: &LinearizedOperator,
    k: usize,
    opts: SpectrumOptions,
) -> Result<SpectralReport> {
    let n = l.dim();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("need 1 <= k <= {n}")));
    }
    if n <= opts.dense_limit {
        dense(l, k, opts)
    } else {
        shift_invert(l, k, opts)
    }
}

struct Pairs {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn finish(
    l: &LinearizedOperator,
    k: usize,
    opts: SpectrumOptions,
    pairs: Pairs,
    max_abs: f64,
    complete: bool,
    method: &'static str,
) -> SpectralReport {
    let threshold = opts.kernel_tol * max_abs;
    let template = l.base_point();
    let chosen = select(&pairs.values, k);
    let mut eigenvalues = Vec::new();
    let mut residuals = Vec::new();
    let mut eigenvectors = Vec::new();
    for &i in &chosen {
        eigenvalues.push(pairs.values[i]);
        residuals.push(eigen_residual(l, pairs.values[i], &pairs.vectors[i]));
        eigenvectors.push(template.with_values(pairs.vectors[i].clone()));
    }
    let mut kernel_basis = Vec::new();
    let mut n_negative = 0;
    let mut min_nonzero_abs = f64::INFINITY;
    for (i, &lam) in pairs.values.iter().enumerate() {
        if lam.abs() <= threshold {
            kernel_basis.push(template.with_values(pairs.vectors[i].clone()));
        } else {
            min_nonzero_abs = min_nonzero_abs.min(lam.abs());
            if lam < 0.0 {
                n_negative += 1;
            }
        }
    }
    let condition = if max_abs > 0.0 {
        max_abs / min_nonzero_abs
    } else {
        f64::INFINITY
    };
    let ill_conditioned = condition >= CONDITION_WARN;
    if ill_conditioned {
        log::warn!(
            "linearized operator is nearly singular: condition estimate {condition:e} \
             (smallest nonzero |lambda| = {min_nonzero_abs:e})"
        );
    }
    let classification = if n_negative > 0 {
        Classification::Saddle
    } else if !kernel_basis.is_empty() {
        Classification::Degenerate
    } else {
        Classification::Minimum
    };
    SpectralReport {
        eigenvalues,
        residuals,
        max_abs,
        kernel_tol: opts.kernel_tol,
        kernel_dim: kernel_basis.len(),
        n_negative,
        min_nonzero_abs,
        condition,
        ill_conditioned,
        complete,
        method,
        classification,
        eigenvectors,
        kernel_basis,
        weights: l.h_weights().to_vec(),
    }
}

fn dense(l: &LinearizedOperator, k: usize, opts: SpectrumOptions) -> Result<SpectralReport> {
    let n = l.dim();
    let d: Vec<f64> = l.h_weights().iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut b = Mat::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, v) in l.form().row(r) {
            b[(r, c)] += d[r] * v * d[c];
        }
    }
    let eig = b
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let values: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let vectors = (0..n)
        .map(|i| {
            let mut x: Vec<f64> = (0..n).map(|r| d[r] * u[(r, i)]).collect();
            normalize_sign(&mut x);
            x
        })
        .collect();
    let max_abs = values[0].abs().max(values[n - 1].abs());
    Ok(finish(
        l,
        k,
        opts,
        Pairs { values, vectors },
        max_abs,
        true,
        "dense",
    ))
}

/// `M`-orthonormalizes the columns in place (modified Gram-Schmidt, twice).
fn m_orthonormalize(cols: &mut [Vec<f64>], m: &[f64]) {
    for i in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = cols.split_at_mut(i);
                let c = wdot(m, &head[j], &tail[0]);
                for (t, h) in tail[0].iter_mut().zip(&head[j]) {
                    *t -= c * h;
                }
            }
        }
        let norm = wdot(m, &cols[i], &cols[i]).sqrt();
        cols[i].iter_mut().for_each(|v| *v /= norm);
    }
}

/// Power-iteration estimate of `max |lambda|` (a lower bound, typically
/// within a few percent); it only sets the scale of the kernel threshold.
fn largest_abs_estimate(l: &LinearizedOperator) -> f64 {
    let n = l.dim();
    let m = l.h_weights();
    let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -0.7 }).collect();
    let mut lam = 0.0;
    for _ in 0..300 {
        let y: Vec<f64> = l.form().matvec(&x).iter().zip(m).map(|(j, m)| j / m).collect();
        let norm = wdot(m, &y, &y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / norm).collect();
        // Rayleigh quotient in the M pairing
        lam = l.form().form(&x, &x).abs() / wdot(m, &x, &x);
    }
    lam
}

fn shift_invert(l: &LinearizedOperator, k: usize, opts: SpectrumOptions) -> Result<SpectralReport> {
    let n = l.dim();
    let m = l.h_weights();
    let lb = l.spectral_lower_bound();
    let sigma = lb - 0.05 * (1.0 + lb.abs());
    let shifted = l
        .form()
        .add_diagonal(&m.iter().map(|m| -sigma * m).collect::<Vec<_>>());
    let fac = Factorization::cholesky(&shifted)?;
    let p = (2 * k + 8).min(n);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5eed);
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    m_orthonormalize(&mut cols, m);
    let max_abs = largest_abs_estimate(l);
    let mut ritz = Pairs {
        values: vec![],
        vectors: vec![],
    };
    let mut worst = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut next: Vec<Vec<f64>> = cols
            .iter()
            .map(|x| {
                let mx: Vec<f64> = x.iter().zip(m).map(|(x, m)| x * m).collect();
                fac.solve(&mx)
            })
            .collect::<Result<_>>()?;
        m_orthonormalize(&mut next, m);
        // Rayleigh-Ritz on span(next)
        let jq: Vec<Vec<f64>> = next.iter().map(|q| l.form().matvec(q)).collect();
        let mut small = Mat::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                small[(i, j)] = next[i].iter().zip(&jq[j]).map(|(a, b)| a * b).sum();
            }
        }
        for i in 0..p {
            for j in 0..i {
                let avg = 0.5 * (small[(i, j)] + small[(j, i)]);
                small[(i, j)] = avg;
                small[(j, i)] = avg;
            }
        }
        let eig = small
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = eig.S().column_vector();
        let v = eig.U();
        cols = (0..p)
            .map(|c| {
                let mut x = vec![0.0; n];
                for (i, q) in next.iter().enumerate() {
                    let coef = v[(i, c)];
                    for (x, q) in x.iter_mut().zip(q) {
                        *x += coef * q;
                    }
                }
                x
            })
            .collect();
        let values: Vec<f64> = (0..p).map(|i| s[i]).collect();
        let wanted = select(&values[..p.min(2 * k + 2)], k);
        worst = wanted
            .iter()
            .map(|&i| eigen_residual(l, values[i], &cols[i]) / (1.0 + max_abs))
            .fold(0.0, f64::max);
        ritz = Pairs {
            values,
            vectors: cols.clone(),
        };
        if worst <= opts.tol {
            break;
        }
    }
    if worst > opts.tol {
        return Err(Error::Eigen(format!(
            "subspace iteration did not converge: relative residual {worst:e} after {} iterations",
            opts.max_iter
        )));
    }
    ritz.values.truncate(2 * k + 2);
    ritz.vectors.truncate(2 * k + 2);
    for x in &mut ritz.vectors {
        normalize_sign(x);
    }
    Ok(finish(l, k, opts, ritz, max_abs, false, "shift_invert"))
}

/// Solution of the linearized equation with its bounded-inverse data.
#[derive(Debug, Clone)]
pub struct AugmentedSolution {
    pub w: PairField,
    /// `||w||_H / ||f||_H` (0 when `f = 0`).
    pub bound_ratio: f64,
    /// Operator bound of the inverse on the range, `1 / min nonzero |lambda|`
    /// (plus 1 for the kernel part when projecting).
    pub inverse_bound: f64,
    pub ill_conditioned: bool,
}

/// Solves `L w = f` for `f` in the range (`use_projection = false`, returns
/// the solution orthogonal to the kernel) or `(Pi_K + L) w = f` for any `f`
/// (`use_projection = true`).
pub fn solve_augmented(
    l: &LinearizedOperator,
    report: &SpectralReport,
    f: &PairField,
    use_projection: bool,
) -> Result<AugmentedSolution> {
    let m = l.h_weights();
    let norm = |x: &PairField| wdot(m, x.values(), x.values()).sqrt();
    let f_norm = norm(f);
    let kernel_part = report.project_kernel(f);
    if !use_projection && norm(&kernel_part) > 1e-8 * f_norm.max(f64::MIN_POSITIVE) {
        return Err(Error::OutsideRange {
            residual: norm(&kernel_part) / f_norm,
        });
    }
    if report.ill_conditioned {
        log::warn!(
            "solving with a nearly singular linearization (condition {:e})",
            report.condition
        );
    }
    let inverse_bound = 1.0 / report.min_nonzero_abs + if use_projection { 1.0 } else { 0.0 };
    if f_norm == 0.0 {
        return Ok(AugmentedSolution {
            w: f.clone(),
            bound_ratio: 0.0,
            inverse_bound,
            ill_conditioned: report.ill_conditioned,
        });
    }
    let range_part = f.sub(&kernel_part);
    let w_range = if report.kernel_basis.is_empty() {
        let rhs: Vec<f64> = range_part.values().iter().zip(m).map(|(f, m)| f * m).collect();
        f.with_values(Factorization::lu(l.form())?.solve(&rhs)?)
    } else {
        // (J + eps M) restricted to the range differs from J by factors
        // eps / (lambda + eps) <= 1e-3, so a few refinement sweeps converge
        let eps = 1e-3 * report.min_nonzero_abs;
        let shifted = l
            .form()
            .add_diagonal(&m.iter().map(|m| eps * m).collect::<Vec<_>>());
        let fac = Factorization::lu(&shifted)?;
        let mut w = f.with_values(vec![0.0; f.len()]);
        for _ in 0..50 {
            let lw = l.apply(&w);
            let r = range_part.sub(&lw);
            if norm(&r) <= 1e-14 * f_norm {
                break;
            }
            let rhs: Vec<f64> = r.values().iter().zip(m).map(|(r, m)| r * m).collect();
            let dw = f.with_values(fac.solve(&rhs)?);
            w = report.project_range(&w.add(&dw));
        }
        w
    };
    let w = if use_projection {
        w_range.add(&kernel_part)
    } else {
        w_range
    };
    Ok(AugmentedSolution {
        bound_ratio: norm(&w) / f_norm,
        w,
        inverse_bound,
        ill_conditioned: report.ill_conditioned,
    })
}
