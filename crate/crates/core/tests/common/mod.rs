//! Independent oracles shared by the integration tests: dense linear algebra
//! written from scratch and quadratic forms summed edge by edge, so that no
//! check reuses the library's own assembly.

#![allow(dead_code)]

use wentzell_core::*;

pub fn model(lx: f64, ly: f64, nx: usize, ny: usize) -> EnergyModel {
    model_with(StripGrid::strip(lx, ly, nx, ny).unwrap(), Constants::default())
}

pub fn model_with(grid: StripGrid, consts: Constants) -> EnergyModel {
    let op = WentzellOperator::new(grid, consts).unwrap();
    EnergyModel::new(op, Potential::double_well()).unwrap()
}

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    /// Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let p = (col..n)
                .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
                .unwrap();
            if p != col {
                for c in 0..n {
                    a.swap(col * n + c, p * n + c);
                }
                x.swap(col, p);
            }
            let piv = a[col * n + col];
            assert!(piv.abs() > 1e-300, "singular matrix");
            for r in col + 1..n {
                let f = a[r * n + col] / piv;
                if f != 0.0 {
                    for c in col..n {
                        a[r * n + c] -= f * a[col * n + c];
                    }
                    x[r] -= f * x[col];
                }
            }
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
            x[r] = (x[r] - s) / a[r * n + r];
        }
        x
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = self.a.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum();
            let scale: f64 = a.iter().map(|v| v * v).sum();
            if off <= 1e-30 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// The discrete Dirichlet sum `sum_edges coef (u_p - u_q)^2`: y-edges carry
/// `hx / hy`, x-edges `wy / hx` with `wy` halved on the wall rows.
pub fn dirichlet_sum(g: &StripGrid, u: &[f64]) -> f64 {
    let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if j + 1 < ny {
                s += hx / hy * (u[k + nx] - u[k]).powi(2);
            }
            if nx > 1 {
                let e = j * nx + (i + 1) % nx;
                let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
                s += wy / hx * (u[e] - u[k]).powi(2);
            }
        }
    }
    s
}

/// `sum_{wall x-edges} (u_p - u_q)^2 / hx`.
pub fn tangential_sum(g: &StripGrid, u: &[f64]) -> f64 {
    let (nx, ny, hx) = (g.nx(), g.ny(), g.hx());
    if nx == 1 {
        return 0.0;
    }
    let mut s = 0.0;
    for j in [0, ny - 1] {
        for i in 0..nx {
            let k = j * nx + i;
            let e = j * nx + (i + 1) % nx;
            s += (u[e] - u[k]).powi(2) / hx;
        }
    }
    s
}

pub fn surface_sum(g: &StripGrid, u: &[f64]) -> f64 {
    (0..g.len()).map(|k| g.surface_mass()[k] * u[k] * u[k]).sum()
}

/// Dense matrix of a quadratic form by polarization on unit vectors.
pub fn polarize(n: usize, q: impl Fn(&[f64]) -> f64) -> Dense {
    let mut m = Dense::zeros(n);
    let mut e = vec![0.0; n];
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            e[i] = 1.0;
            let v = q(&e);
            e[i] = 0.0;
            v
        })
        .collect();
    for i in 0..n {
        m.set(i, i, diag[i]);
        for j in i + 1..n {
            e[i] = 1.0;
            e[j] = 1.0;
            let v = 0.5 * (q(&e) - diag[i] - diag[j]);
            e[i] = 0.0;
            e[j] = 0.0;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// `F(u) = (u^2 - 1)^2 / 4`.
pub fn double_well(u: f64) -> f64 {
    0.25 * (u * u - 1.0).powi(2)
}

/// Total energy summed independently of the library.
pub fn energy_oracle(g: &StripGrid, c: &Constants, u: &[f64]) -> f64 {
    let bulk: f64 = (0..g.len()).map(|k| g.bulk_weights()[k] * double_well(u[k])).sum();
    0.5 * (dirichlet_sum(g, u) + c.alpha * tangential_sum(g, u) + c.beta * surface_sum(g, u))
        + bulk
}

/// Deterministic pseudo-random field in `[-amp, amp]` (a small LCG, so the
/// tests need no RNG dependency).
pub fn lcg_field(n: usize, seed: u64, amp: f64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let r = (s >> 11) as f64 / (1u64 << 53) as f64;
            amp * (2.0 * r - 1.0)
        })
        .collect()
}
