//! Polynomial nonlinearities `f = F'` with growth and dissipativity checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    DoubleWell,
    PolynomialCustom,
}

/// Sampling parameters for the large-|s| checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRange {
    /// Inner radius `S0` of the dissipativity window.
    pub s0: f64,
    /// Outer radius `S1`; also bounds the search for `N2`.
    pub s1: f64,
    pub samples: usize,
}

impl Default for SampleRange {
    fn default() -> Self {
        Self {
            s0: 4.0,
            s1: 64.0,
            samples: 4001,
        }
    }
}

/// Outcome of [`Potential::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCheck {
    /// Sampled `min f'(s)` over `S0 <= |s| <= S1`.
    pub dissipativity_margin: f64,
    /// Degree of `f'`, the exponent in `|f'(s)| <= C (1 + |s|^p)`.
    pub growth_p: usize,
    /// Smallest sampled radius beyond which `F >= 0`.
    pub n2: f64,
    /// Sampled `min F(s)` over `|s| <= N2`.
    pub min_f_inner: f64,
    pub range: SampleRange,
}

/// `f(s) = sum_k coeffs[k] s^k` and `F(s) = F(0) + int_0^s f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    kind: PotentialKind,
    coeffs: Vec<f64>,
    f_at_zero: f64,
}

impl Potential {
    /// `f(s) = s^3 - s`, `F(s) = (s^2 - 1)^2 / 4`.
    pub fn double_well() -> Self {
        Self {
            kind: PotentialKind::DoubleWell,
            coeffs: vec![0.0, -1.0, 0.0, 1.0],
            f_at_zero: 0.25,
        }
    }

    /// A polynomial nonlinearity with coefficients in increasing degree and
    /// the value of `F(0)`.
    pub fn polynomial(coeffs: Vec<f64>, f_at_zero: f64) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.iter().any(|c| !c.is_finite()) || !f_at_zero.is_finite() {
            return Err(Error::Potential("coefficients must be finite".into()));
        }
        Ok(Self {
            kind: PotentialKind::PolynomialCustom,
            coeffs,
            f_at_zero,
        })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn f_at_zero(&self) -> f64 {
        self.f_at_zero
    }

    pub fn f(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c)
    }

    pub fn f_double_prime(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + (k * (k - 1)) as f64 * c)
    }

    /// The antiderivative `F`.
    pub fn big_f(&self, s: f64) -> f64 {
        if self.kind == PotentialKind::DoubleWell {
            let q = s * s - 1.0;
            return 0.25 * q * q;
        }
        let poly = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + c / (k + 1) as f64);
        self.f_at_zero + s * poly
    }

    /// `F(a) - F(b)` without cancellation when `a` and `b` are close.
    pub fn big_f_difference(&self, a: f64, b: f64) -> f64 {
        // F(a) - F(b) = sum_k c_k (a^{k+1} - b^{k+1}) / (k + 1) and
        // a^{m} - b^{m} = (a - b) sum_{i<m} a^i b^{m-1-i}
        let d = a - b;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let m = k + 1;
            let mut s = 0.0;
            for i in 0..m {
                s += a.powi(i as i32) * b.powi((m - 1 - i) as i32);
            }
            acc += c * s / m as f64;
        }
        d * acc
    }

    /// Maximum of `|f'|` over `[lo, hi]`. Exact for polynomials of degree
    /// at most 3; sampled with the endpoints otherwise.
    pub fn max_abs_f_prime(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let mut m = self.f_prime(lo).abs().max(self.f_prime(hi).abs());
        if self.coeffs.len() <= 4 {
            // f' is at most quadratic: the only interior extremum is where f'' = 0
            let a = self.coeffs.get(3).copied().unwrap_or(0.0);
            let b = self.coeffs.get(2).copied().unwrap_or(0.0);
            if a != 0.0 {
                let s = -b / (3.0 * a);
                if (lo..=hi).contains(&s) {
                    m = m.max(self.f_prime(s).abs());
                }
            }
        } else {
            let n = 256;
            for i in 1..n {
                let s = lo + (hi - lo) * i as f64 / n as f64;
                m = m.max(self.f_prime(s).abs());
            }
        }
        m
    }

    /// Checks the large-argument assumptions by sampling. A potential whose
    /// `f'` is not positive at large `|s|` is rejected; growth is reported.
    pub fn validate(&self, range: SampleRange) -> Result<PotentialCheck> {
        if !(range.s0 > 0.0 && range.s1 > range.s0 && range.samples >= 2) {
            return Err(Error::param("potential range", "need 0 < s0 < s1 and >= 2 samples"));
        }
        let grid = |lo: f64, hi: f64| {
            (0..range.samples).map(move |i| lo + (hi - lo) * i as f64 / (range.samples - 1) as f64)
        };
        let margin = grid(range.s0, range.s1)
            .flat_map(|s| [self.f_prime(s), self.f_prime(-s)])
            .fold(f64::INFINITY, f64::min);
        if !(margin > 0.0) {
            return Err(Error::Potential(format!(
                "f' is not positive for large |s|: min f' over {} <= |s| <= {} is {margin}",
                range.s0, range.s1
            )));
        }
        let growth_p = self.coeffs.len().saturating_sub(2);
        if growth_p > 5 {
            log::warn!(
                "f' grows like |s|^{growth_p}; the continuum theory assumes subcritical growth"
            );
        }
        // N2: smallest sampled radius outside which F stays nonnegative
        let outer = grid(0.0, range.s1);
        let mut n2 = 0.0_f64;
        for s in outer {
            if self.big_f(s) < 0.0 || self.big_f(-s) < 0.0 {
                n2 = s;
            }
        }
        let min_f_inner = grid(-n2, n2)
            .map(|s| self.big_f(s))
            .chain([self.big_f(0.0)])
            .fold(f64::INFINITY, f64::min);
        Ok(PotentialCheck {
            dissipativity_margin: margin,
            growth_p,
            n2,
            min_f_inner,
            range,
        })
    }
}
