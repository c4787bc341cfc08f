//! Fitting the decay of `||U(t) - psi||` to exponential and algebraic laws.

use serde::Serialize;

use super::ls_probe::fit_line;
use crate::error::{Error, Result};

/// Relative increase tolerated before a distance series counts as
/// non-monotone.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayModel {
    /// `d ~ C exp(-gamma t)`
    Exponential,
    /// `d ~ C (1 + t)^{-q}`
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateOptions {
    /// Only samples with `t` in this range are fitted; `None` fits all.
    pub t_range: Option<(f64, f64)>,
    /// Samples with `d` at or below this floor are discarded.
    pub d_floor: f64,
    /// Slack on the algebraic-exponent bound.
    pub fit_tol: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            t_range: None,
            d_floor: 1e-14,
            fit_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub samples: usize,
    pub gamma: f64,
    pub c_exp: f64,
    pub rms_exp: f64,
    pub q: f64,
    pub c_alg: f64,
    pub rms_alg: f64,
    pub preferred: DecayModel,
    pub theta: Option<f64>,
    /// `theta / (1 - 2 theta)`; infinite for `theta >= 1/2`.
    pub bound_exponent: Option<f64>,
    /// Exponential decay, or algebraic decay at least as fast as the bound.
    pub bound_ok: Option<bool>,
    pub monotone: bool,
    /// Largest relative increase `d_{i+1} / d_i - 1` in the series.
    pub max_increase: f64,
}

pub fn bound_exponent(theta: f64) -> f64 {
    if theta >= 0.5 {
        f64::INFINITY
    } else {
        theta / (1.0 - 2.0 * theta)
    }
}

/// Fits `ln d` against `t` and against `ln(1 + t)` and keeps the smaller
/// RMS residual. Scaling `d` by a constant changes only the prefactors.
pub fn rate_fit(
    times: &[f64],
    dist: &[f64],
    theta: Option<f64>,
    opts: &RateOptions,
) -> Result<RateFit> {
    if times.len() != dist.len() {
        return Err(Error::GridMismatch {
            expected: times.len(),
            found: dist.len(),
        });
    }
    let mut max_increase = 0.0_f64;
    for w in dist.windows(2) {
        if w[0] > 0.0 {
            max_increase = max_increase.max(w[1] / w[0] - 1.0);
        }
    }
    let monotone = max_increase <= MONOTONE_TOL;
    if !monotone {
        log::warn!("distance series is not monotone (max relative increase {max_increase:.3e})");
    }
    let (t0, t1) = opts.t_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let kept: Vec<(f64, f64)> = times
        .iter()
        .zip(dist)
        .filter(|(t, d)| **t >= t0 && **t <= t1 && **d > opts.d_floor && d.is_finite())
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    let ts: Vec<f64> = kept.iter().map(|k| k.0).collect();
    let ls: Vec<f64> = kept.iter().map(|k| (1.0 + k.0.max(0.0)).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let not_enough = || Error::param("dist", "fewer than two usable samples with distinct times");
    let exp = fit_line(&ts, &ys).ok_or_else(not_enough)?;
    let alg = fit_line(&ls, &ys).ok_or_else(not_enough)?;
    let preferred = if exp.rms <= alg.rms {
        DecayModel::Exponential
    } else {
        DecayModel::Algebraic
    };
    let q = -alg.slope;
    let bound = theta.map(bound_exponent);
    let bound_ok = bound.map(|b| match preferred {
        DecayModel::Exponential => exp.slope < 0.0,
        DecayModel::Algebraic => q >= b - opts.fit_tol,
    });
    Ok(RateFit {
        samples: kept.len(),
        gamma: -exp.slope,
        c_exp: exp.intercept.exp(),
        rms_exp: exp.rms,
        q,
        c_alg: alg.intercept.exp(),
        rms_alg: alg.rms,
        preferred,
        theta,
        bound_exponent: bound,
        bound_ok,
        monotone,
        max_increase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..200).map(|i| i as f64 * 0.1).collect()
    }

    #[test]
    fn recognises_exponential() {
        let t = grid();
        let d: Vec<f64> = t.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let f = rate_fit(&t, &d, Some(0.5), &RateOptions::default()).unwrap();
        assert_eq!(f.preferred, DecayModel::Exponential);
        assert!((f.gamma - 0.7).abs() < 1e-12);
        assert_eq!(f.bound_ok, Some(true));
        assert!(f.monotone);
    }

    #[test]
    fn recognises_algebraic() {
        let t = grid();
        let d: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-1.0)).collect();
        let f = rate_fit(&t, &d, Some(0.25), &RateOptions::default()).unwrap();
        assert_eq!(f.preferred, DecayModel::Algebraic);
        assert!((f.q - 1.0).abs() < 1e-12);
        // bound exponent for theta = 1/4 is 1/2
        assert_eq!(f.bound_ok, Some(true));
        let slow = rate_fit(&t, &d, Some(0.4), &RateOptions::default()).unwrap();
        assert_eq!(slow.bound_ok, Some(false));
    }

    #[test]
    fn flags_non_monotone() {
        let t = grid();
        let d: Vec<f64> = t
            .iter()
            .map(|t| (-t).exp() * (1.0 + 0.3 * (5.0 * t).sin()))
            .collect();
        let f = rate_fit(&t, &d, None, &RateOptions::default()).unwrap();
        assert!(!f.monotone);
        assert!(f.bound_ok.is_none());
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(rate_fit(&[1.0], &[1.0], None, &RateOptions::default()).is_err());
        assert!(rate_fit(&[1.0, 2.0], &[1.0], None, &RateOptions::default()).is_err());
    }
}
