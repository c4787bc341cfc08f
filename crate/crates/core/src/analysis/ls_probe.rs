//! Numerical probe of the Lojasiewicz-Simon inequality
//! `|E(u) - E(psi)|^{1 - theta} <= C (bulk_res + bdry_res)` along a
//! trajectory approaching `psi`.

use serde::Serialize;

use crate::energy::EnergyModel;
use crate::error::Result;
use crate::evolution::TrajectoryRecord;
use crate::grid::PairField;

pub const DEFAULT_WINDOW: f64 = 0.5;
pub const MIN_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsProbeOptions {
    /// Only states with `||u - psi||_V <= window` are used.
    pub window: f64,
    /// Residuals below `lhs_floor_factor * lhs(psi)` are rounding noise.
    pub lhs_floor_factor: f64,
    /// Window radii (as multiples of `window`) for the sensitivity report.
    pub sensitivity: Vec<f64>,
    /// Fraction of samples (those nearest `psi`) that calibrate the constant.
    pub calibration_fraction: f64,
    /// The calibrated constant is the smallest calibration ratio times this
    /// margin, so that fit noise in the exponent is not counted as failure.
    pub calibration_margin: f64,
}

impl Default for LsProbeOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            lhs_floor_factor: 100.0,
            sensitivity: vec![0.25, 0.5, 1.0, 2.0],
            calibration_fraction: 0.25,
            calibration_margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LsSample {
    pub t: f64,
    /// `E(u) - E(psi)`.
    pub gap: f64,
    /// `bulk_res + bdry_res`.
    pub lhs: f64,
    pub v_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSensitivity {
    pub window: f64,
    pub samples: usize,
    pub fitted_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LsProbeReport {
    pub samples: Vec<LsSample>,
    /// `1 - slope` of the regression of `ln lhs` on `ln gap`.
    pub fitted_theta: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Calibrated constant `c` with `lhs >= c gap^{1 - theta}` on the
    /// calibration samples.
    pub constant: Option<f64>,
    /// `(min gap, max gap)` over the used samples.
    pub valid_window: Option<(f64, f64)>,
    pub window: f64,
    pub inequality_violations: usize,
    pub insufficient: bool,
    /// Snapshots examined before windowing.
    pub candidates: usize,
    pub sensitivity: Vec<WindowSensitivity>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
}

/// Least-squares line through `(x_i, y_i)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LogFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Some(LogFit {
        slope,
        intercept,
        rms,
    })
}

fn fit_theta(samples: &[LsSample]) -> Option<LogFit> {
    let x: Vec<f64> = samples.iter().map(|s| s.gap.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.lhs.ln()).collect();
    fit_line(&x, &y)
}

impl LsProbeReport {
    /// Fits and calibrates from already-windowed samples.
    pub fn from_samples(samples: Vec<LsSample>, opts: &LsProbeOptions) -> Self {
        let candidates = samples.len();
        Self::build(samples, candidates, opts, Vec::new())
    }

    fn build(
        mut samples: Vec<LsSample>,
        candidates: usize,
        opts: &LsProbeOptions,
        sensitivity: Vec<WindowSensitivity>,
    ) -> Self {
        samples.retain(|s| s.gap > 0.0 && s.lhs > 0.0 && s.gap.is_finite() && s.lhs.is_finite());
        let insufficient = samples.len() < MIN_SAMPLES;
        let fit = if insufficient { None } else { fit_theta(&samples) };
        let mut report = LsProbeReport {
            valid_window: None,
            fitted_theta: None,
            slope: None,
            intercept: None,
            constant: None,
            window: opts.window,
            inequality_violations: 0,
            insufficient: insufficient || fit.is_none(),
            candidates,
            sensitivity,
            samples,
        };
        let Some(fit) = fit else {
            return report;
        };
        let power = fit.slope;
        report.fitted_theta = Some(1.0 - power);
        report.slope = Some(power);
        report.intercept = Some(fit.intercept);
        let gaps = report.samples.iter().map(|s| s.gap);
        let lo = gaps.clone().fold(f64::INFINITY, f64::min);
        let hi = gaps.fold(f64::NEG_INFINITY, f64::max);
        report.valid_window = Some((lo, hi));
        // calibrate on the samples closest to psi (smallest gaps)
        let mut order: Vec<usize> = (0..report.samples.len()).collect();
        order.sort_by(|&a, &b| report.samples[a].gap.total_cmp(&report.samples[b].gap));
        let n_cal = ((report.samples.len() as f64 * opts.calibration_fraction).ceil() as usize)
            .clamp(1, report.samples.len());
        let ratio = |s: &LsSample| s.lhs / s.gap.powf(power);
        let c = order[..n_cal]
            .iter()
            .map(|&i| ratio(&report.samples[i]))
            .fold(f64::INFINITY, f64::min)
            * opts.calibration_margin;
        report.constant = Some(c);
        report.inequality_violations = report
            .samples
            .iter()
            .filter(|s| ratio(s) < c)
            .count();
        report
    }
}

/// Samples every snapshot of `traj`, windows by V-distance to `psi`, fits
/// the exponent and calibrates the constant.
pub fn ls_probe(
    model: &EnergyModel,
    traj: &TrajectoryRecord,
    psi: &PairField,
    opts: &LsProbeOptions,
) -> Result<LsProbeReport> {
    ls_probe_states(model, &traj.snapshots, psi, opts)
}

/// [`ls_probe`] over explicit `(t, state)` pairs, e.g. snapshots read back
/// from disk.
pub fn ls_probe_states(
    model: &EnergyModel,
    states: &[(f64, PairField)],
    psi: &PairField,
    opts: &LsProbeOptions,
) -> Result<LsProbeReport> {
    let (b, s) = model.stationary_residual(psi)?;
    let floor = opts.lhs_floor_factor * (b + s);
    let mut all = Vec::with_capacity(states.len());
    for (t, u) in states {
        let gap = model.energy_gap(u, psi)?;
        let (b, s) = model.stationary_residual(u)?;
        let v_dist = model.op().v_norm(&u.sub(psi));
        all.push(LsSample {
            t: *t,
            gap,
            lhs: b + s,
            v_dist,
        });
    }
    let usable = |radius: f64| -> Vec<LsSample> {
        all.iter()
            .copied()
            .filter(|s| s.v_dist <= radius && s.gap > 0.0 && s.lhs > floor)
            .collect()
    };
    let sensitivity = opts
        .sensitivity
        .iter()
        .map(|&f| {
            let w = f * opts.window;
            let samples = usable(w);
            let theta = if samples.len() >= MIN_SAMPLES {
                fit_theta(&samples).map(|fit| 1.0 - fit.slope)
            } else {
                None
            };
            WindowSensitivity {
                window: w,
                samples: samples.len(),
                fitted_theta: theta,
            }
        })
        .collect();
    let report = LsProbeReport::build(usable(opts.window), all.len(), opts, sensitivity);
    if report.insufficient {
        log::warn!(
            "LS probe: {} usable samples (need {MIN_SAMPLES}) inside the V-window {}",
            report.samples.len(),
            opts.window
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_half_exponent() {
        let samples: Vec<LsSample> = (1..=20)
            .map(|i| {
                let r = 10f64.powf(-(i as f64) / 4.0);
                LsSample {
                    t: i as f64,
                    gap: r * r,
                    lhs: r,
                    v_dist: r,
                }
            })
            .collect();
        let rep = LsProbeReport::from_samples(samples, &LsProbeOptions::default());
        assert!((rep.fitted_theta.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rep.inequality_violations, 0);
        assert!(!rep.insufficient);
    }

    #[test]
    fn too_few_samples_are_flagged() {
        let s = LsSample {
            t: 0.0,
            gap: 1e-3,
            lhs: 1e-2,
            v_dist: 0.1,
        };
        let rep = LsProbeReport::from_samples(vec![s; 3], &LsProbeOptions::default());
        assert!(rep.insufficient);
        assert!(rep.fitted_theta.is_none());
    }

    #[test]
    fn fit_line_is_exact_on_lines() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|x| 3.0 - 2.0 * x).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }
}
