//! The run configuration: a TOML file with one table per concern.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wentzell_core::evolution::{EvolveConfig, Scheme, StepperConfig};
use wentzell_core::initial::InitialData;
use wentzell_core::potential::SampleRange;
use wentzell_core::stationary::{MinimizeOptions, NewtonOptions};
use wentzell_core::{Constants, GridMode, Potential, StripGrid};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for random initial data.
    #[serde(default)]
    pub seed: u64,
    /// Saved equilibrium used as the reference for distance diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_equilibrium: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub stepper: StepperBlock,
    #[serde(default)]
    pub equilibrium: EquilibriumBlock,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_mode")]
    pub mode: GridMode,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    #[serde(default = "one_usize")]
    pub nx: usize,
    pub ny: usize,
}

fn default_mode() -> GridMode {
    GridMode::Strip2D
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `F(s) = (s^2 - 1)^2 / 4`.
    #[default]
    DoubleWell,
    /// `f(s) = sum_i coefficients[i] s^i` with `F(0) = f_at_zero`.
    Polynomial {
        coefficients: Vec<f64>,
        #[serde(default)]
        f_at_zero: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant {
        value: f64,
    },
    Cosine {
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one_u32")]
        wavenumber: u32,
    },
    /// Random low-wavenumber Fourier modes drawn from the top-level seed.
    RandomModes {
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "three_u32")]
        modes: u32,
    },
    /// A saved grid CSV, relative to the config file.
    File {
        path: PathBuf,
    },
}

fn one_u32() -> u32 {
    1
}

fn three_u32() -> u32 {
    3
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::RandomModes {
            amplitude: 0.1,
            mean: 0.0,
            modes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperBlock {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<f64>,
    pub energy_guard: bool,
    pub dt_min: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Record the scalar time series every this many steps.
    pub series_stride: usize,
}

impl Default for StepperBlock {
    fn default() -> Self {
        let s = StepperConfig::default();
        Self {
            scheme: s.scheme,
            dt: s.dt,
            t_end: 1.0,
            stabilization: s.stabilization,
            energy_guard: s.energy_guard,
            dt_min: s.dt_min,
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            series_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumBlock {
    /// Gradient tolerance of the descent phase.
    pub minimize_tol: f64,
    pub minimize_max_iter: usize,
    pub newton_tol: f64,
    /// Residual below which Newton runs without descent first.
    pub basin: f64,
    pub newton_max_iter: usize,
}

impl Default for EquilibriumBlock {
    fn default() -> Self {
        let m = MinimizeOptions::default();
        let n = NewtonOptions::default();
        Self {
            minimize_tol: m.tol,
            minimize_max_iter: m.max_iter,
            newton_tol: 1e-10,
            basin: n.basin,
            newton_max_iter: n.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Output directory, relative to the config file.
    pub output_dir: PathBuf,
    /// Keep a field snapshot every this many steps (0: initial and final only).
    pub snapshot_stride: usize,
    pub plots: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            snapshot_stride: 100,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// V-norm radius of the Lojasiewicz-Simon probe window.
    pub probe_window: f64,
    pub kernel_tol: f64,
    /// Number of smallest eigenvalues to report.
    pub eigenvalues: usize,
    /// Time range of the rate fit; defaults to the last decade of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_t_max: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            probe_window: 0.5,
            kernel_tol: 1e-8,
            eigenvalues: 6,
            rate_t_min: None,
            rate_t_max: None,
        }
    }
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}` {reason}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Parses TOML text; syntax and type errors carry the line number.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().trim().to_string();
            match line {
                Some(line) => CliError::Config(format!("line {line}: {msg}")),
                None => CliError::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.constants.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.potential()?;
        self.stepper_config()
            .validate()
            .map_err(|e| CliError::Config(format!("stepper: {e}")))?;
        positive("stepper.t_end", self.stepper.t_end)?;
        if self.stepper.series_stride == 0 {
            return Err(invalid("stepper.series_stride", "must be at least 1"));
        }
        positive("equilibrium.minimize_tol", self.equilibrium.minimize_tol)?;
        positive("equilibrium.newton_tol", self.equilibrium.newton_tol)?;
        positive("equilibrium.basin", self.equilibrium.basin)?;
        positive("analysis.probe_window", self.analysis.probe_window)?;
        let kt = self.analysis.kernel_tol;
        if !(kt > 0.0 && kt < 1.0) {
            return Err(invalid("analysis.kernel_tol", format!("must lie in (0, 1), got {kt}")));
        }
        if self.analysis.eigenvalues == 0 {
            return Err(invalid("analysis.eigenvalues", "must be at least 1"));
        }
        if let (Some(a), Some(b)) = (self.analysis.rate_t_min, self.analysis.rate_t_max) {
            if !(a < b) {
                return Err(invalid("analysis.rate_t_min", "must be below rate_t_max"));
            }
        }
        match &self.initial {
            InitialConfig::Cosine { amplitude, .. } | InitialConfig::RandomModes { amplitude, .. }
                if !amplitude.is_finite() =>
            {
                return Err(invalid("initial.amplitude", "must be finite"))
            }
            InitialConfig::Constant { value } if !value.is_finite() => {
                return Err(invalid("initial.value", "must be finite"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<StripGrid, CliError> {
        let g = &self.grid;
        StripGrid::new(g.mode, g.lx, g.ly, g.nx, g.ny).map_err(|e| CliError::Config(format!("grid: {e}")))
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let p = match &self.potential {
            PotentialConfig::DoubleWell => Potential::double_well(),
            PotentialConfig::Polynomial {
                coefficients,
                f_at_zero,
            } => Potential::polynomial(coefficients.clone(), *f_at_zero)
                .map_err(|e| CliError::Config(format!("potential: {e}")))?,
        };
        p.validate(SampleRange::default())
            .map_err(|e| CliError::Config(format!("potential: {e}")))?;
        Ok(p)
    }

    pub fn stepper_config(&self) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            scheme: s.scheme,
            dt: s.dt,
            stabilization: s.stabilization,
            newton_tol: s.newton_tol,
            newton_max_iter: s.newton_max_iter,
            energy_guard: s.energy_guard,
            dt_min: s.dt_min,
        }
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        EvolveConfig {
            t_end: self.stepper.t_end,
            series_stride: self.stepper.series_stride,
            snapshot_stride: self.io.snapshot_stride,
        }
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            tol: self.equilibrium.minimize_tol,
            max_iter: self.equilibrium.minimize_max_iter,
            ..Default::default()
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.equilibrium.newton_tol,
            basin: self.equilibrium.basin,
            max_iter: self.equilibrium.newton_max_iter,
        }
    }

    /// The core initial-data description, or the file to load.
    pub fn initial_data(&self) -> Result<InitialData, PathBuf> {
        Ok(match &self.initial {
            InitialConfig::Constant { value } => InitialData::Constant { value: *value },
            InitialConfig::Cosine {
                amplitude,
                mean,
                wavenumber,
            } => InitialData::Cosine {
                amplitude: *amplitude,
                mean: *mean,
                wavenumber: *wavenumber,
            },
            InitialConfig::RandomModes {
                amplitude,
                mean,
                modes,
            } => InitialData::RandomModes {
                amplitude: *amplitude,
                mean: *mean,
                modes: *modes,
                seed: self.seed,
            },
            InitialConfig::File { path } => return Err(path.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7

[grid]
mode = "strip2d"
lx = 2.0
ly = 1.0
nx = 16
ny = 9

[constants]
beta = 2.0

[initial]
kind = "cosine"
amplitude = 0.1
mean = 0.05

[stepper]
dt = 1e-3
t_end = 0.5

[analysis]
rate_t_min = 0.1
"#;

    #[test]
    fn parse_serialize_parse_is_identity() {
        let a = RunConfig::parse(FULL).unwrap();
        let b = RunConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.constants.beta, 2.0);
        assert_eq!(a.constants.alpha, 1.0);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse("[grid]\nnx = 8\nny = 8\n").unwrap();
        assert_eq!(c.constants, Constants::default());
        assert_eq!(c.potential, PotentialConfig::DoubleWell);
        assert_eq!(c, RunConfig::parse(&c.to_toml()).unwrap());
    }

    #[test]
    fn negative_beta_names_the_field() {
        let err = RunConfig::parse("[grid]\nnx = 8\nny = 8\n[constants]\nbeta = -1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("beta") && err.contains("positive"), "{err}");
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let err = RunConfig::parse("[grid]\nnx = 8\nny = = 8\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = RunConfig::parse("[grid]\nnx = 8\nny = 8\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn random_modes_take_the_top_level_seed() {
        let c = RunConfig::parse("seed = 11\n[grid]\nnx = 8\nny = 8\n").unwrap();
        match c.initial_data().unwrap() {
            InitialData::RandomModes { seed, .. } => assert_eq!(seed, 11),
            other => panic!("unexpected {other:?}"),
        }
    }
}
