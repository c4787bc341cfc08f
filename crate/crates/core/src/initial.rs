//! Initial data: constants, a single cosine mode, and seeded random
//! low-wavenumber Fourier fields.

use std::f64::consts::PI;

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMode, PairField, StripGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Constant {
        value: f64,
    },
    /// `mean + amplitude cos(2 pi k x / Lx)` on a strip; on an interval the
    /// mode runs along `y` as `cos(pi k y / Ly)`.
    Cosine {
        amplitude: f64,
        mean: f64,
        #[serde(default = "one")]
        wavenumber: u32,
    },
    /// `mean` plus a random combination of Fourier modes with wavenumbers
    /// up to `modes` in each direction, scaled to sup-norm `amplitude`.
    RandomModes {
        amplitude: f64,
        mean: f64,
        #[serde(default = "three")]
        modes: u32,
        seed: u64,
    },
}

fn one() -> u32 {
    1
}

fn three() -> u32 {
    3
}

impl InitialData {
    pub fn generate(&self, grid: &StripGrid) -> Result<PairField> {
        match *self {
            InitialData::Constant { value } => Ok(PairField::constant(grid, value)),
            InitialData::Cosine {
                amplitude,
                mean,
                wavenumber,
            } => {
                let k = f64::from(wavenumber);
                Ok(match grid.mode() {
                    GridMode::Strip2D => PairField::from_fn(grid, |x, _| {
                        mean + amplitude * (2.0 * PI * k * x / grid.lx()).cos()
                    }),
                    GridMode::Interval1D => PairField::from_fn(grid, |_, y| {
                        mean + amplitude * (PI * k * y / grid.ly()).cos()
                    }),
                })
            }
            InitialData::RandomModes {
                amplitude,
                mean,
                modes,
                seed,
            } => {
                if modes == 0 {
                    return Err(Error::param("modes", "need at least one wavenumber"));
                }
                let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
                let kx_max = match grid.mode() {
                    GridMode::Strip2D => modes,
                    GridMode::Interval1D => 0,
                };
                let mut terms = Vec::new();
                for kx in 0..=kx_max {
                    for ky in 0..=modes {
                        if kx == 0 && ky == 0 {
                            continue;
                        }
                        let a: f64 = rng.random_range(-1.0..1.0);
                        let b: f64 = rng.random_range(-1.0..1.0);
                        terms.push((f64::from(kx), f64::from(ky), a, b));
                    }
                }
                let (lx, ly) = (grid.lx(), grid.ly());
                let raw = PairField::from_fn(grid, |x, y| {
                    terms
                        .iter()
                        .map(|&(kx, ky, a, b)| {
                            let phase = 2.0 * PI * kx * x / lx;
                            (a * phase.cos() + b * phase.sin()) * (PI * ky * y / ly).cos()
                        })
                        .sum()
                });
                let peak = raw.max_abs();
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                Ok(raw.map(|v| mean + scale * v))
            }
        }
    }
}
