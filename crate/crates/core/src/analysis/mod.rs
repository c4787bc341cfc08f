//! Linearization, spectra, the Lojasiewicz-Simon probe and rate fitting.

pub mod linearized;
pub mod ls_probe;
pub mod rate;
pub mod spectrum;

pub use linearized::LinearizedOperator;
pub use ls_probe::{ls_probe, ls_probe_states, LsProbeOptions, LsProbeReport, LsSample};
pub use rate::{rate_fit, DecayModel, RateFit, RateOptions};
pub use spectrum::{
    solve_augmented, spectrum, spectrum_with, AugmentedSolution, Classification, SpectralReport,
    SpectrumOptions,
};
