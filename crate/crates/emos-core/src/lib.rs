//! EMOS post-processing for wind-speed ensemble forecasts.
//!
//! The crate covers the full calibration pipeline: parametric predictive
//! distributions on the nonnegative half-line (truncated normal, log-normal,
//! GEV and truncated GEV), closed-form CRPS for each family, CRPS/log-score
//! minimum estimation of the link coefficients over rolling training windows,
//! and a verification toolbox (PIT and rank histograms, coverage, block
//! bootstrap intervals, stratified and threshold-weighted skill scores).
//!
//! Everything downstream of a single `u64` seed is deterministic: random
//! numbers are drawn from named ChaCha streams and turned into variates only
//! through the distributions' own quantile functions.

pub mod dataio;
pub mod dist;
pub mod emos;
pub mod quad;
pub mod rng;
pub mod scoring;
pub mod special;
pub mod verification;

pub use dist::{
    Distribution, EmpiricalEnsemble, GevParams, LogNormalParams, TgevParams, TruncNormalParams,
};
pub use emos::{
    EmosCoefficients, EnsembleStats, Family, FitConfig, GroupSpec, ScaleLink, Scope,
    TrainingWindow,
};
