//! Seeded synthetic forecast/observation archives.
//!
//! The construction plants a per-case latent signal and draws both the
//! observation and the ensemble members from the truth family positioned at
//! that signal:
//!
//! * signal: location offset `delta = tau * Phi^-1(u)` with `tau` the truth
//!   family's scale parameter (log-space for the log-normal family);
//! * observation: a draw from the truth family shifted by `delta`;
//! * members: draws from the same shifted law with its scale multiplied by
//!   the dispersion factor, then shifted by `bias`;
//! * everything is floored at zero, observations and members alike.
//!
//! With dispersion 1 and bias 0 the observation and the members are i.i.d.
//! from the same law, so raw-ensemble verification ranks are uniform by
//! construction; dispersion < 1 produces the underdispersion that
//! post-processing is supposed to repair, and bias shifts the whole ensemble.
//!
//! Each (station, day) case draws from its own derived RNG stream, in the
//! fixed order signal, observation, members; output is byte-identical for
//! identical configs and independent of generation order.

use super::{DataError, Dataset, EnsembleForecast, ForecastCase, GroupSpec};
use crate::dist::{Distribution, GevParams, LogNormalParams, TgevParams, TruncNormalParams};
use crate::rng::{name_tag, stream, uniform_open01};
use crate::special::std_normal_quantile;
use chrono::{Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// Configuration of one synthetic archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig")]
pub struct SyntheticConfig {
    truth: Distribution,
    bias: f64,
    dispersion: f64,
    group_spec: GroupSpec,
    stations: usize,
    days: usize,
    seed: u64,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawConfig {
    truth: Distribution,
    bias: f64,
    dispersion: f64,
    group_spec: GroupSpec,
    stations: usize,
    days: usize,
    seed: u64,
}

impl SyntheticConfig {
    pub fn new(
        truth: Distribution,
        bias: f64,
        dispersion: f64,
        group_spec: GroupSpec,
        stations: usize,
        days: usize,
        seed: u64,
    ) -> Result<Self, DataError> {
        if matches!(truth, Distribution::Empirical(_)) {
            return Err(DataError::BadConfig {
                reason: "truth family must be parametric".into(),
            });
        }
        if !(dispersion.is_finite() && dispersion > 0.0) {
            return Err(DataError::BadConfig {
                reason: format!("dispersion factor must be positive (got {dispersion})"),
            });
        }
        if !bias.is_finite() {
            return Err(DataError::BadConfig {
                reason: "bias must be finite".into(),
            });
        }
        if stations == 0 || days == 0 {
            return Err(DataError::BadConfig {
                reason: "need at least one station and one day".into(),
            });
        }
        Ok(Self {
            truth,
            bias,
            dispersion,
            group_spec,
            stations,
            days,
            seed,
        })
    }

    pub fn truth(&self) -> &Distribution {
        &self.truth
    }

    pub fn group_spec(&self) -> &GroupSpec {
        &self.group_spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn days(&self) -> usize {
        self.days
    }
}

impl TryFrom<RawConfig> for SyntheticConfig {
    type Error = DataError;
    fn try_from(r: RawConfig) -> Result<Self, Self::Error> {
        Self::new(
            r.truth,
            r.bias,
            r.dispersion,
            r.group_spec,
            r.stations,
            r.days,
            r.seed,
        )
    }
}

/// Scale-like parameter of a parametric law (log-space sigma for LN).
fn scale_of(d: &Distribution) -> f64 {
    match d {
        Distribution::TruncNormal(p) => p.scale(),
        Distribution::LogNormal(p) => p.sigma(),
        Distribution::Gev(p) => p.scale(),
        Distribution::Tgev(p) => p.scale(),
        Distribution::Empirical(_) => unreachable!("rejected at config validation"),
    }
}

/// The template with its location shifted and scale multiplied.
fn reposition(d: &Distribution, delta: f64, k: f64) -> Distribution {
    let built = match d {
        Distribution::TruncNormal(p) => {
            TruncNormalParams::new(p.location() + delta, p.scale() * k).map(Distribution::TruncNormal)
        }
        Distribution::LogNormal(p) => {
            LogNormalParams::new(p.mu() + delta, p.sigma() * k).map(Distribution::LogNormal)
        }
        Distribution::Gev(p) => {
            GevParams::new(p.location() + delta, p.scale() * k, p.shape()).map(Distribution::Gev)
        }
        Distribution::Tgev(p) => {
            TgevParams::new(p.location() + delta, p.scale() * k, p.shape()).map(Distribution::Tgev)
        }
        Distribution::Empirical(_) => unreachable!("rejected at config validation"),
    };
    built.expect("repositioned law is valid for clamped offsets")
}

/// Smallest admissible signal offset: an extreme negative draw could push a
/// negative-shape truncated-GEV law entirely below zero, which the parameter
/// types reject. Other families accept any offset.
fn min_offset(d: &Distribution, k: f64) -> f64 {
    match d {
        Distribution::Tgev(p) => {
            // keep the survival exponent at zero away from underflow for
            // both the observation law (scale tau) and the member law
            // (scale k*tau)
            let floor = |scale: f64| {
                let base = GevParams::new(0.0, scale, p.shape()).expect("valid scale");
                -base.invert_survival(1e-9) - p.location() + 1e-9
            };
            floor(p.scale()).max(floor(p.scale() * k))
        }
        _ => f64::NEG_INFINITY,
    }
}

/// Generates the archive described by `config`: one case per (station, day),
/// lead time 24 h, valid at 12:00 UTC starting 2024-01-01.
pub fn generate_synthetic(config: &SyntheticConfig) -> Dataset {
    let tau = scale_of(&config.truth);
    let delta_floor = min_offset(&config.truth, config.dispersion);
    let base = Utc.with_ymd_and_hms(2024, 1, 1, 12, 0, 0).unwrap();
    let tag = name_tag("synthetic");
    let m = config.group_spec.member_count();

    let mut cases = Vec::with_capacity(config.stations * config.days);
    for s in 0..config.stations {
        for d in 0..config.days {
            let mut rng = stream(config.seed, &[tag, s as u64, d as u64]);
            let delta = (tau
                * std_normal_quantile(uniform_open01(&mut rng)).expect("open-interval uniform"))
            .max(delta_floor);
            let obs_law = reposition(&config.truth, delta, 1.0);
            let member_law = reposition(&config.truth, delta, config.dispersion);

            let observation = obs_law
                .quantile(uniform_open01(&mut rng))
                .expect("open-interval uniform")
                .max(0.0);
            let members = (0..m)
                .map(|_| {
                    let q = member_law
                        .quantile(uniform_open01(&mut rng))
                        .expect("open-interval uniform");
                    (config.bias + q).max(0.0)
                })
                .collect();

            cases.push(ForecastCase {
                forecast: EnsembleForecast {
                    station_id: format!("S{:03}", s + 1),
                    valid_time: base + Duration::days(d as i64),
                    lead_time_h: 24,
                    members,
                },
                observation,
            });
        }
    }
    Dataset::from_cases(config.group_spec.clone(), cases).expect("generated cases are valid")
}
