//! Forecast verification: calibration diagnostics (PIT, verification
//! ranks), sharpness (central interval coverage and width), uncertainty
//! quantification for mean scores (stationary block bootstrap), stratified
//! and threshold-weighted skill, and the assembled [`ScoreReport`].

mod bootstrap;

pub use bootstrap::{
    chi_square_uniform, ks_uniform, stationary_bootstrap_ci, BootstrapCi, Chi2Test, KsTest,
};

use crate::dist::{DistError, Distribution};
use crate::rng::{name_tag, stream, uniform_open01};
use crate::scoring::{skill_score, twcrps, ScoreError, ScoreKind, Threshold};
use crate::special::SpecialError;
use chrono::{DateTime, Utc};
use rand_chacha::ChaCha12Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("series of length {len} too short, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("level must lie in (0, 1), got {value}")]
    BadLevel { value: f64 },
    #[error("invalid input: {reason}")]
    BadData { reason: String },
}

/// Probability integral transform: the predictive CDF at the observation.
pub fn pit(dist: &Distribution, obs: f64) -> Result<f64, VerifError> {
    if !obs.is_finite() {
        return Err(VerifError::BadData {
            reason: format!("observation {obs} not finite"),
        });
    }
    Ok(dist.cdf(obs))
}

/// PIT with randomization at atoms: uniform between F(obs-) and F(obs).
/// For continuous families this equals [`pit`] and draws nothing; for
/// empirical forecasts it keeps the uniformity diagnostic valid despite the
/// step CDF.
pub fn randomized_pit<R: RngCore>(
    dist: &Distribution,
    obs: f64,
    rng: &mut R,
) -> Result<f64, VerifError> {
    let right = pit(dist, obs)?;
    let left = match dist {
        Distribution::Empirical(e) => e.cdf_left(obs),
        _ => return Ok(right),
    };
    if left < right {
        Ok(left + uniform_open01(rng) * (right - left))
    } else {
        Ok(right)
    }
}

/// Rank of the observation within the joint sample {members, obs}, in
/// 1..=K+1. Ties are broken uniformly at random; the generator is consumed
/// only when a tie exists.
pub fn verification_rank<R: RngCore>(
    members: &[f64],
    obs: f64,
    rng: &mut R,
) -> Result<usize, VerifError> {
    if members.is_empty() {
        return Err(VerifError::Empty);
    }
    let below = members.iter().filter(|&&m| m < obs).count();
    let ties = members.iter().filter(|&&m| m == obs).count();
    let offset = if ties > 0 {
        ((uniform_open01(rng) * (ties + 1) as f64) as usize).min(ties)
    } else {
        0
    };
    Ok(below + offset + 1)
}

/// Per-case generator for rank/PIT tie randomization, derived from the run
/// seed and the case identity so reruns reproduce and cases don't share
/// draws.
pub fn case_stream(
    seed: u64,
    station_id: &str,
    valid_time: DateTime<Utc>,
    lead_time_h: u32,
) -> ChaCha12Rng {
    stream(
        seed,
        &[
            name_tag("rank-tie"),
            name_tag(station_id),
            valid_time.timestamp() as u64,
            u64::from(lead_time_h),
        ],
    )
}

/// Central prediction interval (quantile(alpha/2), quantile(1 - alpha/2)).
/// Empirical forecasts use the interpolated empirical quantiles.
pub fn central_interval(dist: &Distribution, alpha: f64) -> Result<(f64, f64), VerifError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(VerifError::BadLevel { value: alpha });
    }
    let (lo, hi) = match dist {
        Distribution::Empirical(e) => {
            (e.order_quantile(alpha / 2.0), e.order_quantile(1.0 - alpha / 2.0))
        }
        _ => (dist.quantile(alpha / 2.0)?, dist.quantile(1.0 - alpha / 2.0)?),
    };
    Ok((lo, hi))
}

/// The nominal central coverage a K-member ensemble can express,
/// (K-1)/(K+1), as a fraction.
pub fn raw_nominal_level(members: usize) -> f64 {
    (members as f64 - 1.0) / (members as f64 + 1.0)
}

/// The alpha matching [`raw_nominal_level`]: 2/(K+1).
pub fn raw_alpha(members: usize) -> f64 {
    2.0 / (members as f64 + 1.0)
}

/// Coverage and sharpness of central prediction intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    /// Target coverage 1 - alpha, as a fraction in (0, 1).
    pub nominal_level: f64,
    /// Share of observations inside their interval, in percent.
    pub coverage_percent: f64,
    /// Mean interval width (same unit as the forecasts, here m/s).
    pub average_width: f64,
    pub cases: usize,
}

/// Empirical coverage (endpoints inclusive) and mean width of per-case
/// intervals.
pub fn coverage_and_width(
    intervals: &[(f64, f64)],
    observations: &[f64],
    nominal_level: f64,
) -> Result<IntervalStats, VerifError> {
    if intervals.len() != observations.len() {
        return Err(VerifError::LengthMismatch {
            left: intervals.len(),
            right: observations.len(),
        });
    }
    if intervals.is_empty() {
        return Err(VerifError::Empty);
    }
    if !(nominal_level > 0.0 && nominal_level < 1.0) {
        return Err(VerifError::BadLevel {
            value: nominal_level,
        });
    }
    let mut inside = 0usize;
    let mut width = 0.0;
    for ((lo, hi), obs) in intervals.iter().zip(observations) {
        if hi < lo {
            return Err(VerifError::BadData {
                reason: format!("interval ({lo}, {hi}) is inverted"),
            });
        }
        if *lo <= *obs && *obs <= *hi {
            inside += 1;
        }
        width += hi - lo;
    }
    let n = intervals.len();
    Ok(IntervalStats {
        nominal_level,
        coverage_percent: 100.0 * inside as f64 / n as f64,
        average_width: width / n as f64,
        cases: n,
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// (the convention R and spreadsheets default to). Used for stratification
/// cuts, automatic thresholds, and bootstrap percentiles.
pub fn linear_quantile(values: &[f64], p: f64) -> Result<f64, VerifError> {
    if values.is_empty() {
        return Err(VerifError::Empty);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(VerifError::BadLevel { value: p });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(linear_quantile_sorted(&sorted, p))
}

fn linear_quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Binned PIT values on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitHistogram {
    /// bins + 1 edges, uniformly spaced from 0 to 1.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl PitHistogram {
    /// Default bin count for PIT histograms.
    pub const DEFAULT_BINS: usize = 10;

    pub fn from_values(values: &[f64], bins: usize) -> Result<Self, VerifError> {
        if bins == 0 {
            return Err(VerifError::BadData {
                reason: "need at least one bin".into(),
            });
        }
        if values.is_empty() {
            return Err(VerifError::Empty);
        }
        let mut counts = vec![0u64; bins];
        for &v in values {
            if !(0.0..=1.0).contains(&v) {
                return Err(VerifError::BadData {
                    reason: format!("PIT value {v} outside [0, 1]"),
                });
            }
            let idx = ((v * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let bin_edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(Self {
            bin_edges,
            counts,
            total: values.len() as u64,
        })
    }

    /// One CSV row per bin: `bin_lower,bin_upper,count,relative_frequency`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lower,bin_upper,count,relative_frequency\n");
        for (i, count) in self.counts.iter().enumerate() {
            let freq = *count as f64 / self.total as f64;
            out.push_str(&format!(
                "{},{},{count},{freq}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
            ));
        }
        out
    }
}

/// Counts of verification ranks 1..=K+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub ensemble_size: usize,
    /// counts[r - 1] is the number of cases with rank r.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl RankHistogram {
    pub fn from_ranks(ranks: &[usize], ensemble_size: usize) -> Result<Self, VerifError> {
        if ranks.is_empty() {
            return Err(VerifError::Empty);
        }
        if ensemble_size == 0 {
            return Err(VerifError::BadData {
                reason: "ensemble size must be positive".into(),
            });
        }
        let mut counts = vec![0u64; ensemble_size + 1];
        for &r in ranks {
            if r == 0 || r > ensemble_size + 1 {
                return Err(VerifError::BadData {
                    reason: format!("rank {r} outside 1..={}", ensemble_size + 1),
                });
            }
            counts[r - 1] += 1;
        }
        Ok(Self {
            ensemble_size,
            counts,
            total: ranks.len() as u64,
        })
    }

    /// One CSV row per rank: `rank,count,relative_frequency`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,count,relative_frequency\n");
        for (i, count) in self.counts.iter().enumerate() {
            let freq = *count as f64 / self.total as f64;
            out.push_str(&format!("{},{count},{freq}\n", i + 1));
        }
        out
    }
}

/// Mean scores of one stratum, when it holds enough cases to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub mean_score: f64,
    pub reference_mean_score: f64,
    pub skill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub cases: usize,
    /// `None` when the stratum has fewer than two cases.
    pub summary: Option<StratumSummary>,
}

/// Scores split by ensemble-mean magnitude: below the low cut, between the
/// cuts, above the high cut (strict inequalities at both cuts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedScores {
    pub cut_percentiles: (f64, f64),
    pub cut_values: (f64, f64),
    pub low: StratumReport,
    pub medium: StratumReport,
    pub high: StratumReport,
}

/// Splits cases at percentiles of the ensemble mean (cuts given in percent,
/// conventionally (10, 90)) and reports per-stratum mean scores and skill
/// against the reference. Callers verifying several lead times stratify
/// each lead separately.
pub fn stratified_scores(
    ensemble_means: &[f64],
    scores: &[f64],
    reference_scores: &[f64],
    cut_percentiles: (f64, f64),
) -> Result<StratifiedScores, VerifError> {
    let n = ensemble_means.len();
    if scores.len() != n {
        return Err(VerifError::LengthMismatch {
            left: scores.len(),
            right: n,
        });
    }
    if reference_scores.len() != n {
        return Err(VerifError::LengthMismatch {
            left: reference_scores.len(),
            right: n,
        });
    }
    if n == 0 {
        return Err(VerifError::Empty);
    }
    let (p_low, p_high) = cut_percentiles;
    if !(0.0 <= p_low && p_low < p_high && p_high <= 100.0) {
        return Err(VerifError::BadData {
            reason: format!("cuts ({p_low}, {p_high}) must satisfy 0 <= low < high <= 100"),
        });
    }
    let q_low = linear_quantile(ensemble_means, p_low / 100.0)?;
    let q_high = linear_quantile(ensemble_means, p_high / 100.0)?;

    let mut strata: [(usize, f64, f64); 3] = [(0, 0.0, 0.0); 3];
    for ((mean, score), reference) in ensemble_means.iter().zip(scores).zip(reference_scores) {
        let which = if *mean < q_low {
            0
        } else if *mean > q_high {
            2
        } else {
            1
        };
        strata[which].0 += 1;
        strata[which].1 += score;
        strata[which].2 += reference;
    }
    let report = |(cases, sum, ref_sum): (usize, f64, f64)| -> Result<StratumReport, VerifError> {
        let summary = if cases >= 2 {
            let mean_score = sum / cases as f64;
            let reference_mean_score = ref_sum / cases as f64;
            Some(StratumSummary {
                mean_score,
                reference_mean_score,
                skill: skill_score(mean_score, reference_mean_score)?,
            })
        } else {
            None
        };
        Ok(StratumReport { cases, summary })
    };
    Ok(StratifiedScores {
        cut_percentiles,
        cut_values: (q_low, q_high),
        low: report(strata[0])?,
        medium: report(strata[1])?,
        high: report(strata[2])?,
    })
}

/// Default thresholds for tail-weighted verification: the 90th, 95th and
/// 98th percentiles of the observations.
pub fn auto_thresholds(observations: &[f64]) -> Result<Vec<Threshold>, VerifError> {
    [0.90, 0.95, 0.98]
        .iter()
        .map(|&p| Ok(Threshold::new(linear_quantile(observations, p)?)?))
        .collect()
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub mean_twcrps: f64,
    pub reference_mean_twcrps: f64,
    pub skill: f64,
}

/// Mean threshold-weighted CRPS of candidate and reference forecasts at
/// each threshold, with the resulting skill score.
pub fn threshold_sweep(
    forecasts: &[Distribution],
    references: &[Distribution],
    observations: &[f64],
    thresholds: &[Threshold],
) -> Result<Vec<ThresholdPoint>, VerifError> {
    let n = forecasts.len();
    if references.len() != n {
        return Err(VerifError::LengthMismatch {
            left: references.len(),
            right: n,
        });
    }
    if observations.len() != n {
        return Err(VerifError::LengthMismatch {
            left: observations.len(),
            right: n,
        });
    }
    if n == 0 || thresholds.is_empty() {
        return Err(VerifError::Empty);
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let r = t.value();
        let mut cand = 0.0;
        let mut reference = 0.0;
        for ((f, g), obs) in forecasts.iter().zip(references).zip(observations) {
            cand += twcrps(f, *obs, r)?;
            reference += twcrps(g, *obs, r)?;
        }
        let mean_twcrps = cand / n as f64;
        let reference_mean_twcrps = reference / n as f64;
        out.push(ThresholdPoint {
            threshold: r,
            mean_twcrps,
            reference_mean_twcrps,
            skill: skill_score(mean_twcrps, reference_mean_twcrps)?,
        });
    }
    Ok(out)
}

/// One CSV row per threshold:
/// `threshold,mean_twcrps,reference_mean_twcrps,twcrpss`.
pub fn sweep_to_csv(points: &[ThresholdPoint]) -> String {
    let mut out = String::from("threshold,mean_twcrps,reference_mean_twcrps,twcrpss\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.threshold, p.mean_twcrps, p.reference_mean_twcrps, p.skill
        ));
    }
    out
}

/// Probability mass a forecast places on negative values, P(X < 0),
/// summarized across cases by its mean and upper quantiles. Wind speed is
/// non-negative, so any such mass is a forecast defect; families supported
/// on [0, inf) report exactly zero everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeMassSummary {
    pub mean: f64,
    pub q90: f64,
    pub q95: f64,
    pub q99: f64,
    pub cases: usize,
}

pub fn negative_mass_summary(
    forecasts: &[Distribution],
) -> Result<NegativeMassSummary, VerifError> {
    if forecasts.is_empty() {
        return Err(VerifError::Empty);
    }
    let probs: Vec<f64> = forecasts
        .iter()
        .map(|d| match d {
            // strict: an atom exactly at zero is not negative wind
            Distribution::Empirical(e) => e.cdf_left(0.0),
            _ => d.cdf(0.0),
        })
        .collect();
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok(NegativeMassSummary {
        mean,
        q90: linear_quantile(&probs, 0.90)?,
        q95: linear_quantile(&probs, 0.95)?,
        q99: linear_quantile(&probs, 0.99)?,
        cases: probs.len(),
    })
}

/// One aggregated score with optional uncertainty and skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScore {
    pub kind: ScoreKind,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci: Option<BootstrapCi>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skill: Option<f64>,
}

/// Full verification output for one forecast system, ready for JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Format marker for downstream consumers; bumped on layout changes.
    #[serde(default)]
    pub schema_version: u32,
    /// What was verified (family or reference name).
    pub label: String,
    /// What the skill scores compare against, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference: Option<String>,
    pub cases: usize,
    pub scores: Vec<MeanScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intervals: Option<IntervalStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub negative_mass: Option<NegativeMassSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pit: Option<PitHistogram>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pit_ks: Option<KsTest>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ranks: Option<RankHistogram>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank_chi_square: Option<Chi2Test>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strata: Option<StratifiedScores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold_sweep: Option<Vec<ThresholdPoint>>,
}

impl ScoreReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(label: impl Into<String>, cases: usize) -> Self {
        Self {
            schema_version: Self::SCHEMA_VERSION,
            label: label.into(),
            reference: None,
            cases,
            scores: Vec::new(),
            intervals: None,
            negative_mass: None,
            pit: None,
            pit_ks: None,
            ranks: None,
            rank_chi_square: None,
            strata: None,
            threshold_sweep: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
