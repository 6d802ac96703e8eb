//! Stationary block bootstrap for mean scores, plus the two classical
//! uniformity tests the histograms are checked with.
//!
//! Score series from rolling verification are serially dependent (shared
//! weather regimes, carried-forward coefficients), so i.i.d. resampling
//! understates the variance of the mean. The stationary bootstrap resamples
//! circular blocks with geometrically distributed lengths, which preserves
//! short-range dependence while keeping the resampled series stationary.

use super::{linear_quantile, VerifError};
use crate::rng::{name_tag, stream, uniform_open01};
use crate::special::{reg_upper_gamma, SpecialError};
use serde::{Deserialize, Serialize};

/// Percentile confidence interval for a series mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    pub mean_block_length: f64,
}

/// Minimum series length for a meaningful resample.
const MIN_SERIES: usize = 10;

/// Percentile CI of the series mean from `replicates` stationary-bootstrap
/// resamples. Blocks have geometric lengths with the given mean (default
/// ceil(n^(1/3))) and wrap circularly. Deterministic in the seed.
pub fn stationary_bootstrap_ci(
    series: &[f64],
    replicates: usize,
    level: f64,
    mean_block_length: Option<f64>,
    seed: u64,
) -> Result<BootstrapCi, VerifError> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(VerifError::SeriesTooShort {
            len: n,
            min: MIN_SERIES,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(VerifError::BadData {
            reason: "series contains non-finite values".into(),
        });
    }
    if replicates == 0 {
        return Err(VerifError::BadData {
            reason: "need at least one replicate".into(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(VerifError::BadLevel { value: level });
    }
    let block = match mean_block_length {
        Some(l) => {
            if !(l >= 1.0) || !l.is_finite() {
                return Err(VerifError::BadData {
                    reason: format!("mean block length {l} must be >= 1"),
                });
            }
            l
        }
        None => (n as f64).cbrt().ceil(),
    };
    // probability of ending the current block at each step
    let p_new = 1.0 / block;

    let mut rng = stream(seed, &[name_tag("stationary-bootstrap")]);
    let nf = n as f64;
    let draw_index = |rng: &mut _| ((uniform_open01(rng) * nf) as usize).min(n - 1);

    let point = series.iter().sum::<f64>() / nf;
    let mut means = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut idx = draw_index(&mut rng);
        let mut sum = series[idx];
        for _ in 1..n {
            if uniform_open01(&mut rng) < p_new {
                idx = draw_index(&mut rng);
            } else {
                idx = (idx + 1) % n;
            }
            sum += series[idx];
        }
        means.push(sum / nf);
    }

    let tail = (1.0 - level) / 2.0;
    let lower = linear_quantile(&means, tail)?;
    let upper = linear_quantile(&means, 1.0 - tail)?;
    // the percentile interval of a skewed replicate cloud can just miss the
    // sample mean; widen to keep the point inside
    Ok(BootstrapCi {
        point,
        lower: lower.min(point),
        upper: upper.max(point),
        level,
        replicates,
        mean_block_length: block,
    })
}

/// Kolmogorov–Smirnov test of a sample against the uniform law on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub cases: usize,
}

/// One-sample KS test against U(0, 1) with the asymptotic significance
/// approximation.
pub fn ks_uniform(values: &[f64]) -> Result<KsTest, VerifError> {
    let n = values.len();
    if n == 0 {
        return Err(VerifError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] < 0.0 || sorted[n - 1] > 1.0 || sorted.iter().any(|v| !v.is_finite()) {
        return Err(VerifError::BadData {
            reason: "KS input must lie in [0, 1]".into(),
        });
    }
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        d = d.max((i + 1) as f64 / nf - v).max(v - i as f64 / nf);
    }
    let lambda = (nf.sqrt() + 0.12 + 0.11 / nf.sqrt()) * d;
    Ok(KsTest {
        statistic: d,
        p_value: ks_significance(lambda),
        cases: n,
    })
}

/// Q_KS(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2).
fn ks_significance(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square test of histogram counts against equal expected
/// frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Test {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

pub fn chi_square_uniform(counts: &[u64]) -> Result<Chi2Test, VerifError> {
    let bins = counts.len();
    if bins < 2 {
        return Err(VerifError::BadData {
            reason: "chi-square needs at least two bins".into(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(VerifError::Empty);
    }
    let expected = total as f64 / bins as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = bins - 1;
    let p_value = chi2_survival(statistic, dof)?;
    Ok(Chi2Test {
        statistic,
        degrees_of_freedom: dof,
        p_value,
    })
}

fn chi2_survival(x: f64, dof: usize) -> Result<f64, SpecialError> {
    reg_upper_gamma(dof as f64 / 2.0, x / 2.0)
}
