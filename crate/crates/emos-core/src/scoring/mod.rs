//! Proper scoring rules.
//!
//! Closed-form CRPS for the four parametric families (the truncated-GEV form
//! with its incomplete-gamma and exponential-integral terms included), the
//! empirical-ensemble CRPS, threshold-weighted CRPS by quadrature, the log
//! score, point-forecast errors and skill scores. All scores are negatively
//! oriented: smaller is better.
//!
//! `crps_numeric` integrates the defining integral directly and acts as the
//! oracle the closed forms are tested against; any transcription slip in a
//! formula shows up as a closed-form/quadrature mismatch.

mod numeric;

pub use numeric::{crps_numeric, crps_quadrature, twcrps};

use crate::dist::{
    DistError, Distribution, GevParams, LogNormalParams, TgevParams, TruncNormalParams,
};
use crate::quad::QuadError;
use crate::special::{
    exp_integral_ei, gamma_fn, lower_incomplete_gamma, std_normal_cdf, std_normal_pdf,
    SpecialError, EULER_MASCHERONI,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log-score stand-in for zero predictive density (~ -ln 1e-15): large enough
/// to dominate any realistic density, finite enough not to poison averages.
pub const LOG_SCORE_PENALTY: f64 = 35.0;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("quadrature failure: {0}")]
    Quad(#[from] QuadError),
    #[error("CRPS undefined for shape {shape} >= 1 (infinite first moment)")]
    ShapeDomain { shape: f64 },
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("reference score must be > 0 (got {value})")]
    RefNotPositive { value: f64 },
    #[error("threshold must be finite (got {value})")]
    BadThreshold { value: f64 },
}

/// Kind tag for a single verification score value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Crps,
    Twcrps,
    Logs,
    AbsErr,
    SqErr,
}

/// One scored case: m/s for crps/twcrps/abs_err/sq_err, nats for logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub kind: ScoreKind,
    pub value: f64,
}

/// A finite wind-speed threshold for threshold-weighted scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(r: f64) -> Result<Self, ScoreError> {
        if r.is_finite() {
            Ok(Self(r))
        } else {
            Err(ScoreError::BadThreshold { value: r })
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// CRPS of any predictive distribution: closed forms for the parametric
/// families, the exact ensemble formula for empirical laws.
pub fn crps(dist: &Distribution, x: f64) -> Result<f64, ScoreError> {
    match dist {
        Distribution::TruncNormal(p) => crps_tn(p, x),
        Distribution::LogNormal(p) => crps_ln(p, x),
        Distribution::Gev(p) => crps_gev(p, x),
        Distribution::Tgev(p) => crps_tgev(p, x),
        Distribution::Empirical(p) => crps_ensemble(p.values(), x),
    }
}

/// Closed-form CRPS of the zero-truncated normal law.
///
/// With c = mu/sigma, z = (x-mu)/sigma and alpha = Phi(c):
/// sigma alpha^-2 [ z alpha (2 Phi(z) + alpha - 2) + 2 phi(z) alpha
///                  - Phi(c sqrt2) / sqrt(pi) ].
/// Observations are nonnegative; negative x is scored at the support edge.
pub fn crps_tn(p: &TruncNormalParams, x: f64) -> Result<f64, ScoreError> {
    let x = x.max(0.0);
    let sigma = p.scale();
    let c = p.location() / sigma;
    let z = (x - p.location()) / sigma;
    let alpha = std_normal_cdf(c);
    let v = z * alpha * (2.0 * std_normal_cdf(z) + alpha - 2.0) + 2.0 * std_normal_pdf(z) * alpha
        - std_normal_cdf(c * std::f64::consts::SQRT_2) / std::f64::consts::PI.sqrt();
    Ok(sigma * v / (alpha * alpha))
}

/// Closed-form CRPS of the log-normal law.
///
/// With omega = (ln x - mu)/sigma and m = exp(mu + sigma^2/2):
/// x (2 Phi(omega) - 1) - 2m [ Phi(omega - sigma) + Phi(sigma/sqrt2) - 1 ].
pub fn crps_ln(p: &LogNormalParams, x: f64) -> Result<f64, ScoreError> {
    let x = x.max(0.0);
    let (mu, sigma) = (p.mu(), p.sigma());
    let m = (mu + 0.5 * sigma * sigma).exp();
    let half = std_normal_cdf(sigma * std::f64::consts::FRAC_1_SQRT_2);
    if x == 0.0 {
        // limit of the general expression as x -> 0+
        return Ok(2.0 * m * (1.0 - half));
    }
    let omega = (x.ln() - mu) / sigma;
    Ok(x * (2.0 * std_normal_cdf(omega) - 1.0)
        - 2.0 * m * (std_normal_cdf(omega - sigma) + half - 1.0))
}

/// Closed-form CRPS of the GEV law; requires shape < 1 for a finite value.
pub fn crps_gev(p: &GevParams, x: f64) -> Result<f64, ScoreError> {
    if p.shape() >= 1.0 {
        return Err(ScoreError::ShapeDomain { shape: p.shape() });
    }
    let (mu, sigma, xi) = (p.location(), p.scale(), p.shape());
    let s = p.survival_at(x);
    if p.is_gumbel() {
        return Ok(crps_gumbel_from_survival(mu, sigma, x, s));
    }
    // (2G-1)(x - mu + sigma/xi) + sigma/xi (2 gamma_l(1-xi, s) - 2^xi Gamma(1-xi))
    let a = 1.0 - xi;
    let g = (-s).exp();
    let bracket = 2.0 * lower_incomplete_gamma(a, s)? - 2f64.powf(xi) * gamma_fn(a)?;
    Ok((2.0 * g - 1.0) * (x - mu + sigma / xi) + sigma / xi * bracket)
}

/// Gumbel CRPS phrased through the survival exponent s = exp(-(x-mu)/sigma):
/// mu - x + sigma (C - ln 2) - 2 sigma Ei(-s).
fn crps_gumbel_from_survival(mu: f64, sigma: f64, x: f64, s: f64) -> f64 {
    if s == 0.0 {
        // s underflowed: exact limit of the formula far in the upper tail
        return (x - mu) - sigma * (EULER_MASCHERONI + std::f64::consts::LN_2);
    }
    let ei = exp_integral_ei(-s).expect("Ei on negative arguments is total");
    mu - x + sigma * (EULER_MASCHERONI - std::f64::consts::LN_2) - 2.0 * sigma * ei
}

/// Closed-form CRPS of the truncated GEV law.
///
/// The general-shape branch groups incomplete-gamma terms at -2 ln G(0),
/// -ln G(0) and -ln G(x); the zero-shape branch trades them for exponential
/// integrals and the C - ln 2 constant. When G(0) = 0 both branches reduce to
/// the untruncated GEV expressions along the same code path.
pub fn crps_tgev(p: &TgevParams, x: f64) -> Result<f64, ScoreError> {
    if p.shape() >= 1.0 {
        return Err(ScoreError::ShapeDomain { shape: p.shape() });
    }
    let x = x.max(0.0);
    let (mu, sigma, xi) = (p.location(), p.scale(), p.shape());
    let s = p.parent().survival_at(x);
    let s0 = p.s0();
    let omp = p.one_minus_p0(); // 1 - G(0), exactly 1 when s0 = inf
    let p0 = p.truncation_mass();
    let g0x = p.cdf(x);

    if p.parent().is_gumbel() {
        // (x-mu)(2 G0 - 1)
        //   + sigma/(1-G0(0))^2 [ C - ln2 + Ei(-2 s0) + G(0)^2 ln s0 - 2 G(0) Ei(-s0) ]
        //   + 2 sigma/(1-G(0)) [ G(x) ln s - Ei(-s) ]
        let trunc_terms = if s0.is_infinite() {
            0.0
        } else {
            p0 * p0 * s0.ln() - 2.0 * p0 * exp_integral_ei(-s0)?
                + exp_integral_ei(-2.0 * s0)?
        };
        let core = EULER_MASCHERONI - std::f64::consts::LN_2 + trunc_terms;
        let tail = if s == 0.0 {
            // limit of G(x) ln s - Ei(-s) as s -> 0
            -EULER_MASCHERONI
        } else {
            (-s).exp() * s.ln() - exp_integral_ei(-s)?
        };
        return Ok((x - mu) * (2.0 * g0x - 1.0)
            + sigma * core / (omp * omp)
            + 2.0 * sigma * tail / omp);
    }

    // (2 G0(x) - 1)(x - mu + sigma/xi) + sigma/(xi (1-G(0))^2) *
    //   [ -2^xi gamma_l(1-xi, 2 s0) + 2 G(0) gamma_l(1-xi, s0)
    //     + 2 (1-G(0)) gamma_l(1-xi, s) ]
    let a = 1.0 - xi;
    let bracket = -(2f64.powf(xi)) * lower_incomplete_gamma(a, 2.0 * s0)?
        + 2.0 * p0 * lower_incomplete_gamma(a, s0)?
        + 2.0 * omp * lower_incomplete_gamma(a, s)?;
    Ok((2.0 * g0x - 1.0) * (x - mu + sigma / xi) + sigma * bracket / (xi * omp * omp))
}

/// Exact ensemble CRPS: mean |f_i - x| - (1/2M^2) sum |f_i - f_j|.
/// O(M log M) via the order-statistic form of the pairwise term.
pub fn crps_ensemble(members: &[f64], x: f64) -> Result<f64, ScoreError> {
    let m = members.len();
    if m == 0 {
        return Err(ScoreError::EmptySeries);
    }
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut abs_sum = 0.0;
    let mut pair_sum = 0.0; // sum_{i<j} (f_(j) - f_(i))
    for (k, &f) in sorted.iter().enumerate() {
        abs_sum += (f - x).abs();
        pair_sum += (2.0 * k as f64 - (m as f64 - 1.0)) * f;
    }
    let mf = m as f64;
    Ok(abs_sum / mf - pair_sum / (mf * mf))
}

/// Negative log predictive density; zero density maps to the finite penalty.
pub fn log_score(dist: &Distribution, x: f64) -> Result<f64, ScoreError> {
    let pdf = dist.pdf(x)?;
    if pdf > 0.0 && pdf.is_finite() {
        Ok(-pdf.ln())
    } else {
        Ok(LOG_SCORE_PENALTY)
    }
}

/// Mean absolute error of a point-forecast series (optimal for medians).
pub fn mae(forecasts: &[f64], observations: &[f64]) -> Result<f64, ScoreError> {
    paired(forecasts, observations)?;
    let n = forecasts.len() as f64;
    Ok(forecasts
        .iter()
        .zip(observations)
        .map(|(f, o)| (f - o).abs())
        .sum::<f64>()
        / n)
}

/// Root mean squared error of a point-forecast series (optimal for means).
pub fn rmse(forecasts: &[f64], observations: &[f64]) -> Result<f64, ScoreError> {
    paired(forecasts, observations)?;
    let n = forecasts.len() as f64;
    Ok((forecasts
        .iter()
        .zip(observations)
        .map(|(f, o)| (f - o) * (f - o))
        .sum::<f64>()
        / n)
        .sqrt())
}

fn paired(a: &[f64], b: &[f64]) -> Result<(), ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(ScoreError::EmptySeries);
    }
    Ok(())
}

/// 1 - score/score_ref: positive when the forecast beats the reference.
pub fn skill_score(mean_score: f64, mean_score_ref: f64) -> Result<f64, ScoreError> {
    if !(mean_score_ref > 0.0) {
        return Err(ScoreError::RefNotPositive {
            value: mean_score_ref,
        });
    }
    Ok(1.0 - mean_score / mean_score_ref)
}
