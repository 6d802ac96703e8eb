//! EMOS calibration: link functions from ensemble statistics to predictive
//! parameters, the mean-score training objective, and the rolling-window
//! fitting harness.
//!
//! A coefficient set maps one forecast case's ensemble statistics to a
//! predictive distribution of the chosen family. Coefficients are estimated
//! by minimizing the mean CRPS (or log score) over a rolling training window;
//! see [`fit`] and [`rolling_calibrate`].

mod fit;
mod optim;

pub use fit::{
    fit, rolling_calibrate, CalibratedCase, ConstraintRecord, DailyFit, FitDiagnostics, FitFailure,
    FittedModel, RollingOutput, SkippedCase, StartPolicy, WindowDescriptor,
};

pub use crate::dataio::GroupSpec;

use crate::dataio::{DataError, EnsembleForecast};
use crate::dist::{
    DistError, Distribution, EmpiricalEnsemble, GevParams, LogNormalParams, TgevParams,
    TruncNormalParams,
};
use crate::scoring::{crps, log_score, ScoreError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound of the admissible shape interval.
pub const SHAPE_MIN: f64 = -0.278;
/// Upper bound of the admissible shape interval (finite mean needs < 1;
/// positive skewness tightens it to 1/3).
pub const SHAPE_MAX: f64 = 1.0 / 3.0;
/// Floor applied to built scale-like parameters, in their native units
/// (sigma^2 for TN, v for LN, sigma for GEV/TGEV).
pub const SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EmosError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("ensemble has {got} members, group spec wants {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("invalid coefficients: {reason}")]
    BadCoefficients { reason: String },
    #[error("invalid training window: {reason}")]
    BadWindow { reason: String },
    #[error("invalid fit configuration: {reason}")]
    BadConfig { reason: String },
    #[error("window has {cases} cases, need at least {needed}")]
    InsufficientData { cases: usize, needed: usize },
    #[error("objective non-finite at the starting point")]
    BadStart,
    #[error("no descent from the starting point (objective {objective})")]
    NoDescent { objective: f64 },
    #[error("case {index}: {source}")]
    Case {
        index: usize,
        #[source]
        source: Box<EmosError>,
    },
}

/// Predictive family of an EMOS model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tn,
    Ln,
    Gev,
    Tgev,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Tn => "tn",
            Family::Ln => "ln",
            Family::Gev => "gev",
            Family::Tgev => "tgev",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the predictive scale is linked to ensemble spread (GEV/TGEV only;
/// TN and LN always use the variance-linear link of their own variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleLink {
    /// sigma = sigma0 + sigma1 * mean(f)
    #[default]
    MeanLinear,
    /// sigma = sigma0 + sigma1 * S
    SdLinear,
    /// sigma = sqrt(sigma0 + sigma1 * S^2)
    VarLinear,
    /// sigma = sigma0 + sigma1 * MD
    MdLinear,
}

/// Summary statistics of one ensemble under a group spec. All reductions run
/// over sorted copies, so any permutation of members within an exchangeable
/// group yields bit-identical statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// Per-group member means, in group order.
    pub group_means: Vec<f64>,
    /// Overall member mean.
    pub mean: f64,
    /// Unbiased sample variance (zero for a single member).
    pub variance: f64,
    /// Mean absolute difference (1/M^2) sum_ij |f_i - f_j|.
    pub mean_abs_diff: f64,
}

/// Group means, overall mean, unbiased variance, and mean absolute
/// difference of one forecast's members.
pub fn ensemble_stats(
    forecast: &EnsembleForecast,
    spec: &GroupSpec,
) -> Result<EnsembleStats, EmosError> {
    let m = spec.member_count();
    if forecast.members.len() != m {
        return Err(EmosError::SizeMismatch {
            got: forecast.members.len(),
            want: m,
        });
    }
    // sort within each group: the canonical member order all sums run over
    let mut ordered = Vec::with_capacity(m);
    let mut group_means = Vec::with_capacity(spec.group_count());
    for range in spec.group_ranges() {
        let start = ordered.len();
        ordered.extend_from_slice(&forecast.members[range]);
        ordered[start..].sort_by(|a, b| a.partial_cmp(b).unwrap());
        let slice = &ordered[start..];
        group_means.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }

    let mf = m as f64;
    let mean = ordered.iter().sum::<f64>() / mf;
    let variance = if m > 1 {
        ordered.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (mf - 1.0)
    } else {
        0.0
    };

    // the pairwise sum only needs the globally sorted members:
    // sum_ij |f_i - f_j| = 2 sum_k (2k - M + 1) f_(k)
    ordered.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pair: f64 = ordered
        .iter()
        .enumerate()
        .map(|(k, f)| (2.0 * k as f64 - (mf - 1.0)) * f)
        .sum();
    let mean_abs_diff = 2.0 * pair / (mf * mf);

    Ok(EnsembleStats {
        group_means,
        mean,
        variance,
        mean_abs_diff,
    })
}

/// One fitted EMOS coefficient set.
///
/// `location` holds the intercept followed by one weight per exchangeable
/// group; `scale` holds the two spread coefficients in the native units of
/// the family's scale link; `shape` is present exactly for GEV/TGEV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficients")]
pub struct EmosCoefficients {
    family: Family,
    scale_link: ScaleLink,
    location: Vec<f64>,
    scale: [f64; 2],
    shape: Option<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawCoefficients {
    family: Family,
    scale_link: ScaleLink,
    location: Vec<f64>,
    scale: [f64; 2],
    shape: Option<f64>,
}

impl TryFrom<RawCoefficients> for EmosCoefficients {
    type Error = EmosError;
    fn try_from(r: RawCoefficients) -> Result<Self, Self::Error> {
        Self::new(r.family, r.scale_link, r.location, r.scale, r.shape)
    }
}

impl EmosCoefficients {
    pub fn new(
        family: Family,
        scale_link: ScaleLink,
        location: Vec<f64>,
        scale: [f64; 2],
        shape: Option<f64>,
    ) -> Result<Self, EmosError> {
        let bad = |reason: String| Err(EmosError::BadCoefficients { reason });
        if location.len() < 2 {
            return bad("need an intercept and at least one group weight".into());
        }
        if location.iter().chain(&scale).any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        if scale[0] < 0.0 || scale[1] < 0.0 {
            return bad(format!("scale coefficients must be >= 0, got {scale:?}"));
        }
        match family {
            Family::Tn => {
                if let Some(&v) = location.iter().find(|&&v| v < 0.0) {
                    return bad(format!("TN location coefficients must be >= 0, got {v}"));
                }
            }
            Family::Ln => {
                if let Some(&v) = location[1..].iter().find(|&&v| v < 0.0) {
                    return bad(format!("LN group weights must be >= 0, got {v}"));
                }
            }
            Family::Gev | Family::Tgev => {}
        }
        match (family, shape) {
            (Family::Tn | Family::Ln, Some(_)) => {
                return bad(format!("{family} takes no shape parameter"));
            }
            (Family::Gev | Family::Tgev, None) => {
                return bad(format!("{family} requires a shape parameter"));
            }
            (Family::Gev | Family::Tgev, Some(xi)) => {
                if !(xi > SHAPE_MIN && xi < SHAPE_MAX) {
                    return bad(format!(
                        "shape {xi} outside ]{SHAPE_MIN}, {SHAPE_MAX}["
                    ));
                }
            }
            _ => {}
        }
        if matches!(family, Family::Tn | Family::Ln) && scale_link != ScaleLink::VarLinear {
            return bad(format!(
                "{family} links its variance to S^2; scale_link must be var_linear"
            ));
        }
        Ok(Self {
            family,
            scale_link,
            location,
            scale,
            shape,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale_link(&self) -> ScaleLink {
        self.scale_link
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn scale(&self) -> [f64; 2] {
        self.scale
    }

    pub fn shape(&self) -> Option<f64> {
        self.shape
    }

    /// Number of exchangeable groups this set was fitted for.
    pub fn group_count(&self) -> usize {
        self.location.len() - 1
    }

    /// Number of free parameters under the family's constraints.
    pub fn free_parameters(&self) -> usize {
        self.location.len() + 2 + usize::from(self.shape.is_some())
    }
}

/// Applies the coefficient set to one case's statistics, yielding the
/// predictive distribution. Scale-like parameters are floored at
/// [`SCALE_FLOOR`] (as is the LN mean, which enters through its logarithm).
pub fn build_params(
    coeffs: &EmosCoefficients,
    stats: &EnsembleStats,
) -> Result<Distribution, EmosError> {
    if stats.group_means.len() != coeffs.group_count() {
        return Err(EmosError::SizeMismatch {
            got: stats.group_means.len(),
            want: coeffs.group_count(),
        });
    }
    let loc = coeffs.location[0]
        + coeffs
            .location[1..]
            .iter()
            .zip(&stats.group_means)
            .map(|(a, f)| a * f)
            .sum::<f64>();
    let [c0, c1] = coeffs.scale;
    let dist = match coeffs.family {
        Family::Tn => {
            let var = (c0 + c1 * stats.variance).max(SCALE_FLOOR);
            Distribution::TruncNormal(TruncNormalParams::new(loc, var.sqrt())?)
        }
        Family::Ln => {
            let mean = loc.max(SCALE_FLOOR);
            let var = (c0 + c1 * stats.variance).max(SCALE_FLOOR);
            Distribution::LogNormal(LogNormalParams::from_moments(mean, var)?)
        }
        Family::Gev | Family::Tgev => {
            let sigma = match coeffs.scale_link {
                ScaleLink::MeanLinear => c0 + c1 * stats.mean,
                ScaleLink::SdLinear => c0 + c1 * stats.variance.sqrt(),
                ScaleLink::VarLinear => (c0 + c1 * stats.variance).sqrt(),
                ScaleLink::MdLinear => c0 + c1 * stats.mean_abs_diff,
            }
            .max(SCALE_FLOOR);
            let xi = coeffs.shape.expect("validated at construction");
            if coeffs.family == Family::Gev {
                Distribution::Gev(GevParams::new(loc, sigma, xi)?)
            } else {
                Distribution::Tgev(TgevParams::new(loc, sigma, xi)?)
            }
        }
    };
    Ok(dist)
}

/// Which mean score the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean closed-form CRPS over the window (optimum score estimation).
    #[default]
    MeanCrps,
    /// Mean log score, i.e. maximum likelihood.
    LogLikelihood,
}

/// Whether coefficients are shared across stations or fitted per station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    #[default]
    Global,
    Local,
}

/// Training input for one fit: forecast/observation pairs sharing a group
/// spec and lead time.
#[derive(Debug, Clone)]
pub struct TrainingWindow<'a> {
    cases: Vec<(&'a EnsembleForecast, f64)>,
    group_spec: &'a GroupSpec,
    window_days: usize,
    scope: Scope,
    station: Option<String>,
}

impl<'a> TrainingWindow<'a> {
    pub fn new(
        group_spec: &'a GroupSpec,
        cases: Vec<(&'a EnsembleForecast, f64)>,
        window_days: usize,
        scope: Scope,
        station: Option<String>,
    ) -> Result<Self, EmosError> {
        if cases.is_empty() {
            return Err(EmosError::BadWindow {
                reason: "window is empty".into(),
            });
        }
        let want = group_spec.member_count();
        let lead = cases[0].0.lead_time_h;
        for (f, obs) in &cases {
            if f.members.len() != want {
                return Err(EmosError::SizeMismatch {
                    got: f.members.len(),
                    want,
                });
            }
            if f.lead_time_h != lead {
                return Err(EmosError::BadWindow {
                    reason: format!(
                        "mixed lead times in one window: {lead} and {}",
                        f.lead_time_h
                    ),
                });
            }
            if !obs.is_finite() || *obs < 0.0 {
                return Err(EmosError::BadWindow {
                    reason: format!("bad observation {obs}"),
                });
            }
        }
        if (scope == Scope::Local) != station.is_some() {
            return Err(EmosError::BadWindow {
                reason: "local windows carry a station, global windows none".into(),
            });
        }
        Ok(Self {
            cases,
            group_spec,
            window_days,
            scope,
            station,
        })
    }

    pub fn cases(&self) -> &[(&'a EnsembleForecast, f64)] {
        &self.cases
    }

    pub fn group_spec(&self) -> &GroupSpec {
        self.group_spec
    }

    pub fn window_days(&self) -> usize {
        self.window_days
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn station(&self) -> Option<&str> {
        self.station.as_deref()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Observations of the window, in case order.
    pub fn observations(&self) -> Vec<f64> {
        self.cases.iter().map(|(_, o)| *o).collect()
    }
}

/// Optimization settings for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub objective: Objective,
    pub scale_link: ScaleLink,
    /// Optimizer iteration cap.
    pub max_iterations: usize,
    /// Stop when the max-norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the accepted step falls below this.
    pub step_tol: f64,
    #[serde(default)]
    pub start: StartPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            objective: Objective::MeanCrps,
            scale_link: ScaleLink::MeanLinear,
            max_iterations: 200,
            grad_tol: 1e-6,
            step_tol: 1e-9,
            start: StartPolicy::Default,
        }
    }
}

/// Mean CRPS or mean log score of the coefficient set over a window.
pub fn objective(
    coeffs: &EmosCoefficients,
    window: &TrainingWindow<'_>,
    config: &FitConfig,
) -> Result<f64, EmosError> {
    let mut total = 0.0;
    for (index, (forecast, obs)) in window.cases().iter().enumerate() {
        let attach = |source: EmosError| EmosError::Case {
            index,
            source: Box::new(source),
        };
        let stats = ensemble_stats(forecast, window.group_spec()).map_err(attach)?;
        total += case_score(coeffs, &stats, *obs, config.objective).map_err(attach)?;
    }
    Ok(total / window.len() as f64)
}

/// Score of one case under the configured objective.
pub(crate) fn case_score(
    coeffs: &EmosCoefficients,
    stats: &EnsembleStats,
    obs: f64,
    objective: Objective,
) -> Result<f64, EmosError> {
    let dist = build_params(coeffs, stats)?;
    let v = match objective {
        Objective::MeanCrps => crps(&dist, obs)?,
        Objective::LogLikelihood => log_score(&dist, obs)?,
    };
    Ok(v)
}

/// The training observations viewed as an ensemble: the climatological
/// reference forecast.
pub fn climatology_forecast(window: &TrainingWindow<'_>) -> EmpiricalEnsemble {
    EmpiricalEnsemble::new(window.observations()).expect("window observations are validated")
}
