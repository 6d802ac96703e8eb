//! Coefficient estimation: minimum-score fitting of one window and the
//! rolling day-by-day calibration harness.
//!
//! Constrained coefficients are optimized through smooth reparametrizations:
//! nonnegative coordinates as theta = t^2, the shape through a scaled
//! logistic onto the admissible interval. The optimizer therefore runs
//! unconstrained, and every iterate maps to a valid coefficient set.

use super::optim::{minimize, solve_linear};
use super::{
    build_params, case_score, ensemble_stats, EmosCoefficients, EmosError, EnsembleStats, Family,
    FitConfig, Scope, TrainingWindow, SHAPE_MAX, SHAPE_MIN,
};
use crate::dataio::Dataset;
use crate::dist::Distribution;
use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Where the optimizer starts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// Least-squares location coefficients (clipped into the constraint set)
    /// for TN/LN; fixed neutral starts for GEV/TGEV.
    #[default]
    Default,
    /// Start from a previously fitted coefficient set, e.g. yesterday's.
    Warm(EmosCoefficients),
}

/// Convergence record of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// The constraints that were enforced, spelled out so a serialized
/// coefficient file is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    /// Per location coefficient (intercept first): was it held >= 0?
    pub location_nonnegative: Vec<bool>,
    /// Both scale coefficients are always held >= 0.
    pub scale_nonnegative: bool,
    /// Open interval the shape was confined to, when the family has one.
    pub shape_interval: Option<[f64; 2]>,
    /// Floor applied to built scale parameters, native units.
    pub scale_floor: f64,
}

impl ConstraintRecord {
    fn for_family(family: Family, groups: usize) -> Self {
        let location_nonnegative = match family {
            Family::Tn => vec![true; groups + 1],
            Family::Ln => {
                let mut v = vec![true; groups + 1];
                v[0] = false;
                v
            }
            Family::Gev | Family::Tgev => vec![false; groups + 1],
        };
        let shape_interval = matches!(family, Family::Gev | Family::Tgev)
            .then_some([SHAPE_MIN, SHAPE_MAX]);
        Self {
            location_nonnegative,
            scale_nonnegative: true,
            shape_interval,
            scale_floor: super::SCALE_FLOOR,
        }
    }
}

/// Summary of the window a model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDescriptor {
    pub window_days: usize,
    pub scope: Scope,
    pub station: Option<String>,
    pub cases: usize,
    pub lead_time_h: u32,
    pub first_valid_time: DateTime<Utc>,
    pub last_valid_time: DateTime<Utc>,
}

/// A fitted coefficient set plus everything needed to interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub coefficients: EmosCoefficients,
    pub constraints: ConstraintRecord,
    pub window: WindowDescriptor,
    pub diagnostics: FitDiagnostics,
}

#[derive(Clone, Copy)]
enum Transform {
    Free,
    NonNeg,
    Shape,
}

impl Transform {
    /// Natural parameter from the optimizer's coordinate.
    fn apply(self, t: f64) -> f64 {
        match self {
            Transform::Free => t,
            Transform::NonNeg => t * t,
            Transform::Shape => {
                // a saturated logistic can round onto the boundary itself;
                // nudge back inside the open interval
                let xi = SHAPE_MIN + (SHAPE_MAX - SHAPE_MIN) / (1.0 + (-t).exp());
                xi.clamp(SHAPE_MIN + 1e-12, SHAPE_MAX - 1e-12)
            }
        }
    }

    /// Optimizer coordinate for a natural starting value. Nonnegative
    /// coordinates get a small jitter so a start clipped to zero still has
    /// a live gradient.
    fn invert(self, theta: f64) -> f64 {
        match self {
            Transform::Free => theta,
            Transform::NonNeg => (theta + 1e-6).sqrt(),
            Transform::Shape => {
                let p = (theta - SHAPE_MIN) / (SHAPE_MAX - SHAPE_MIN);
                (p / (1.0 - p)).ln()
            }
        }
    }
}

/// Coordinate layout: location coefficients, two scale coefficients, then
/// the shape for the families that have one.
fn transforms_for(family: Family, groups: usize) -> Vec<Transform> {
    let mut t = Vec::with_capacity(groups + 4);
    match family {
        Family::Tn => t.extend(std::iter::repeat(Transform::NonNeg).take(groups + 1)),
        Family::Ln => {
            t.push(Transform::Free);
            t.extend(std::iter::repeat(Transform::NonNeg).take(groups));
        }
        Family::Gev | Family::Tgev => {
            t.extend(std::iter::repeat(Transform::Free).take(groups + 1));
        }
    }
    t.push(Transform::NonNeg);
    t.push(Transform::NonNeg);
    if matches!(family, Family::Gev | Family::Tgev) {
        t.push(Transform::Shape);
    }
    t
}

fn dimension(family: Family, groups: usize) -> usize {
    groups + 3 + usize::from(matches!(family, Family::Gev | Family::Tgev))
}

fn coeffs_from_theta(
    family: Family,
    config: &FitConfig,
    groups: usize,
    theta: &[f64],
) -> Result<EmosCoefficients, EmosError> {
    let location = theta[..groups + 1].to_vec();
    let scale = [theta[groups + 1], theta[groups + 2]];
    let shape = matches!(family, Family::Gev | Family::Tgev).then(|| theta[groups + 3]);
    EmosCoefficients::new(family, config.scale_link, location, scale, shape)
}

fn theta_from_coeffs(coeffs: &EmosCoefficients) -> Vec<f64> {
    let mut theta = coeffs.location().to_vec();
    theta.extend(coeffs.scale());
    theta.extend(coeffs.shape());
    theta
}

/// Ordinary least squares of the observations on the group means, clipped
/// into the family's constraint set. Singular designs (e.g. a window with
/// constant ensembles) fall back to the mean observation as intercept.
fn regression_start(family: Family, data: &[(EnsembleStats, f64)], groups: usize) -> Vec<f64> {
    let n = groups + 1;
    let mut xtx = vec![vec![0.0; n]; n];
    let mut xty = vec![0.0; n];
    for (stats, obs) in data {
        let mut row = Vec::with_capacity(n);
        row.push(1.0);
        row.extend_from_slice(&stats.group_means);
        for i in 0..n {
            for j in 0..n {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * obs;
        }
    }
    let mut beta = solve_linear(xtx, xty).unwrap_or_else(|| {
        let mean_obs = data.iter().map(|(_, o)| o).sum::<f64>() / data.len() as f64;
        let mut b = vec![0.0; n];
        b[0] = mean_obs;
        b
    });
    let clip_from = if family == Family::Ln { 1 } else { 0 };
    for b in beta.iter_mut().skip(clip_from) {
        if *b < 0.0 {
            *b = 0.0;
        }
    }
    beta
}

/// Natural-parameter starting vector for the default policy.
fn default_start(family: Family, data: &[(EnsembleStats, f64)], groups: usize) -> Vec<f64> {
    match family {
        Family::Tn | Family::Ln => {
            let mut theta = regression_start(family, data, groups);
            theta.extend([1.0, 0.5]);
            theta
        }
        Family::Gev | Family::Tgev => {
            let mut theta = vec![0.0];
            theta.extend(std::iter::repeat(1.0 / groups as f64).take(groups));
            theta.extend([0.5, 0.1, 0.1]);
            theta
        }
    }
}

/// Fits one coefficient set to a training window by minimizing the mean
/// score. The returned model never scores worse than its starting point on
/// the window.
pub fn fit(
    window: &TrainingWindow<'_>,
    family: Family,
    config: &FitConfig,
) -> Result<FittedModel, EmosError> {
    if config.max_iterations == 0 {
        return Err(EmosError::BadConfig {
            reason: "max_iterations must be at least 1".into(),
        });
    }
    if !(config.grad_tol > 0.0) || !(config.step_tol > 0.0) {
        return Err(EmosError::BadConfig {
            reason: "tolerances must be positive".into(),
        });
    }
    if matches!(family, Family::Tn | Family::Ln)
        && config.scale_link != super::ScaleLink::VarLinear
    {
        return Err(EmosError::BadConfig {
            reason: format!("{family} supports only the var_linear scale link"),
        });
    }

    let groups = window.group_spec().group_count();
    let needed = dimension(family, groups) + 2;
    if window.len() < needed {
        return Err(EmosError::InsufficientData {
            cases: window.len(),
            needed,
        });
    }

    // statistics are fixed per case; compute them once, not per evaluation
    let mut data = Vec::with_capacity(window.len());
    for (index, (forecast, obs)) in window.cases().iter().enumerate() {
        let stats = ensemble_stats(forecast, window.group_spec()).map_err(|e| EmosError::Case {
            index,
            source: Box::new(e),
        })?;
        data.push((stats, *obs));
    }

    let theta0 = match &config.start {
        StartPolicy::Default => default_start(family, &data, groups),
        StartPolicy::Warm(c) => {
            if c.family() != family
                || c.group_count() != groups
                || c.scale_link() != config.scale_link
            {
                return Err(EmosError::BadConfig {
                    reason: "warm start does not match the requested model".into(),
                });
            }
            theta_from_coeffs(c)
        }
    };
    let transforms = transforms_for(family, groups);
    let t0: Vec<f64> = theta0
        .iter()
        .zip(&transforms)
        .map(|(&theta, tr)| tr.invert(theta))
        .collect();

    let mean_score = |t: &[f64]| -> Option<f64> {
        let theta: Vec<f64> = t.iter().zip(&transforms).map(|(&ti, tr)| tr.apply(ti)).collect();
        let coeffs = coeffs_from_theta(family, config, groups, &theta).ok()?;
        let mut total = 0.0;
        for (stats, obs) in &data {
            total += case_score(&coeffs, stats, *obs, config.objective).ok()?;
        }
        Some(total / data.len() as f64)
    };

    let initial_objective = match mean_score(&t0) {
        Some(v) if v.is_finite() => v,
        _ => return Err(EmosError::BadStart),
    };

    let m = minimize(
        mean_score,
        &t0,
        config.max_iterations,
        config.grad_tol,
        config.step_tol,
    );
    if !m.converged && m.value >= initial_objective {
        return Err(EmosError::NoDescent {
            objective: initial_objective,
        });
    }

    let theta: Vec<f64> = m
        .x
        .iter()
        .zip(&transforms)
        .map(|(&ti, tr)| tr.apply(ti))
        .collect();
    let coefficients = coeffs_from_theta(family, config, groups, &theta)?;
    let first = window.cases().iter().map(|(f, _)| f.valid_time).min().unwrap();
    let last = window.cases().iter().map(|(f, _)| f.valid_time).max().unwrap();
    Ok(FittedModel {
        coefficients,
        constraints: ConstraintRecord::for_family(family, groups),
        window: WindowDescriptor {
            window_days: window.window_days(),
            scope: window.scope(),
            station: window.station().map(str::to_owned),
            cases: window.len(),
            lead_time_h: window.cases()[0].0.lead_time_h,
            first_valid_time: first,
            last_valid_time: last,
        },
        diagnostics: FitDiagnostics {
            iterations: m.iterations,
            evaluations: m.evaluations,
            converged: m.converged,
            initial_objective,
            final_objective: m.value,
        },
    })
}

/// One verification case with its calibrated predictive distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCase {
    pub station_id: String,
    pub valid_time: DateTime<Utc>,
    pub lead_time_h: u32,
    pub members: Vec<f64>,
    pub observation: f64,
    pub params: Distribution,
    /// True when this day's fit failed and an earlier day's coefficients
    /// were reused.
    pub carried_forward: bool,
}

/// A case that produced no calibrated forecast, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCase {
    pub station_id: String,
    pub valid_time: DateTime<Utc>,
    pub lead_time_h: u32,
    pub reason: String,
}

/// A failed daily fit (its cases may still be served by carried-forward
/// coefficients).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub day: NaiveDate,
    pub lead_time_h: u32,
    pub station: Option<String>,
    pub reason: String,
}

/// One day's model within a rolling calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyFit {
    pub day: NaiveDate,
    pub model: FittedModel,
}

/// Everything a rolling calibration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingOutput {
    pub cases: Vec<CalibratedCase>,
    pub skipped: Vec<SkippedCase>,
    pub fit_failures: Vec<FitFailure>,
    pub models: Vec<DailyFit>,
}

/// Calibrates every day of the dataset against the preceding `window_days`
/// calendar days, refitting per day (and per station under
/// [`Scope::Local`]). Days without enough history are skipped and reported;
/// failed fits fall back to the most recent successful coefficients for the
/// same scope.
pub fn rolling_calibrate(
    dataset: &Dataset,
    family: Family,
    config: &FitConfig,
    window_days: usize,
    scope: Scope,
) -> Result<RollingOutput, EmosError> {
    if window_days == 0 {
        return Err(EmosError::BadConfig {
            reason: "window_days must be at least 1".into(),
        });
    }
    let spec = dataset.group_spec();
    let groups = spec.group_count();
    let needed = dimension(family, groups) + 2;

    // index case positions by lead time and day for window assembly
    let mut by_lead_day: BTreeMap<(u32, NaiveDate), Vec<usize>> = BTreeMap::new();
    for (i, case) in dataset.cases().iter().enumerate() {
        let key = (case.forecast.lead_time_h, case.forecast.valid_time.date_naive());
        by_lead_day.entry(key).or_default().push(i);
    }

    let mut out = RollingOutput {
        cases: Vec::new(),
        skipped: Vec::new(),
        fit_failures: Vec::new(),
        models: Vec::new(),
    };
    // most recent successful coefficients per (lead, station-or-global)
    let mut last_good: BTreeMap<(u32, Option<String>), EmosCoefficients> = BTreeMap::new();

    let stations = dataset.stations();
    let keys: Vec<(u32, NaiveDate)> = by_lead_day.keys().copied().collect();
    let leads: Vec<u32> = {
        let mut l: Vec<u32> = keys.iter().map(|(lead, _)| *lead).collect();
        l.dedup();
        l
    };

    for &lead in &leads {
        let days: Vec<NaiveDate> = keys
            .iter()
            .filter(|(l, _)| *l == lead)
            .map(|(_, d)| *d)
            .collect();
        let first_day = days[0];
        for &day in &days {
            let start = day
                .checked_sub_days(Days::new(window_days as u64))
                .expect("date arithmetic in range");
            let targets = &by_lead_day[&(lead, day)];
            // a day is forecastable once a full window of history can exist
            if start < first_day {
                let reason = format!(
                    "window not yet filled: the first {window_days}-day window completes on {}",
                    first_day
                        .checked_add_days(Days::new(window_days as u64))
                        .expect("date arithmetic in range")
                );
                for &i in targets {
                    let c = &dataset.cases()[i];
                    out.skipped.push(SkippedCase {
                        station_id: c.forecast.station_id.clone(),
                        valid_time: c.forecast.valid_time,
                        lead_time_h: lead,
                        reason: reason.clone(),
                    });
                }
                continue;
            }
            let history: Vec<usize> = by_lead_day
                .range((lead, start)..(lead, day))
                .flat_map(|(_, idxs)| idxs.iter().copied())
                .collect();

            let units: Vec<Option<String>> = match scope {
                Scope::Global => vec![None],
                Scope::Local => stations.iter().map(|s| Some(s.to_string())).collect(),
            };
            for unit in units {
                let train: Vec<(&_, f64)> = history
                    .iter()
                    .map(|&i| &dataset.cases()[i])
                    .filter(|c| match &unit {
                        None => true,
                        Some(s) => &c.forecast.station_id == s,
                    })
                    .map(|c| (&c.forecast, c.observation))
                    .collect();
                let unit_targets: Vec<&crate::dataio::ForecastCase> = targets
                    .iter()
                    .map(|&i| &dataset.cases()[i])
                    .filter(|c| match &unit {
                        None => true,
                        Some(s) => &c.forecast.station_id == s,
                    })
                    .collect();
                if unit_targets.is_empty() {
                    continue;
                }

                if train.len() < needed {
                    let reason = format!(
                        "insufficient history: {} cases in the last {window_days} days, need {needed}",
                        train.len()
                    );
                    for c in &unit_targets {
                        out.skipped.push(SkippedCase {
                            station_id: c.forecast.station_id.clone(),
                            valid_time: c.forecast.valid_time,
                            lead_time_h: lead,
                            reason: reason.clone(),
                        });
                    }
                    continue;
                }

                let window = TrainingWindow::new(spec, train, window_days, scope, unit.clone())?;
                let fallback_key = (lead, unit.clone());
                let (coeffs, carried) = match fit(&window, family, config) {
                    Ok(model) => {
                        let coeffs = model.coefficients.clone();
                        last_good.insert(fallback_key, coeffs.clone());
                        out.models.push(DailyFit { day, model });
                        (coeffs, false)
                    }
                    Err(e) => {
                        out.fit_failures.push(FitFailure {
                            day,
                            lead_time_h: lead,
                            station: unit.clone(),
                            reason: e.to_string(),
                        });
                        match last_good.get(&fallback_key) {
                            Some(c) => (c.clone(), true),
                            None => {
                                for c in &unit_targets {
                                    out.skipped.push(SkippedCase {
                                        station_id: c.forecast.station_id.clone(),
                                        valid_time: c.forecast.valid_time,
                                        lead_time_h: lead,
                                        reason: format!("fit failed, no earlier coefficients: {e}"),
                                    });
                                }
                                continue;
                            }
                        }
                    }
                };

                for case in &unit_targets {
                    let stats = ensemble_stats(&case.forecast, spec)?;
                    match build_params(&coeffs, &stats) {
                        Ok(params) => out.cases.push(CalibratedCase {
                            station_id: case.forecast.station_id.clone(),
                            valid_time: case.forecast.valid_time,
                            lead_time_h: lead,
                            members: case.forecast.members.clone(),
                            observation: case.observation,
                            params,
                            carried_forward: carried,
                        }),
                        Err(e) => out.skipped.push(SkippedCase {
                            station_id: case.forecast.station_id.clone(),
                            valid_time: case.forecast.valid_time,
                            lead_time_h: lead,
                            reason: format!("parameter construction failed: {e}"),
                        }),
                    }
                }
            }
        }
    }
    out.cases.sort_by(|a, b| {
        (a.lead_time_h, a.valid_time, &a.station_id)
            .cmp(&(b.lead_time_h, b.valid_time, &b.station_id))
    });
    Ok(out)
}
