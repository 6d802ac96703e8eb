//! `emos verify`: score calibrated forecasts against a reference system.
//!
//! The verification set is the cases listed in the params file(s); each must
//! have a matching (station, valid time, lead) row in the dataset, which
//! supplies the authoritative observation and raw members. All params files
//! in one run must cover the same case set so the resulting reports are
//! comparable row for row.

use crate::files::{self, CasesFile, FILE_SCHEMA_VERSION};
use crate::manifest::RunManifest;
use crate::{CmdError, CmdResult};
use anyhow::{anyhow, Context};
use chrono::{DateTime, Utc};
use emos_core::rng::{name_tag, stream};
use emos_core::scoring::{crps, skill_score, ScoreKind, Threshold};
use emos_core::verification::{
    auto_thresholds, case_stream, central_interval, chi_square_uniform, coverage_and_width,
    ks_uniform, linear_quantile, negative_mass_summary, randomized_pit, raw_alpha,
    stationary_bootstrap_ci, stratified_scores, sweep_to_csv, threshold_sweep,
    verification_rank, BootstrapCi, MeanScore, PitHistogram, RankHistogram, ScoreReport,
    ThresholdPoint, VerifError,
};
use emos_core::{Distribution, EmpiricalEnsemble};
use rand_core::RngCore;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct VerifyArgs {
    pub data: PathBuf,
    pub groups: Option<PathBuf>,
    pub params: Vec<PathBuf>,
    pub reference: String,
    pub thresholds: String,
    pub thresholds_per_station: bool,
    pub alpha: String,
    pub bootstrap: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Effective settings, serialized into the manifest.
#[derive(Serialize)]
struct VerifySettings {
    systems: Vec<String>,
    reference: String,
    thresholds: Vec<f64>,
    thresholds_per_station: bool,
    alpha: f64,
    nominal_level: f64,
    bootstrap_replicates: usize,
    stratum_cut_percentiles: (f64, f64),
}

type CaseKey = (u32, DateTime<Utc>, String);

fn key_of(station: &str, valid_time: DateTime<Utc>, lead: u32) -> CaseKey {
    (lead, valid_time, station.to_string())
}

fn show_key((lead, time, station): &CaseKey) -> String {
    format!("{station}/{}/{lead}h", time.to_rfc3339())
}

/// The shared per-case frame every system is scored on, in canonical
/// (lead, valid time, station) order.
struct Frame {
    keys: Vec<CaseKey>,
    observations: Vec<f64>,
    members: Vec<Vec<f64>>,
    ensemble_means: Vec<f64>,
}

impl Frame {
    fn len(&self) -> usize {
        self.keys.len()
    }
}

/// Matches a params file against the dataset index; errors list the keys
/// with no data row.
fn align(
    file: &CasesFile,
    index: &BTreeMap<CaseKey, usize>,
    label: &str,
) -> Result<BTreeMap<CaseKey, Distribution>, CmdError> {
    let mut matched = BTreeMap::new();
    let mut unmatched = Vec::new();
    for case in &file.cases {
        let key = key_of(&case.station_id, case.valid_time, case.lead_time_h);
        if index.contains_key(&key) {
            matched.insert(key, case.params.clone());
        } else {
            unmatched.push(key);
        }
    }
    if !unmatched.is_empty() {
        let shown: Vec<String> = unmatched.iter().take(10).map(show_key).collect();
        let more = unmatched.len().saturating_sub(shown.len());
        let suffix = if more > 0 {
            format!(" (+{more} more)")
        } else {
            String::new()
        };
        return Err(CmdError::usage(anyhow!(
            "case mismatch: {} cases in params [{label}] have no dataset row: {}{suffix}",
            unmatched.len(),
            shown.join(", "),
        )));
    }
    Ok(matched)
}

fn parse_alpha(raw: &str, members: usize) -> Result<f64, CmdError> {
    if raw == "auto" {
        return Ok(raw_alpha(members));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| CmdError::usage(anyhow!("--alpha must be auto or a number, got {raw:?}")))?;
    if !(v > 0.0 && v < 1.0) {
        return Err(CmdError::usage(anyhow!(
            "--alpha must lie in (0, 1), got {v}"
        )));
    }
    Ok(v)
}

fn parse_thresholds(raw: &str, observations: &[f64]) -> Result<Vec<Threshold>, CmdError> {
    if raw == "auto" {
        return auto_thresholds(observations)
            .context("computing auto thresholds")
            .map_err(CmdError::runtime);
    }
    raw.split(',')
        .map(|part| {
            let v: f64 = part.trim().parse().map_err(|_| {
                CmdError::usage(anyhow!("--thresholds entry {part:?} is not a number"))
            })?;
            Threshold::new(v)
                .map_err(|e| CmdError::usage(anyhow!("--thresholds entry {part:?}: {e}")))
        })
        .collect()
}

/// Auto thresholds computed per station, scored per case against the
/// case's own station cutoff, then pooled. The reported threshold value is
/// the case-weighted mean of the per-station cutoffs.
fn per_station_sweep(
    frame: &Frame,
    forecasts: &[Distribution],
    references: &[Distribution],
) -> Result<Vec<ThresholdPoint>, VerifError> {
    let mut by_station: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in frame.keys.iter().enumerate() {
        by_station.entry(key.2.as_str()).or_default().push(i);
    }
    let percentiles = [0.90, 0.95, 0.98];
    let mut cutoffs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (station, idx) in &by_station {
        let obs: Vec<f64> = idx.iter().map(|&i| frame.observations[i]).collect();
        let cuts = percentiles
            .iter()
            .map(|&p| linear_quantile(&obs, p))
            .collect::<Result<Vec<f64>, _>>()?;
        cutoffs.insert(station, cuts);
    }
    let n = frame.len() as f64;
    let mut out = Vec::with_capacity(percentiles.len());
    for k in 0..percentiles.len() {
        let mut mean_r = 0.0;
        let mut cand = 0.0;
        let mut reference = 0.0;
        for (station, idx) in &by_station {
            let r = cutoffs[station][k];
            for &i in idx {
                mean_r += r;
                cand += emos_core::scoring::twcrps(&forecasts[i], frame.observations[i], r)?;
                reference +=
                    emos_core::scoring::twcrps(&references[i], frame.observations[i], r)?;
            }
        }
        let mean_twcrps = cand / n;
        let reference_mean_twcrps = reference / n;
        out.push(ThresholdPoint {
            threshold: mean_r / n,
            mean_twcrps,
            reference_mean_twcrps,
            skill: skill_score(mean_twcrps, reference_mean_twcrps)?,
        });
    }
    Ok(out)
}

/// How the sweep thresholds are chosen.
enum ThresholdPlan {
    Pooled(Vec<Threshold>),
    PerStation,
}

struct ReportInputs<'a> {
    frame: &'a Frame,
    alpha: f64,
    bootstrap: usize,
    seed: u64,
    thresholds: &'a ThresholdPlan,
}

fn bootstrap_ci(
    series: &[f64],
    replicates: usize,
    label: &str,
    kind: &str,
    root: u64,
) -> Option<BootstrapCi> {
    if replicates == 0 {
        return None;
    }
    let seed = stream(
        root,
        &[name_tag("bootstrap"), name_tag(label), name_tag(kind)],
    )
    .next_u64();
    match stationary_bootstrap_ci(series, replicates, 0.95, None, seed) {
        Ok(ci) => Some(ci),
        Err(VerifError::SeriesTooShort { len, min }) => {
            eprintln!(
                "warning: [{label}] {kind}: {len} cases < {min}, skipping bootstrap CI"
            );
            None
        }
        Err(e) => {
            eprintln!("warning: [{label}] {kind} bootstrap failed: {e}");
            None
        }
    }
}

/// Runtime-failure constructor tagging the system and computation stage.
fn rt(label: &str, what: &str, e: impl std::fmt::Display) -> CmdError {
    CmdError::runtime(anyhow!("[{label}] {what}: {e}"))
}

/// Scores one system and assembles its report. `reference_label` is `None`
/// when the system is itself the baseline.
fn build_report(
    label: &str,
    forecasts: &[Distribution],
    references: &[Distribution],
    reference_label: Option<&str>,
    inputs: &ReportInputs<'_>,
) -> Result<ScoreReport, CmdError> {
    let frame = inputs.frame;
    let n = frame.len();

    let mut crps_series = Vec::with_capacity(n);
    let mut ref_crps_series = Vec::with_capacity(n);
    let mut abs_series = Vec::with_capacity(n);
    let mut sq_series = Vec::with_capacity(n);
    let mut intervals = Vec::with_capacity(n);
    let mut pit_values = Vec::with_capacity(n);
    let mut ranks = Vec::with_capacity(n);
    let is_raw = label == "raw";
    let label_seed = stream(inputs.seed, &[name_tag("verify"), name_tag(label)]).next_u64();

    for i in 0..n {
        let obs = frame.observations[i];
        let f = &forecasts[i];
        crps_series.push(crps(f, obs).map_err(|e| rt(label, "crps", e))?);
        ref_crps_series
            .push(crps(&references[i], obs).map_err(|e| rt(label, "reference crps", e))?);
        let median = f.median().map_err(|e| rt(label, "median", e))?;
        abs_series.push((median - obs).abs());
        let mean = f.mean().map_err(|e| rt(label, "mean", e))?;
        sq_series.push((mean - obs) * (mean - obs));
        intervals
            .push(central_interval(f, inputs.alpha).map_err(|e| rt(label, "interval", e))?);

        // tie randomization: one stream per case, ranks drawn before PIT
        let (lead, time, station) = &frame.keys[i];
        let mut rng = case_stream(label_seed, station, *time, *lead);
        if is_raw {
            ranks.push(
                verification_rank(&frame.members[i], obs, &mut rng)
                    .map_err(|e| rt(label, "rank", e))?,
            );
        }
        pit_values.push(randomized_pit(f, obs, &mut rng).map_err(|e| rt(label, "pit", e))?);
    }

    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / n as f64;
    let mean_crps = mean_of(&crps_series);
    let crps_skill = reference_label
        .map(|_| skill_score(mean_crps, mean_of(&ref_crps_series)))
        .transpose()
        .map_err(|e| rt(label, "crps skill", e))?;

    let mut report = ScoreReport::new(label, n);
    report.reference = reference_label.map(str::to_string);
    report.scores = vec![
        MeanScore {
            kind: ScoreKind::Crps,
            mean: mean_crps,
            ci: bootstrap_ci(&crps_series, inputs.bootstrap, label, "crps", inputs.seed),
            skill: crps_skill,
        },
        MeanScore {
            kind: ScoreKind::AbsErr,
            mean: mean_of(&abs_series),
            ci: bootstrap_ci(&abs_series, inputs.bootstrap, label, "abs_err", inputs.seed),
            skill: None,
        },
        MeanScore {
            kind: ScoreKind::SqErr,
            mean: mean_of(&sq_series),
            ci: bootstrap_ci(&sq_series, inputs.bootstrap, label, "sq_err", inputs.seed),
            skill: None,
        },
    ];
    report.intervals = Some(
        coverage_and_width(&intervals, &frame.observations, 1.0 - inputs.alpha)
            .map_err(|e| rt(label, "coverage", e))?,
    );
    report.negative_mass =
        Some(negative_mass_summary(forecasts).map_err(|e| rt(label, "negative mass", e))?);
    report.pit = Some(
        PitHistogram::from_values(&pit_values, PitHistogram::DEFAULT_BINS)
            .map_err(|e| rt(label, "pit histogram", e))?,
    );
    report.pit_ks = Some(ks_uniform(&pit_values).map_err(|e| rt(label, "pit ks", e))?);
    if is_raw {
        let k = frame.members[0].len();
        let hist =
            RankHistogram::from_ranks(&ranks, k).map_err(|e| rt(label, "rank histogram", e))?;
        report.rank_chi_square =
            Some(chi_square_uniform(&hist.counts).map_err(|e| rt(label, "rank chi-square", e))?);
        report.ranks = Some(hist);
    }
    report.strata = Some(
        stratified_scores(
            &frame.ensemble_means,
            &crps_series,
            &ref_crps_series,
            (10.0, 90.0),
        )
        .map_err(|e| rt(label, "strata", e))?,
    );
    report.threshold_sweep = Some(match inputs.thresholds {
        ThresholdPlan::Pooled(ts) => {
            threshold_sweep(forecasts, references, &frame.observations, ts)
                .map_err(|e| rt(label, "threshold sweep", e))?
        }
        ThresholdPlan::PerStation => per_station_sweep(frame, forecasts, references)
            .map_err(|e| rt(label, "threshold sweep", e))?,
    });
    Ok(report)
}

fn write_system_outputs(report: &ScoreReport, out_dir: &Path) -> Result<(), CmdError> {
    let label = &report.label;
    std::fs::write(
        out_dir.join(format!("report_{label}.json")),
        report.to_json(),
    )
    .with_context(|| format!("writing report_{label}.json"))
    .map_err(CmdError::runtime)?;
    if let Some(pit) = &report.pit {
        std::fs::write(out_dir.join(format!("pit_{label}.csv")), pit.to_csv())
            .with_context(|| format!("writing pit_{label}.csv"))
            .map_err(CmdError::runtime)?;
    }
    if let Some(ranks) = &report.ranks {
        std::fs::write(out_dir.join(format!("ranks_{label}.csv")), ranks.to_csv())
            .with_context(|| format!("writing ranks_{label}.csv"))
            .map_err(CmdError::runtime)?;
    }
    if let Some(sweep) = &report.threshold_sweep {
        std::fs::write(
            out_dir.join(format!("thresholds_{label}.csv")),
            sweep_to_csv(sweep),
        )
        .with_context(|| format!("writing thresholds_{label}.csv"))
        .map_err(CmdError::runtime)?;
    }
    Ok(())
}

pub fn run(args: &VerifyArgs) -> CmdResult {
    let started = Instant::now();

    let (dataset, groups_path, _) = crate::fit::load_archive(&args.data, &args.groups)?;
    let index: BTreeMap<CaseKey, usize> = dataset
        .cases()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                key_of(&c.forecast.station_id, c.forecast.valid_time, c.forecast.lead_time_h),
                i,
            )
        })
        .collect();

    // load and align every params file
    let mut systems: Vec<(String, BTreeMap<CaseKey, Distribution>)> = Vec::new();
    for path in &args.params {
        let file: CasesFile =
            files::read_versioned(path, FILE_SCHEMA_VERSION).map_err(CmdError::usage)?;
        let label = files::family_label(file.family).to_string();
        if systems.iter().any(|(l, _)| *l == label) {
            return Err(CmdError::usage(anyhow!(
                "two params files carry the family label {label:?}; verify them in separate runs"
            )));
        }
        let matched = align(&file, &index, &label)?;
        if matched.is_empty() {
            return Err(CmdError::usage(anyhow!(
                "params [{label}] contain no verification cases"
            )));
        }
        systems.push((label, matched));
    }

    // all systems must cover the same cases
    let keys: Vec<CaseKey> = systems[0].1.keys().cloned().collect();
    for (label, matched) in &systems[1..] {
        if matched.len() != keys.len() || !keys.iter().all(|k| matched.contains_key(k)) {
            return Err(CmdError::usage(anyhow!(
                "params [{label}] cover {} cases but [{}] covers {}; \
                 all systems must share one verification set",
                matched.len(),
                systems[0].0,
                keys.len(),
            )));
        }
    }

    // the shared frame, in canonical order (keys from a BTreeMap are sorted)
    let frame = {
        let mut observations = Vec::with_capacity(keys.len());
        let mut members = Vec::with_capacity(keys.len());
        let mut ensemble_means = Vec::with_capacity(keys.len());
        for key in &keys {
            let case = &dataset.cases()[index[key]];
            observations.push(case.observation);
            let m = case.forecast.members.clone();
            ensemble_means.push(m.iter().sum::<f64>() / m.len() as f64);
            members.push(m);
        }
        Frame {
            keys: keys.clone(),
            observations,
            members,
            ensemble_means,
        }
    };

    // reference system: raw members, pooled climatology, or another params file
    let mut reference_input: Option<PathBuf> = None;
    let (ref_label, ref_forecasts): (String, Vec<Distribution>) = match args.reference.as_str() {
        "raw" => (
            "raw".into(),
            frame
                .members
                .iter()
                .map(|m| {
                    EmpiricalEnsemble::new(m.clone())
                        .map(Distribution::Empirical)
                        .map_err(|e| CmdError::runtime(anyhow!("raw ensemble: {e}")))
                })
                .collect::<Result<_, _>>()?,
        ),
        "climatology" => {
            let pool: Vec<f64> = dataset.cases().iter().map(|c| c.observation).collect();
            let ens = EmpiricalEnsemble::new(pool)
                .map_err(|e| CmdError::runtime(anyhow!("climatology pool: {e}")))?;
            (
                "climatology".into(),
                vec![Distribution::Empirical(ens); frame.len()],
            )
        }
        path => {
            let path = Path::new(path);
            let file: CasesFile = files::read_versioned(path, FILE_SCHEMA_VERSION)
                .context("--reference is not raw, climatology, or a readable cases.json")
                .map_err(CmdError::usage)?;
            let label = files::family_label(file.family).to_string();
            let matched = align(&file, &index, &label)?;
            let missing: Vec<&CaseKey> =
                keys.iter().filter(|k| !matched.contains_key(*k)).collect();
            if !missing.is_empty() {
                let shown: Vec<String> = missing.iter().take(10).map(|k| show_key(k)).collect();
                return Err(CmdError::usage(anyhow!(
                    "reference [{label}] does not cover {} verification cases: {}",
                    missing.len(),
                    shown.join(", "),
                )));
            }
            reference_input = Some(path.to_path_buf());
            (label, keys.iter().map(|k| matched[k].clone()).collect())
        }
    };

    let alpha = parse_alpha(&args.alpha, dataset.group_spec().member_count())?;
    let plan = if args.thresholds == "auto" && args.thresholds_per_station {
        ThresholdPlan::PerStation
    } else if args.thresholds_per_station {
        return Err(CmdError::usage(anyhow!(
            "--thresholds-per-station only applies to --thresholds auto"
        )));
    } else {
        ThresholdPlan::Pooled(parse_thresholds(&args.thresholds, &frame.observations)?)
    };

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(CmdError::runtime)?;

    let inputs = ReportInputs {
        frame: &frame,
        alpha,
        bootstrap: args.bootstrap,
        seed: args.seed,
        thresholds: &plan,
    };

    let mut summaries = Vec::new();
    for (label, matched) in &systems {
        let forecasts: Vec<Distribution> = keys.iter().map(|k| matched[k].clone()).collect();
        let report = build_report(label, &forecasts, &ref_forecasts, Some(&ref_label), &inputs)?;
        write_system_outputs(&report, &args.out_dir)?;
        summaries.push(summary_line(&report));
    }
    // the reference's own report, unless it already is one of the systems
    if !systems.iter().any(|(l, _)| *l == ref_label) {
        let report = build_report(&ref_label, &ref_forecasts, &ref_forecasts, None, &inputs)?;
        write_system_outputs(&report, &args.out_dir)?;
        summaries.push(summary_line(&report));
    }

    let settings = VerifySettings {
        systems: systems.iter().map(|(l, _)| l.clone()).collect(),
        reference: ref_label.clone(),
        thresholds: match &plan {
            ThresholdPlan::Pooled(ts) => ts.iter().map(|t| t.value()).collect(),
            ThresholdPlan::PerStation => Vec::new(),
        },
        thresholds_per_station: matches!(plan, ThresholdPlan::PerStation),
        alpha,
        nominal_level: 1.0 - alpha,
        bootstrap_replicates: args.bootstrap,
        stratum_cut_percentiles: (10.0, 90.0),
    };
    let mut manifest = RunManifest::new(
        "verify",
        serde_json::to_value(&settings).expect("settings serialize"),
    );
    manifest.seed = Some(args.seed);
    manifest.add_input(&args.data).map_err(CmdError::runtime)?;
    manifest.add_input(&groups_path).map_err(CmdError::runtime)?;
    for path in &args.params {
        manifest.add_input(path).map_err(CmdError::runtime)?;
    }
    if let Some(path) = &reference_input {
        manifest.add_input(path).map_err(CmdError::runtime)?;
    }
    manifest.wall_ms = started.elapsed().as_millis();
    manifest
        .write(&args.out_dir.join("manifest.json"))
        .map_err(CmdError::runtime)?;

    for line in summaries {
        println!("{line}");
    }
    Ok(())
}

fn summary_line(report: &ScoreReport) -> String {
    let crps = report
        .scores
        .iter()
        .find(|s| s.kind == ScoreKind::Crps)
        .expect("crps row always present");
    match (crps.skill, &report.reference) {
        (Some(skill), Some(reference)) => format!(
            "verify[{}]: {} cases, mean CRPS {:.4} (skill vs {reference} {:+.3})",
            report.label, report.cases, crps.mean, skill
        ),
        _ => format!(
            "verify[{}]: {} cases, mean CRPS {:.4} (baseline)",
            report.label, report.cases, crps.mean
        ),
    }
}
