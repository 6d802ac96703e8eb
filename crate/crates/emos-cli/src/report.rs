//! `emos report`: flatten score reports into one comparison table.

use crate::files::{self, FILE_SCHEMA_VERSION};
use crate::manifest::RunManifest;
use crate::{CmdError, CmdResult};
use anyhow::{anyhow, Context};
use emos_core::scoring::ScoreKind;
use emos_core::verification::ScoreReport;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// One model's row: point scores, interval sharpness and calibration
/// diagnostics side by side.
#[derive(Debug, Serialize)]
struct ComparisonRow {
    label: String,
    reference: Option<String>,
    cases: usize,
    mean_crps: f64,
    crps_ci_lower: Option<f64>,
    crps_ci_upper: Option<f64>,
    crpss: Option<f64>,
    mae: f64,
    rmse: f64,
    nominal_level_percent: Option<f64>,
    coverage_percent: Option<f64>,
    average_width: Option<f64>,
    pit_ks_p: Option<f64>,
    negative_mass_mean: Option<f64>,
}

#[derive(Serialize)]
struct ComparisonTable {
    schema_version: u32,
    rows: Vec<ComparisonRow>,
}

fn score_of(report: &ScoreReport, kind: ScoreKind, path: &Path) -> Result<f64, CmdError> {
    report
        .scores
        .iter()
        .find(|s| s.kind == kind)
        .map(|s| s.mean)
        .ok_or_else(|| {
            CmdError::usage(anyhow!(
                "{}: report lacks a {kind:?} score entry",
                path.display()
            ))
        })
}

fn row_from(report: &ScoreReport, path: &Path) -> Result<ComparisonRow, CmdError> {
    let crps_row = report
        .scores
        .iter()
        .find(|s| s.kind == ScoreKind::Crps)
        .ok_or_else(|| {
            CmdError::usage(anyhow!("{}: report lacks a Crps score entry", path.display()))
        })?;
    let mae = score_of(report, ScoreKind::AbsErr, path)?;
    let mse = score_of(report, ScoreKind::SqErr, path)?;
    Ok(ComparisonRow {
        label: report.label.clone(),
        reference: report.reference.clone(),
        cases: report.cases,
        mean_crps: crps_row.mean,
        crps_ci_lower: crps_row.ci.as_ref().map(|ci| ci.lower),
        crps_ci_upper: crps_row.ci.as_ref().map(|ci| ci.upper),
        crpss: crps_row.skill,
        mae,
        rmse: mse.sqrt(),
        nominal_level_percent: report.intervals.as_ref().map(|i| 100.0 * i.nominal_level),
        coverage_percent: report.intervals.as_ref().map(|i| i.coverage_percent),
        average_width: report.intervals.as_ref().map(|i| i.average_width),
        pit_ks_p: report.pit_ks.as_ref().map(|t| t.p_value),
        negative_mass_mean: report.negative_mass.as_ref().map(|s| s.mean),
    })
}

fn opt(v: &Option<impl std::fmt::Display>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn table_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "label,reference,cases,mean_crps,crps_ci_lower,crps_ci_upper,crpss,mae,rmse,\
         nominal_level_percent,coverage_percent,average_width,pit_ks_p,negative_mass_mean\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            opt(&r.reference),
            r.cases,
            r.mean_crps,
            opt(&r.crps_ci_lower),
            opt(&r.crps_ci_upper),
            opt(&r.crpss),
            r.mae,
            r.rmse,
            opt(&r.nominal_level_percent),
            opt(&r.coverage_percent),
            opt(&r.average_width),
            opt(&r.pit_ks_p),
            opt(&r.negative_mass_mean),
        );
    }
    out
}

pub fn run(reports: &[PathBuf], out_dir: &Path) -> CmdResult {
    let started = Instant::now();

    let mut rows = Vec::with_capacity(reports.len());
    for path in reports {
        let report: ScoreReport = files::read_versioned(path, ScoreReport::SCHEMA_VERSION)
            .map_err(CmdError::usage)?;
        rows.push(row_from(&report, path)?);
    }
    let table = ComparisonTable {
        schema_version: FILE_SCHEMA_VERSION,
        rows,
    };

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(CmdError::runtime)?;
    files::write_json(&table, &out_dir.join("comparison.json")).map_err(CmdError::runtime)?;
    std::fs::write(out_dir.join("comparison.csv"), table_csv(&table.rows))
        .context("writing comparison.csv")
        .map_err(CmdError::runtime)?;

    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({
            "reports": reports.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    );
    for path in reports {
        manifest.add_input(path).map_err(CmdError::runtime)?;
    }
    manifest.wall_ms = started.elapsed().as_millis();
    manifest
        .write(&out_dir.join("manifest.json"))
        .map_err(CmdError::runtime)?;

    println!(
        "report: {} rows -> {}",
        table.rows.len(),
        out_dir.join("comparison.csv").display()
    );
    Ok(())
}
