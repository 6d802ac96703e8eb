//! `emos fit`: rolling-window calibration over an archive.

use crate::files::{self, CasesFile, CoefficientsFile, FILE_SCHEMA_VERSION};
use crate::manifest::RunManifest;
use crate::{CmdError, CmdResult, FamilyArg, ObjectiveArg, ScaleLinkArg, ScopeArg};
use anyhow::{anyhow, Context};
use emos_core::dataio::{load_dataset, load_group_spec, MissingPolicy};
use emos_core::emos::{rolling_calibrate, EmosError, Objective, ScaleLink};
use emos_core::{Family, FitConfig, Scope};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct FitArgs {
    pub data: PathBuf,
    pub groups: Option<PathBuf>,
    pub family: FamilyArg,
    pub window_days: usize,
    pub scope: ScopeArg,
    pub objective: ObjectiveArg,
    pub scale_link: ScaleLinkArg,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Effective settings, serialized into the manifest.
#[derive(Serialize)]
struct FitSettings {
    family: Family,
    scale_link: ScaleLink,
    objective: Objective,
    scope: Scope,
    window_days: usize,
    max_iterations: usize,
}

/// Loads the dataset plus its group spec, shared with `emos verify`.
pub fn load_archive(
    data: &Path,
    groups: &Option<PathBuf>,
) -> Result<(emos_core::dataio::Dataset, PathBuf, Vec<usize>), CmdError> {
    let groups_path = groups.clone().unwrap_or_else(|| files::groups_sidecar(data));
    let spec = load_group_spec(&groups_path)
        .map_err(|e| {
            CmdError::usage(anyhow!(
                "group spec {}: {e} (write one with `emos simulate` or pass --groups)",
                groups_path.display()
            ))
        })?;
    let outcome = load_dataset(data, &spec, MissingPolicy::Drop)
        .with_context(|| format!("dataset {}", data.display()))
        .map_err(CmdError::usage)?;
    if !outcome.dropped_lines.is_empty() {
        eprintln!(
            "warning: dropped {} rows with missing values (first at line {})",
            outcome.dropped_lines.len(),
            outcome.dropped_lines[0]
        );
    }
    let sizes = spec.group_sizes().to_vec();
    Ok((outcome.dataset, groups_path, sizes))
}

pub fn run(args: &FitArgs) -> CmdResult {
    let started = Instant::now();

    let family = Family::from(args.family);
    let scale_link = args.scale_link.resolve(family).map_err(CmdError::usage)?;
    let (dataset, groups_path, group_sizes) = load_archive(&args.data, &args.groups)?;

    let config = FitConfig {
        objective: args.objective.into(),
        scale_link,
        ..FitConfig::default()
    };
    let scope = Scope::from(args.scope);
    let rolling = rolling_calibrate(&dataset, family, &config, args.window_days, scope)
        .map_err(|e| match e {
            EmosError::BadConfig { .. } | EmosError::BadWindow { .. } => {
                CmdError::usage(e.into())
            }
            other => CmdError::runtime(other.into()),
        })?;

    if rolling.cases.is_empty() {
        let why = rolling
            .skipped
            .first()
            .map(|s| format!(" (first skip: {})", s.reason))
            .unwrap_or_default();
        return Err(CmdError::runtime(anyhow!(
            "no verification cases could be calibrated{why}"
        )));
    }
    if !rolling.skipped.is_empty() {
        eprintln!(
            "warning: {} cases skipped (first: {})",
            rolling.skipped.len(),
            rolling.skipped[0].reason
        );
    }

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(CmdError::runtime)?;

    let carried = rolling.cases.iter().filter(|c| c.carried_forward).count();
    let coefficients = CoefficientsFile {
        schema_version: FILE_SCHEMA_VERSION,
        family,
        scale_link,
        objective: config.objective,
        scope,
        window_days: args.window_days,
        group_sizes,
        models: rolling.models,
        fit_failures: rolling.fit_failures,
    };
    let cases = CasesFile {
        schema_version: FILE_SCHEMA_VERSION,
        family,
        scale_link,
        objective: config.objective,
        scope,
        window_days: args.window_days,
        cases: rolling.cases,
        skipped: rolling.skipped,
    };
    files::write_json(&coefficients, &args.out_dir.join("coefficients.json"))
        .map_err(CmdError::runtime)?;
    files::write_json(&cases, &args.out_dir.join("cases.json")).map_err(CmdError::runtime)?;

    let settings = FitSettings {
        family,
        scale_link,
        objective: config.objective,
        scope,
        window_days: args.window_days,
        max_iterations: config.max_iterations,
    };
    let mut manifest = RunManifest::new(
        "fit",
        serde_json::to_value(&settings).expect("settings serialize"),
    );
    manifest.seed = Some(args.seed);
    manifest.add_input(&args.data).map_err(CmdError::runtime)?;
    manifest.add_input(&groups_path).map_err(CmdError::runtime)?;
    manifest.wall_ms = started.elapsed().as_millis();
    manifest
        .write(&args.out_dir.join("manifest.json"))
        .map_err(CmdError::runtime)?;

    println!(
        "fit[{}]: {} cases calibrated over {} windows, {} skipped, {} carried forward -> {}",
        files::family_label(family),
        cases.cases.len(),
        coefficients.models.len(),
        cases.skipped.len(),
        carried,
        args.out_dir.display()
    );
    Ok(())
}
