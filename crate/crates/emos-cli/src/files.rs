//! JSON artifacts exchanged between subcommands, and small IO helpers.

use anyhow::{bail, Context, Result};
use emos_core::emos::{
    CalibratedCase, DailyFit, FitFailure, Objective, ScaleLink, Scope, SkippedCase,
};
use emos_core::Family;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FILE_SCHEMA_VERSION: u32 = 1;

/// Per-day fitted coefficient sets from `emos fit`.
#[derive(Debug, Serialize, Deserialize)]
pub struct CoefficientsFile {
    pub schema_version: u32,
    pub family: Family,
    pub scale_link: ScaleLink,
    pub objective: Objective,
    pub scope: Scope,
    pub window_days: usize,
    pub group_sizes: Vec<usize>,
    pub models: Vec<DailyFit>,
    pub fit_failures: Vec<FitFailure>,
}

/// Per-verification-case predictive parameters from `emos fit`; the file
/// `emos verify` consumes.
#[derive(Debug, Serialize, Deserialize)]
pub struct CasesFile {
    pub schema_version: u32,
    pub family: Family,
    pub scale_link: ScaleLink,
    pub objective: Objective,
    pub scope: Scope,
    pub window_days: usize,
    pub cases: Vec<CalibratedCase>,
    pub skipped: Vec<SkippedCase>,
}

pub fn family_label(family: Family) -> &'static str {
    match family {
        Family::Tn => "tn",
        Family::Ln => "ln",
        Family::Gev => "gev",
        Family::Tgev => "tgev",
    }
}

/// Sidecar group-spec path: `data.csv` -> `data.groups.json`.
pub fn groups_sidecar(data: &Path) -> PathBuf {
    data.with_extension("groups.json")
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads a schema-versioned artifact, rejecting other versions up front.
pub fn read_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T> {
    #[derive(Deserialize)]
    struct Versioned {
        #[serde(default)]
        schema_version: u32,
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let v: Versioned = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if v.schema_version != expected {
        bail!(
            "{}: schema_version {} not supported (expected {expected})",
            path.display(),
            v.schema_version
        );
    }
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
