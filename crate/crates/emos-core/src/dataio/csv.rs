//! CSV dataset exchange.
//!
//! Schema (no quoting or escaping; fields never contain commas):
//!
//! ```text
//! station_id,valid_time,lead_time_h,obs,m_1,...,m_M
//! S001,2024-01-01T12:00:00Z,24,3.214159,2.881000,...,4.102938
//! ```
//!
//! `valid_time` is RFC 3339 in UTC; wind values are written with six decimal
//! places, which round-trips bit-exactly through load/save. Group membership
//! is positional, described by a sidecar JSON file `{"group_sizes":[...]}`.
//! A missing observation or member is an empty field or the token `NA`; how
//! such rows are treated is the caller's [`MissingPolicy`]. Structurally
//! broken rows (wrong column count, unparseable fields) are always errors.
//! Line numbers in errors are 1-based with the header on line 1.

use super::{DataError, Dataset, EnsembleForecast, ForecastCase, GroupSpec};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Treatment of rows with missing observation or member values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop the row and report its line number (the default).
    #[default]
    Drop,
    /// Fail, listing every line with missing values.
    Strict,
}

/// A loaded dataset plus the line numbers of any dropped rows.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub dropped_lines: Vec<usize>,
}

fn header_for(m: usize) -> String {
    let mut h = String::from("station_id,valid_time,lead_time_h,obs");
    for i in 1..=m {
        let _ = write!(h, ",m_{i}");
    }
    h
}

fn parse_err(line: usize, reason: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        reason: reason.into(),
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "NA"
}

fn parse_wind(field: &str, line: usize, what: &str) -> Result<f64, DataError> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} value {field:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {what} value {field:?}")));
    }
    if v < 0.0 {
        return Err(DataError::Negative {
            context: format!("line {line}"),
        });
    }
    Ok(v)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    group_spec: &GroupSpec,
    missing: MissingPolicy,
) -> Result<LoadOutcome, DataError> {
    let text = std::fs::read_to_string(path)?;
    let m = group_spec.member_count();
    let want_header = header_for(m);
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if header.trim_end_matches('\r') != want_header {
        return Err(parse_err(
            1,
            format!("header mismatch: expected {want_header:?}"),
        ));
    }

    let mut cases = Vec::new();
    let mut missing_lines = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1; // enumerate is 0-based, numbering is 1-based
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 + m {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", 4 + m, fields.len()),
            ));
        }
        let station_id = fields[0];
        if station_id.is_empty() {
            return Err(parse_err(line, "empty station_id"));
        }
        let valid_time = DateTime::parse_from_rfc3339(fields[1])
            .map_err(|e| parse_err(line, format!("bad valid_time {:?}: {e}", fields[1])))?
            .with_timezone(&Utc);
        let lead_time_h: u32 = fields[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad lead_time_h {:?}", fields[2])))?;

        if fields[3..].iter().any(|f| is_missing(f)) {
            missing_lines.push(line);
            continue;
        }
        let observation = parse_wind(fields[3], line, "obs")?;
        let members = fields[4..]
            .iter()
            .enumerate()
            .map(|(i, f)| parse_wind(f, line, &format!("m_{}", i + 1)))
            .collect::<Result<Vec<f64>, _>>()?;

        cases.push(ForecastCase {
            forecast: EnsembleForecast {
                station_id: station_id.to_string(),
                valid_time,
                lead_time_h,
                members,
            },
            observation,
        });
    }

    if missing == MissingPolicy::Strict && !missing_lines.is_empty() {
        return Err(DataError::Missing {
            lines: missing_lines,
        });
    }
    let dataset = Dataset::from_cases(group_spec.clone(), cases)?;
    Ok(LoadOutcome {
        dataset,
        dropped_lines: missing_lines,
    })
}

/// Writes the dataset in canonical order with six-decimal wind values.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let m = dataset.group_spec().member_count();
    let mut out = header_for(m);
    out.push('\n');
    for case in dataset.cases() {
        let f = &case.forecast;
        let _ = write!(
            out,
            "{},{},{},{:.6}",
            f.station_id,
            f.valid_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            f.lead_time_h,
            case.observation
        );
        for v in &f.members {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_group_spec(path: impl AsRef<Path>) -> Result<GroupSpec, DataError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DataError::BadConfig {
        reason: format!("group spec: {e}"),
    })
}

pub fn save_group_spec(spec: &GroupSpec, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut text = serde_json::to_string(spec).expect("group spec serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
