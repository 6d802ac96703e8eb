//! Dataset ingestion, validation, and synthetic data generation.
//!
//! A dataset pairs ensemble wind-speed forecasts with verifying observations,
//! indexed by (station, valid time, lead time). Member order is positional
//! and partitioned into exchangeable groups by a [`GroupSpec`]; the CSV
//! schema and its sidecar group file are documented in [`csv`].

mod csv;
mod synthetic;

pub use csv::{
    load_dataset, load_group_spec, save_dataset, save_group_spec, LoadOutcome, MissingPolicy,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing values on lines {lines:?}")]
    Missing { lines: Vec<usize> },
    #[error("negative wind value at {context}")]
    Negative { context: String },
    #[error("duplicate case {context}")]
    Duplicate { context: String },
    #[error("{context}: expected {want} members, found {got}")]
    MemberCount {
        context: String,
        got: usize,
        want: usize,
    },
    #[error("dataset contains no cases")]
    Empty,
    #[error("bad configuration: {reason}")]
    BadConfig { reason: String },
}

/// Partition of the ensemble into exchangeable groups: members are
/// positional, the first `group_sizes[0]` belong to group 1 and so on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGroupSpec", into = "RawGroupSpec")]
pub struct GroupSpec {
    group_sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGroupSpec {
    group_sizes: Vec<usize>,
}

impl GroupSpec {
    pub fn new(group_sizes: Vec<usize>) -> Result<Self, DataError> {
        if group_sizes.is_empty() {
            return Err(DataError::BadConfig {
                reason: "group spec needs at least one group".into(),
            });
        }
        if group_sizes.iter().any(|&m| m == 0) {
            return Err(DataError::BadConfig {
                reason: "every exchangeable group needs at least one member".into(),
            });
        }
        Ok(Self { group_sizes })
    }

    /// One group holding all `m` members (fully exchangeable ensemble).
    pub fn single(m: usize) -> Result<Self, DataError> {
        Self::new(vec![m])
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn group_count(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn member_count(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// Half-open member index ranges, one per group, in member order.
    pub fn group_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut start = 0;
        self.group_sizes.iter().map(move |&m| {
            let r = start..start + m;
            start += m;
            r
        })
    }
}

impl TryFrom<RawGroupSpec> for GroupSpec {
    type Error = DataError;
    fn try_from(raw: RawGroupSpec) -> Result<Self, Self::Error> {
        Self::new(raw.group_sizes)
    }
}

impl From<GroupSpec> for RawGroupSpec {
    fn from(g: GroupSpec) -> Self {
        RawGroupSpec {
            group_sizes: g.group_sizes,
        }
    }
}

/// One forecast case: ensemble members for a station, valid time and lead
/// time. Member order is positional per the dataset's [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub station_id: String,
    pub valid_time: DateTime<Utc>,
    pub lead_time_h: u32,
    pub members: Vec<f64>,
}

impl EnsembleForecast {
    fn key(&self) -> (DateTime<Utc>, u32, &str) {
        (self.valid_time, self.lead_time_h, &self.station_id)
    }

    fn context(&self) -> String {
        format!(
            "station {} at {} (+{}h)",
            self.station_id,
            self.valid_time.to_rfc3339(),
            self.lead_time_h
        )
    }
}

/// A forecast paired with its verifying observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCase {
    pub forecast: EnsembleForecast,
    pub observation: f64,
}

/// A validated forecast/observation archive in canonical order
/// (valid time, then lead time, then station).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    group_spec: GroupSpec,
    cases: Vec<ForecastCase>,
}

impl Dataset {
    /// Validates and canonically orders a set of cases: member counts must
    /// match the group spec, all values must be finite and nonnegative, and
    /// (station, valid time, lead time) must be unique.
    pub fn from_cases(group_spec: GroupSpec, cases: Vec<ForecastCase>) -> Result<Self, DataError> {
        if cases.is_empty() {
            return Err(DataError::Empty);
        }
        let want = group_spec.member_count();
        for case in &cases {
            let f = &case.forecast;
            if f.members.len() != want {
                return Err(DataError::MemberCount {
                    context: f.context(),
                    got: f.members.len(),
                    want,
                });
            }
            let bad = |v: f64| !v.is_finite() || v < 0.0;
            if bad(case.observation) || f.members.iter().copied().any(bad) {
                return Err(DataError::Negative {
                    context: f.context(),
                });
            }
        }
        let mut cases = cases;
        cases.sort_by(|a, b| a.forecast.key().cmp(&b.forecast.key()));
        if let Some(w) = cases.windows(2).find(|w| w[0].forecast.key() == w[1].forecast.key()) {
            return Err(DataError::Duplicate {
                context: w[0].forecast.context(),
            });
        }
        Ok(Self { group_spec, cases })
    }

    pub fn group_spec(&self) -> &GroupSpec {
        &self.group_spec
    }

    pub fn cases(&self) -> &[ForecastCase] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Distinct station ids, sorted.
    pub fn stations(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.cases.iter().map(|c| c.forecast.station_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Distinct lead times in hours, sorted.
    pub fn lead_times(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.cases.iter().map(|c| c.forecast.lead_time_h).collect();
        set.into_iter().collect()
    }

    /// Distinct valid dates (UTC calendar days), sorted.
    pub fn valid_days(&self) -> Vec<chrono::NaiveDate> {
        let set: BTreeSet<chrono::NaiveDate> =
            self.cases.iter().map(|c| c.forecast.valid_time.date_naive()).collect();
        set.into_iter().collect()
    }

    /// Merges archives sharing a group spec (e.g. per-station generations);
    /// re-validates uniqueness across the union.
    pub fn merge(self, other: Dataset) -> Result<Self, DataError> {
        if self.group_spec != other.group_spec {
            return Err(DataError::BadConfig {
                reason: "cannot merge datasets with different group specs".into(),
            });
        }
        let mut cases = self.cases;
        cases.extend(other.cases);
        Self::from_cases(self.group_spec, cases)
    }
}
