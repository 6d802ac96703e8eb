//! `emos` — batch calibration and verification of wind-speed ensemble
//! forecasts.
//!
//! Four subcommands chain into a reproducible pipeline:
//!
//! ```text
//! emos simulate --config sim.json --out data.csv
//! emos fit      --data data.csv --family tgev --window-days 30 --out-dir fit/
//! emos verify   --data data.csv --params fit/cases.json --reference raw --out-dir scores/
//! emos report   scores/report_tgev.json ... --out-dir tables/
//! ```
//!
//! Every command writes a manifest with input digests and the root seed;
//! with fixed inputs and seed all outputs except the manifest itself are
//! byte-identical across reruns. Exit codes: 0 success, 1 runtime or
//! numerical failure, 2 usage or config error.

use clap::{Parser, Subcommand, ValueEnum};
use emos_core::emos::{Objective, ScaleLink};
use emos_core::{Family, Scope};
use std::path::PathBuf;
use std::process::ExitCode;

mod files;
mod fit;
mod manifest;
mod report;
mod simulate;
mod verify;

/// A command failure carrying its exit code: 2 for usage/config problems,
/// 1 for runtime ones.
pub struct CmdError {
    pub exit: u8,
    pub error: anyhow::Error,
}

impl CmdError {
    pub fn usage(error: anyhow::Error) -> Self {
        Self { exit: 2, error }
    }

    pub fn runtime(error: anyhow::Error) -> Self {
        Self { exit: 1, error }
    }
}

pub type CmdResult = Result<(), CmdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Tn,
    Ln,
    Gev,
    Tgev,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Tn => Family::Tn,
            FamilyArg::Ln => Family::Ln,
            FamilyArg::Gev => Family::Gev,
            FamilyArg::Tgev => Family::Tgev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ScopeArg {
    #[default]
    Global,
    Local,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Global => Scope::Global,
            ScopeArg::Local => Scope::Local,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ObjectiveArg {
    /// Minimum mean CRPS over the training window.
    #[default]
    Crps,
    /// Maximum likelihood (minimum mean log score).
    Logs,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Crps => Objective::MeanCrps,
            ObjectiveArg::Logs => Objective::LogLikelihood,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ScaleLinkArg {
    /// The family's conventional link: variance-linear for tn/ln,
    /// mean-linear for gev/tgev.
    #[default]
    Auto,
    MeanLinear,
    SdLinear,
    VarLinear,
    MdLinear,
}

impl ScaleLinkArg {
    /// Resolves `auto` and rejects combinations the model doesn't define.
    pub fn resolve(self, family: Family) -> Result<ScaleLink, anyhow::Error> {
        let squared = matches!(family, Family::Tn | Family::Ln);
        match (self, squared) {
            (ScaleLinkArg::Auto, true) | (ScaleLinkArg::VarLinear, true) => {
                Ok(ScaleLink::VarLinear)
            }
            (ScaleLinkArg::Auto, false) => Ok(ScaleLink::MeanLinear),
            (ScaleLinkArg::MeanLinear, false) => Ok(ScaleLink::MeanLinear),
            (ScaleLinkArg::SdLinear, false) => Ok(ScaleLink::SdLinear),
            (ScaleLinkArg::VarLinear, false) => Ok(ScaleLink::VarLinear),
            (ScaleLinkArg::MdLinear, false) => Ok(ScaleLink::MdLinear),
            (other, true) => anyhow::bail!(
                "family {} models the squared scale on the ensemble variance; \
                 --scale-link {:?} is not defined for it (use auto or var-linear)",
                files::family_label(family),
                other,
            ),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "emos",
    version,
    about = "EMOS calibration and verification of wind-speed ensemble forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate a seeded synthetic forecast/observation archive
    Simulate {
        /// Simulation config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output dataset CSV; the group spec and manifest land next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling-window EMOS calibration over a dataset
    Fit {
        /// Dataset CSV (see `emos simulate` for the schema)
        #[arg(long)]
        data: PathBuf,
        /// Group-spec JSON (default: the <data>.groups.json sidecar)
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Predictive family
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Length of the rolling training window in days
        #[arg(long, default_value_t = 30)]
        window_days: usize,
        /// Shared coefficients across stations, or one fit per station
        #[arg(long, value_enum, default_value_t)]
        scope: ScopeArg,
        /// Estimation objective
        #[arg(long, value_enum, default_value_t)]
        objective: ObjectiveArg,
        /// Link from ensemble statistics to the predictive scale
        #[arg(long, value_enum, default_value_t)]
        scale_link: ScaleLinkArg,
        /// Root seed recorded in the manifest
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for coefficients.json, cases.json, manifest.json
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score calibrated forecasts against a reference
    Verify {
        /// Dataset CSV the forecasts were fitted on
        #[arg(long)]
        data: PathBuf,
        /// Group-spec JSON (default: the <data>.groups.json sidecar)
        #[arg(long)]
        groups: Option<PathBuf>,
        /// cases.json from `emos fit`; repeat to verify several systems
        #[arg(long = "params", required = true)]
        params: Vec<PathBuf>,
        /// Reference system: raw | climatology | path to another cases.json
        #[arg(long, default_value = "raw")]
        reference: String,
        /// twCRPS thresholds: auto (90/95/98th obs percentiles) or a
        /// comma-separated list of wind speeds in m/s
        #[arg(long, default_value = "auto")]
        thresholds: String,
        /// Compute auto thresholds per station instead of pooled
        #[arg(long, default_value_t = false)]
        thresholds_per_station: bool,
        /// Central-interval alpha: auto (2/(K+1) from the ensemble size K)
        /// or a value in (0, 1)
        #[arg(long, default_value = "auto")]
        alpha: String,
        /// Bootstrap replicates for score confidence intervals (0 disables)
        #[arg(long, default_value_t = 2000)]
        bootstrap: usize,
        /// Root seed for bootstrap resampling and tie randomization
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for report JSONs, CSV tables and the manifest
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Combine score reports into a comparison table
    Report {
        /// Score-report JSON files from `emos verify`
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Output directory for comparison.csv, comparison.json, manifest.json
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::Simulate { config, out } => simulate::run(&config, &out),
        Commands::Fit {
            data,
            groups,
            family,
            window_days,
            scope,
            objective,
            scale_link,
            seed,
            out_dir,
        } => fit::run(&fit::FitArgs {
            data,
            groups,
            family,
            window_days,
            scope,
            objective,
            scale_link,
            seed,
            out_dir,
        }),
        Commands::Verify {
            data,
            groups,
            params,
            reference,
            thresholds,
            thresholds_per_station,
            alpha,
            bootstrap,
            seed,
            out_dir,
        } => verify::run(&verify::VerifyArgs {
            data,
            groups,
            params,
            reference,
            thresholds,
            thresholds_per_station,
            alpha,
            bootstrap,
            seed,
            out_dir,
        }),
        Commands::Report { reports, out_dir } => report::run(&reports, &out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.exit)
        }
    }
}
