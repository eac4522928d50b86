use std::path::PathBuf;

use clap::Subcommand;
use relu_zono::analysis::{chamber_stability, find_stable_epsilon};
use relu_zono::arrangement::{enumerate_chambers, DEFAULT_CHAMBER_CAP};
use relu_zono::data::{is_general_position, GeneralPositionOptions, SubsetMode};
use relu_zono::Result;
use serde_json::json;

use crate::io::{emit, read_dataset};

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Enumerate the chambers of the example hyperplane arrangement.
    Chambers {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CHAMBER_CAP)]
        cap: usize,
        /// Print only the count.
        #[arg(long)]
        count_only: bool,
    },
    /// Compare the chambers of a dataset with those of perturbed copies.
    Stability {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Perturbation radius; searched for when omitted.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check general position of the homogenized examples.
    Gp {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Check this many random subsets instead of all of them.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        cap: u128,
    },
}

pub fn run(cmd: AnalyzeCommand) -> Result<()> {
    let report = match cmd {
        AnalyzeCommand::Chambers { data, cap, count_only } => {
            let ds = read_dataset(data.as_deref())?;
            let chambers = enumerate_chambers(&ds, cap)?;
            if count_only {
                json!({ "count": chambers.len() })
            } else {
                json!({ "count": chambers.len(), "chambers": chambers.entries() })
            }
        }
        AnalyzeCommand::Stability { data, epsilon, trials, seed } => {
            let ds = read_dataset(data.as_deref())?;
            let report = match epsilon {
                Some(eps) => chamber_stability(&ds, eps, trials, seed)?,
                None => find_stable_epsilon(&ds, trials, seed)?,
            };
            json!({
                "epsilon": report.epsilon,
                "trials": report.trials,
                "identical": report.identical,
                "identical_fraction": report.identical as f64 / report.trials.max(1) as f64,
                "chambers": report.chambers,
            })
        }
        AnalyzeCommand::Gp { data, samples, seed, cap } => {
            let ds = read_dataset(data.as_deref())?;
            let mode = match samples {
                Some(samples) => SubsetMode::Sampled { samples, seed },
                None => SubsetMode::Exhaustive,
            };
            let opts = GeneralPositionOptions { mode, cap, ..Default::default() };
            serde_json::to_value(is_general_position(&ds, &opts)?)?
        }
    };
    emit(None, &serde_json::to_string_pretty(&report)?)
}
