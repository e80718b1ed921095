//! Experiment drivers behind the `spinbias` CLI.
//!
//! Each driver takes a serializable config, runs to completion and returns a
//! [`RunArchive`]: one JSON document holding the config, every ensemble that
//! was run and a summary, plus CSV tables for plotting.

mod archive;
mod optimize;
mod quench;
mod report;
mod scan;
mod shortest;
mod verify;

use serde::{Deserialize, Serialize};

pub use archive::{
    RunArchive, Table, VerificationReport, ARCHIVE_FILE, FORMAT_VERSION, VERIFY_TOL,
};
pub use optimize::{optimize, OptimizeConfig};
pub use quench::{compare_quench, effective_pair, QuenchConfig};
pub use report::{analyse, eigenreport, EigenReport, EigenSource, EigenreportConfig, RunSelector};
pub use scan::{scan_times, ScanConfig, TRAP_INFIDELITY};
pub use shortest::{shortest_times, ShortestConfig};
pub use verify::{verify_fullspace, FullspaceConfig, FULLSPACE_TOL};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    ScanTimes(ScanConfig),
    Optimize(OptimizeConfig),
    CompareQuench(QuenchConfig),
    ShortestTimes(ShortestConfig),
    VerifyFullspace(FullspaceConfig),
    Eigenreport(EigenreportConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::ScanTimes(_) => "scan-times",
            ExperimentConfig::Optimize(_) => "optimize",
            ExperimentConfig::CompareQuench(_) => "compare-quench",
            ExperimentConfig::ShortestTimes(_) => "shortest-times",
            ExperimentConfig::VerifyFullspace(_) => "verify-fullspace",
            ExperimentConfig::Eigenreport(_) => "eigenreport",
        }
    }
}

/// Runs any experiment from its config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArchive> {
    match config {
        ExperimentConfig::ScanTimes(c) => scan_times(c),
        ExperimentConfig::Optimize(c) => optimize(c),
        ExperimentConfig::CompareQuench(c) => compare_quench(c),
        ExperimentConfig::ShortestTimes(c) => shortest_times(c),
        ExperimentConfig::VerifyFullspace(c) => verify_fullspace(c),
        ExperimentConfig::Eigenreport(c) => eigenreport(c),
    }
}

/// Seed for the `index`-th sub-experiment (grid point, ring size, ...),
/// mixed with SplitMix64 so neighbouring seeds do not share streams.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shortest round-trip decimal form, used for every float written to CSV.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn fmt_bias(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_f64(*v))
        .collect::<Vec<_>>()
        .join(" ")
}
