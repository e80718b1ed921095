use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, RunArchive};
use crate::error::Result;

/// Residual bound for the full/reduced consistency suite.
pub const FULLSPACE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullspaceConfig {
    pub n_max: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for FullspaceConfig {
    fn default() -> Self {
        Self {
            n_max: 8,
            trials: 20,
            seed: 0,
        }
    }
}

/// Runs the suite; `summary.passed` tells whether all residuals are within
/// [`FULLSPACE_TOL`].
pub fn verify_fullspace(config: &FullspaceConfig) -> Result<RunArchive> {
    let report = crate::fullspace::verify_fullspace(config.n_max, config.trials, config.seed)?;
    let mut summary = serde_json::to_value(&report)?;
    summary["passed"] = report.passes(FULLSPACE_TOL).into();
    summary["tolerance"] = FULLSPACE_TOL.into();
    Ok(RunArchive::new(
        ExperimentConfig::VerifyFullspace(config.clone()),
        Vec::new(),
        summary,
        Vec::new(),
    ))
}
