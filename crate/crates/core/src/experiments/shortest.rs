use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{derive_seed, fmt_bias, fmt_f64, ExperimentConfig, RunArchive, Table};
use crate::error::{invalid, Result};
use crate::network::NetworkSpec;
use crate::optimize::{run_ensemble, Ensemble, InitKind, InitStrategy, LbfgsOptions};
use crate::problem::{BiasConstraint, TimeMode, TransferProblem};

/// Shortest time above a fidelity threshold for every ring size and every
/// output `k = 2..=⌈N/2⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortestConfig {
    pub sizes: Vec<usize>,
    pub threshold: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ShortestConfig {
    fn default() -> Self {
        Self {
            sizes: (5..=15).collect(),
            threshold: 0.99,
            restarts: 100,
            seed: 0,
        }
    }
}

pub fn shortest_times(config: &ShortestConfig) -> Result<RunArchive> {
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return invalid(format!("threshold {} outside (0, 1)", config.threshold));
    }
    if config.sizes.is_empty() {
        return invalid("no ring sizes given");
    }
    let mut problems = Vec::new();
    for &n in &config.sizes {
        let ring = NetworkSpec::ring(n)?;
        for k in 2..=n.div_ceil(2) {
            problems.push(TransferProblem::new(
                ring,
                1,
                k,
                TimeMode::Free,
                BiasConstraint::SYMMETRIC,
            )?);
        }
    }
    let opts = LbfgsOptions::default();
    let ensembles = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let strategy =
                InitStrategy::new(InitKind::SymmetricChainPeaks, derive_seed(config.seed, i));
            run_ensemble(p, &strategy, config.restarts, &opts)
        })
        .collect::<Result<Vec<Ensemble>>>()?;

    let mut table = Table::new(
        "shortest_times",
        &["N", "k", "time", "fidelity", "restart", "bias"],
    );
    let mut rows = Vec::new();
    for ens in &ensembles {
        let (n, k) = (ens.problem.spec.size(), ens.problem.out_node);
        match ens.fastest_above(config.threshold).map(|i| &ens.runs[i]) {
            Some(r) => {
                table.push(vec![
                    n.to_string(),
                    k.to_string(),
                    fmt_f64(r.time),
                    fmt_f64(r.fidelity()),
                    r.restart.to_string(),
                    fmt_bias(r.bias.values()),
                ]);
                rows.push(json!({ "N": n, "k": k, "time": r.time, "fidelity": r.fidelity(), "restart": r.restart }));
            }
            None => {
                table.push(vec![
                    n.to_string(),
                    k.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
                rows.push(json!({ "N": n, "k": k, "time": null }));
            }
        }
    }
    let summary = json!({ "threshold": config.threshold, "entries": rows });
    Ok(RunArchive::new(
        ExperimentConfig::ShortestTimes(config.clone()),
        ensembles,
        summary,
        vec![table],
    ))
}
