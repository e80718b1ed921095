use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{derive_seed, fmt_f64, ExperimentConfig, RunArchive, Table};
use crate::error::{invalid, Result};
use crate::network::NetworkSpec;
use crate::optimize::{
    log10_infidelity, run_ensemble, Ensemble, InitKind, InitStrategy, LbfgsOptions,
};
use crate::problem::{BiasConstraint, TimeMode, TransferProblem};

/// Runs ending above this infidelity count as trapped.
pub const TRAP_INFIDELITY: f64 = 0.1;

/// Fixed-time optimization over a grid of transfer times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub network: NetworkSpec,
    pub in_node: usize,
    pub out_node: usize,
    pub t_from: f64,
    pub t_to: f64,
    pub t_step: f64,
    pub repeats: usize,
    pub seed: u64,
    /// The envelope "dips" where its infidelity falls below this.
    pub dip_threshold: f64,
}

impl ScanConfig {
    pub fn new(network: NetworkSpec, in_node: usize, out_node: usize) -> Self {
        Self {
            network,
            in_node,
            out_node,
            t_from: 1.0,
            t_to: 30.0,
            t_step: 0.2,
            repeats: 100,
            seed: 0,
            dip_threshold: 1e-4,
        }
    }

    /// Grid `t_from, t_from + t_step, ...` up to and including `t_to`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        let (a, b, h) = (self.t_from, self.t_to, self.t_step);
        if !(a.is_finite() && b.is_finite() && h.is_finite()) || h <= 0.0 || a < 0.0 || b < a {
            return invalid(format!(
                "time grid {a}:{h}:{b} needs 0 <= from <= to and step > 0"
            ));
        }
        if self.repeats == 0 {
            return invalid("repeats must be at least 1");
        }
        let steps = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=steps).map(|i| a + i as f64 * h).collect())
    }
}

pub fn scan_times(config: &ScanConfig) -> Result<RunArchive> {
    let grid = config.grid()?;
    let problems = grid
        .iter()
        .map(|&t| {
            TransferProblem::new(
                config.network,
                config.in_node,
                config.out_node,
                TimeMode::Fixed { t },
                BiasConstraint::UNCONSTRAINED,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = LbfgsOptions::default();
    let ensembles = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            run_ensemble(
                p,
                &InitStrategy::new(InitKind::Random, derive_seed(config.seed, i)),
                config.repeats,
                &opts,
            )
        })
        .collect::<Result<Vec<Ensemble>>>()?;

    let mut scatter = Table::new(
        "scan_scatter",
        &["t", "restart", "infidelity", "log10_infidelity"],
    );
    let mut envelope = Table::new(
        "scan_envelope",
        &[
            "t",
            "min_infidelity",
            "log10_min_infidelity",
            "trapped_fraction",
        ],
    );
    let mut first_dip = None;
    let mut trapped = 0usize;
    let mut total = 0usize;
    for (t, ens) in grid.iter().zip(&ensembles) {
        for r in &ens.runs {
            scatter.push(vec![
                fmt_f64(*t),
                r.restart.to_string(),
                fmt_f64(r.infidelity),
                fmt_f64(log10_infidelity(r.infidelity)),
            ]);
        }
        let best = ens.best_run().infidelity;
        let stuck = ens
            .runs
            .iter()
            .filter(|r| r.infidelity > TRAP_INFIDELITY)
            .count();
        trapped += stuck;
        total += ens.runs.len();
        if first_dip.is_none() && best < config.dip_threshold {
            first_dip = Some(*t);
        }
        envelope.push(vec![
            fmt_f64(*t),
            fmt_f64(best),
            fmt_f64(log10_infidelity(best)),
            fmt_f64(stuck as f64 / ens.runs.len() as f64),
        ]);
    }
    let env: Vec<f64> = ensembles.iter().map(|e| e.best_run().infidelity).collect();
    let minima: Vec<_> = (0..env.len())
        .filter(|&i| {
            (i == 0 || env[i] < env[i - 1]) && (i + 1 == env.len() || env[i] <= env[i + 1])
        })
        .map(|i| json!({ "t": grid[i], "min_infidelity": env[i] }))
        .collect();
    let summary = json!({
        "grid_points": grid.len(),
        "envelope_minima": minima,
        "runs": total,
        "first_dip_time": first_dip,
        "trapped_fraction": trapped as f64 / total as f64,
    });
    Ok(RunArchive::new(
        ExperimentConfig::ScanTimes(config.clone()),
        ensembles,
        summary,
        vec![scatter, envelope],
    ))
}
