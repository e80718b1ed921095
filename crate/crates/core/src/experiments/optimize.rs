use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fmt_bias, fmt_f64, ExperimentConfig, RunArchive, Table};
use crate::dynamics::{eigendecompose, probability_series};
use crate::error::Result;
use crate::network::{build_reduced_hamiltonian, BiasVector, NetworkSpec};
use crate::optimize::{
    log10_infidelity, run_ensemble, Ensemble, InitKind, InitStrategy, LbfgsOptions, RunRecord,
    HISTOGRAM_BIN_WIDTH,
};
use crate::problem::{BiasConstraint, Bounds, TimeMode, TransferProblem};

/// Multistart optimization of biases and transfer time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub network: NetworkSpec,
    pub in_node: usize,
    pub out_node: usize,
    pub strategy: InitKind,
    pub restarts: usize,
    pub seed: u64,
    /// Mirror symmetry; always on for the symmetric strategies.
    pub symmetric: bool,
    pub bounds: Option<Bounds>,
    /// Optimize the time over `(0, t_max)` instead of `(0, ∞)`.
    pub t_max: Option<f64>,
    /// Sampling step of the emitted `p(t)` series.
    pub series_dt: f64,
}

impl OptimizeConfig {
    pub fn new(network: NetworkSpec, in_node: usize, out_node: usize, strategy: InitKind) -> Self {
        Self {
            network,
            in_node,
            out_node,
            strategy,
            restarts: 100,
            seed: 0,
            symmetric: false,
            bounds: None,
            t_max: None,
            series_dt: 0.01,
        }
    }

    pub fn problem(&self) -> Result<TransferProblem> {
        let time_mode = match self.t_max {
            Some(t_max) => TimeMode::Bounded { t_max },
            None => TimeMode::Free,
        };
        let constraint = BiasConstraint {
            symmetric: self.symmetric || self.strategy.symmetric(),
            bounds: self.bounds,
        };
        TransferProblem::new(
            self.network,
            self.in_node,
            self.out_node,
            time_mode,
            constraint,
        )
    }
}

/// `p(t)` of a solution next to the unbiased evolution, on `[0, 1.5 T]`.
pub(crate) fn solution_series(
    problem: &TransferProblem,
    bias: &BiasVector,
    time: f64,
    dt: f64,
    name: &str,
) -> Result<Table> {
    let t_end = (1.5 * time).max(dt);
    let eig = eigendecompose(&build_reduced_hamiltonian(&problem.spec, bias)?)?;
    let natural = eigendecompose(&build_reduced_hamiltonian(
        &problem.spec,
        &BiasVector::zeros(problem.spec.size()),
    )?)?;
    let p = probability_series(&eig, problem.in_node, problem.out_node, t_end, dt)?;
    let q = probability_series(&natural, problem.in_node, problem.out_node, t_end, dt)?;
    let mut table = Table::new(name, &["t", "p_solution", "p_natural"]);
    for ((t, a), b) in p.times.iter().zip(&p.values).zip(&q.values) {
        table.push(vec![fmt_f64(*t), fmt_f64(*a), fmt_f64(*b)]);
    }
    Ok(table)
}

fn run_summary(run: &RunRecord) -> serde_json::Value {
    json!({
        "restart": run.restart,
        "time": run.time,
        "fidelity": run.fidelity(),
        "infidelity": run.infidelity,
        "bias": run.bias.values(),
    })
}

pub(crate) fn runs_table(ens: &Ensemble, name: &str) -> Table {
    let mut table = Table::new(
        name,
        &[
            "restart",
            "time",
            "infidelity",
            "log10_infidelity",
            "iterations",
            "converged",
            "termination",
        ],
    );
    for r in &ens.runs {
        table.push(vec![
            r.restart.to_string(),
            fmt_f64(r.time),
            fmt_f64(r.infidelity),
            fmt_f64(log10_infidelity(r.infidelity)),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.termination.clone(),
        ]);
    }
    table
}

pub fn optimize(config: &OptimizeConfig) -> Result<RunArchive> {
    let problem = config.problem()?;
    let strategy = InitStrategy::new(config.strategy, config.seed);
    let ens = run_ensemble(
        &problem,
        &strategy,
        config.restarts,
        &LbfgsOptions::default(),
    )?;

    let mut histogram = Table::new("histogram", &["log10_lo", "log10_hi", "count"]);
    for bin in &ens.stats.histogram {
        histogram.push(vec![
            fmt_f64(bin.lo),
            fmt_f64(bin.lo + HISTOGRAM_BIN_WIDTH),
            bin.count.to_string(),
        ]);
    }
    let mut solutions = Table::new(
        "solutions",
        &["role", "restart", "time", "fidelity", "bias"],
    );
    let mut tables = vec![runs_table(&ens, "runs"), histogram];
    let mut roles = vec![("best", ens.best_run())];
    if let Some(fast) = ens.fastest_run() {
        roles.push(("fastest", fast));
    }
    for (role, run) in roles {
        solutions.push(vec![
            role.to_string(),
            run.restart.to_string(),
            fmt_f64(run.time),
            fmt_f64(run.fidelity()),
            fmt_bias(run.bias.values()),
        ]);
        tables.push(solution_series(
            &problem,
            &run.bias,
            run.time,
            config.series_dt,
            &format!("series_{role}"),
        )?);
    }
    tables.insert(2, solutions);

    let summary = json!({
        "problem": problem,
        "best": run_summary(ens.best_run()),
        "fastest": ens.fastest_run().map(run_summary),
        "success_rate": ens.stats.success_rate,
        "failure_rate": ens.stats.failure_rate,
    });
    Ok(RunArchive::new(
        ExperimentConfig::Optimize(config.clone()),
        vec![ens],
        summary,
        tables,
    ))
}
