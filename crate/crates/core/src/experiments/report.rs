use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{fmt_f64, ExperimentConfig, RunArchive, Table};
use crate::dynamics::{eigendecompose, transfer_probability};
use crate::eigenstructure::{check_optimality_condition, compute_itf, ItfReport};
use crate::error::{invalid, Result};
use crate::network::{build_reduced_hamiltonian, BiasVector, NetworkSpec};
use crate::objective::eq3_residual;

/// Which run of an archived ensemble to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunSelector {
    Best,
    Fastest,
    Index(usize),
}

impl std::str::FromStr for RunSelector {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(RunSelector::Best),
            "fastest" => Ok(RunSelector::Fastest),
            other => other.parse().map(RunSelector::Index).or_else(|_| {
                invalid(format!(
                    "run must be best, fastest or an index, got {other:?}"
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum EigenSource {
    Archive {
        path: PathBuf,
        ensemble: usize,
        run: RunSelector,
    },
    Solution {
        network: NetworkSpec,
        in_node: usize,
        out_node: usize,
        bias: Vec<f64>,
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenreportConfig {
    pub source: EigenSource,
    pub condition_tol: f64,
}

impl EigenreportConfig {
    pub fn new(source: EigenSource) -> Self {
        Self {
            source,
            condition_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub network: NetworkSpec,
    pub in_node: usize,
    pub out_node: usize,
    pub bias: Vec<f64>,
    pub time: f64,
    pub fidelity: f64,
    pub eigenvalues: Vec<f64>,
    pub itf: ItfReport,
    pub condition_tol: f64,
    pub condition_satisfied: bool,
    pub max_condition_residual: f64,
    pub eq3_residual: f64,
    pub phase: f64,
}

fn resolve(source: &EigenSource) -> Result<(NetworkSpec, usize, usize, BiasVector, f64)> {
    match source {
        EigenSource::Solution {
            network,
            in_node,
            out_node,
            bias,
            time,
        } => Ok((
            *network,
            *in_node,
            *out_node,
            BiasVector::new(bias.clone())?,
            *time,
        )),
        EigenSource::Archive {
            path,
            ensemble,
            run,
        } => {
            let archive = RunArchive::load(path)?;
            let Some(ens) = archive.ensembles.get(*ensemble) else {
                return invalid(format!(
                    "archive has {} ensembles, asked for {ensemble}",
                    archive.ensembles.len()
                ));
            };
            let record = match run {
                RunSelector::Best => Some(ens.best_run()),
                RunSelector::Fastest => ens.fastest_run(),
                RunSelector::Index(i) => ens.runs.get(*i),
            };
            let Some(record) = record else {
                return invalid(format!("ensemble {ensemble} has no {run:?} solution"));
            };
            let p = &ens.problem;
            Ok((
                p.spec,
                p.in_node,
                p.out_node,
                record.bias.clone(),
                record.time,
            ))
        }
    }
}

/// ITF, alignment residuals and the phase-eliminated residual of one solution.
pub fn analyse(
    network: NetworkSpec,
    in_node: usize,
    out_node: usize,
    bias: &BiasVector,
    time: f64,
    condition_tol: f64,
) -> Result<EigenReport> {
    let eig = eigendecompose(&build_reduced_hamiltonian(&network, bias)?)?;
    let itf = compute_itf(&eig, in_node, out_node)?;
    let (satisfied, worst) = check_optimality_condition(&eig, in_node, out_node, condition_tol)?;
    let (residual, phase) = eq3_residual(&eig, in_node, out_node, time)?;
    Ok(EigenReport {
        network,
        in_node,
        out_node,
        bias: bias.values().to_vec(),
        time,
        fidelity: transfer_probability(&eig, in_node, out_node, time)?,
        eigenvalues: eig.values().to_vec(),
        itf,
        condition_tol,
        condition_satisfied: satisfied,
        max_condition_residual: worst,
        eq3_residual: residual,
        phase,
    })
}

pub fn eigenreport(config: &EigenreportConfig) -> Result<RunArchive> {
    let (network, in_node, out_node, bias, time) = resolve(&config.source)?;
    let report = analyse(
        network,
        in_node,
        out_node,
        &bias,
        time,
        config.condition_tol,
    )?;
    let mut table = Table::new(
        "eigenstructure",
        &[
            "n",
            "eigenvalue",
            "overlap_in",
            "overlap_out",
            "sign",
            "condition_residual",
        ],
    );
    for n in 0..report.eigenvalues.len() {
        table.push(vec![
            (n + 1).to_string(),
            fmt_f64(report.eigenvalues[n]),
            fmt_f64(report.itf.overlaps_in[n]),
            fmt_f64(report.itf.overlaps_out[n]),
            report.itf.signs[n].to_string(),
            fmt_f64(report.itf.condition_residuals[n]),
        ]);
    }
    let summary = serde_json::to_value(&report)?;
    Ok(RunArchive::new(
        ExperimentConfig::Eigenreport(config.clone()),
        Vec::new(),
        summary,
        vec![table],
    ))
}
