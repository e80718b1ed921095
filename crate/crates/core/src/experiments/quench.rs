use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fmt_f64, ExperimentConfig, RunArchive, Table};
use crate::dynamics::{eigendecompose, probability_series, rabi_probability, ProbabilitySeries};
use crate::error::{invalid, Error, Result};
use crate::network::{build_reduced_hamiltonian, BiasVector, NetworkSpec};
use crate::peaks::find_peaks;

/// Ring `1 → k` with a constant bias on nodes `k+1..=N`, against the
/// unbiased `k`-chain end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchConfig {
    pub size: usize,
    pub ks: Vec<usize>,
    pub biases: Vec<f64>,
    pub t_max: f64,
    pub dt: f64,
    /// Chain peaks above this are matched against ring peaks.
    pub peak_threshold: f64,
    /// Matched peaks closer than this count as coinciding.
    pub peak_tolerance: f64,
}

impl QuenchConfig {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            ks: (2..=size.div_ceil(2)).collect(),
            biases: vec![10.0, 30.0, 100.0],
            t_max: 30.0,
            dt: 0.01,
            peak_threshold: 0.8,
            peak_tolerance: 0.1,
        }
    }
}

fn quench_bias(n: usize, k: usize, value: f64) -> Result<BiasVector> {
    BiasVector::new((1..=n).map(|j| if j > k { value } else { 0.0 }).collect())
}

fn series(
    spec: &NetworkSpec,
    bias: &BiasVector,
    out: usize,
    t_max: f64,
    dt: f64,
) -> Result<ProbabilitySeries> {
    probability_series(
        &eigendecompose(&build_reduced_hamiltonian(spec, bias)?)?,
        1,
        out,
        t_max,
        dt,
    )
}

/// Effective two-level Hamiltonian on nodes 1 and 2 of a ring quenched with
/// `bias` on nodes `3..=N`, from the Schur complement at zero energy.
/// Returns `(c1, c2, coupling)`.
pub fn effective_pair(size: usize, bias: f64) -> Result<(f64, f64, f64)> {
    let spec = NetworkSpec::ring(size)?;
    let h = build_reduced_hamiltonian(&spec, &quench_bias(size, 2, bias)?)?;
    let m = h.matrix();
    let rest = size - 2;
    let h_bb = m.view((2, 2), (rest, rest)).clone_owned();
    let h_ab = m.view((0, 2), (2, rest)).clone_owned();
    let inv = h_bb
        .try_inverse()
        .ok_or_else(|| Error::Numeric(format!("quenched block is singular at bias {bias}")))?;
    let eff: DMatrix<f64> = m.view((0, 0), (2, 2)).clone_owned() - &h_ab * inv * h_ab.transpose();
    Ok((eff[(0, 0)], eff[(1, 1)], eff[(0, 1)]))
}

pub fn compare_quench(config: &QuenchConfig) -> Result<RunArchive> {
    let n = config.size;
    let ring = NetworkSpec::ring(n)?;
    if config.ks.is_empty() || config.biases.is_empty() {
        return invalid("need at least one k and one bias value");
    }
    if let Some(&k) = config.ks.iter().find(|&&k| k < 2 || k >= n) {
        return invalid(format!("k = {k} outside 2..{n}"));
    }
    let mut biases = config.biases.clone();
    biases.sort_by(f64::total_cmp);

    let mut tables = Vec::new();
    let mut stats = Table::new(
        "quench_stats",
        &[
            "k",
            "bias",
            "max_discrepancy",
            "chain_peaks",
            "matched_peaks",
            "max_peak_offset",
        ],
    );
    let mut per_k = Vec::new();
    for &k in &config.ks {
        let chain = series(
            &NetworkSpec::chain(k)?,
            &BiasVector::zeros(k),
            k,
            config.t_max,
            config.dt,
        )?;
        let chain_peaks = find_peaks(&chain, config.peak_threshold);
        let mut header = vec!["t".to_string(), "chain".to_string()];
        header.extend(biases.iter().map(|b| format!("ring_bias_{b}")));
        let mut columns = vec![chain.values.clone()];
        let mut rows = Vec::new();
        for &b in &biases {
            let quenched = series(&ring, &quench_bias(n, k, b)?, k, config.t_max, config.dt)?;
            let discrepancy = quenched
                .values
                .iter()
                .zip(&chain.values)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            let ring_peaks = find_peaks(&quenched, 0.5 * config.peak_threshold);
            let offsets: Vec<f64> = chain_peaks
                .iter()
                .filter_map(|cp| {
                    ring_peaks
                        .iter()
                        .map(|rp| (rp.time - cp.time).abs())
                        .min_by(f64::total_cmp)
                })
                .collect();
            let matched = offsets
                .iter()
                .filter(|&&d| d <= config.peak_tolerance)
                .count();
            let max_offset = offsets.iter().copied().fold(0.0, f64::max);
            stats.push(vec![
                k.to_string(),
                fmt_f64(b),
                fmt_f64(discrepancy),
                chain_peaks.len().to_string(),
                matched.to_string(),
                fmt_f64(if offsets.len() == chain_peaks.len() {
                    max_offset
                } else {
                    f64::INFINITY
                }),
            ]);
            rows.push(json!({
                "bias": b,
                "max_discrepancy": discrepancy,
                "chain_peaks": chain_peaks.len(),
                "matched_peaks": matched,
                "max_peak_offset": (offsets.len() == chain_peaks.len()).then_some(max_offset),
            }));
            columns.push(quenched.values);
        }
        let discrepancies: Vec<f64> = rows
            .iter()
            .map(|r| r["max_discrepancy"].as_f64().unwrap_or(f64::NAN))
            .collect();
        let monotone = discrepancies.windows(2).all(|w| w[1] < w[0]);
        let mut rabi = serde_json::Value::Null;
        if k == 2 {
            let mut rabi_rows = Vec::new();
            for (&b, values) in biases.iter().zip(&columns[1..]) {
                let (c1, c2, coupling) = effective_pair(n, b)?;
                let deviation = chain
                    .times
                    .iter()
                    .zip(values)
                    .map(|(&t, &p)| (p - rabi_probability(c1, c2, t)).abs())
                    .fold(0.0, f64::max);
                rabi_rows.push(json!({ "bias": b, "c1": c1, "c2": c2, "coupling": coupling, "max_deviation": deviation }));
            }
            rabi = json!(rabi_rows);
        }
        per_k.push(json!({ "k": k, "monotone": monotone, "by_bias": rows, "rabi": rabi }));

        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut table = Table::new(format!("quench_series_k{k}"), &header_refs);
        for (i, t) in chain.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t)];
            row.extend(columns.iter().map(|c| fmt_f64(c[i])));
            table.push(row);
        }
        tables.push(table);
    }
    tables.insert(0, stats);
    let summary = json!({ "size": n, "biases": biases, "per_k": per_k });
    Ok(RunArchive::new(
        ExperimentConfig::CompareQuench(config.clone()),
        Vec::new(),
        summary,
        tables,
    ))
}
