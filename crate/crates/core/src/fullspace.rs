//! The full `2^N`-dimensional spin Hamiltonian, used only to cross-check the
//! single-excitation reduction.
//!
//! Conventions: spin 1 is the leftmost tensor factor, so spin `n` lives in bit
//! `N - n` of a basis index. `Z|0⟩ = |0⟩`, `Z|1⟩ = -|1⟩`. Each coupled pair is
//! counted once in the interaction sum.
//!
//! Under these conventions the single-excitation block is
//!
//! ```text
//!   B = 2·A + diag(ΣΔ − 2Δ_n + κ(E − 2·deg n))
//! ```
//!
//! where `A` is the adjacency matrix and `E` the number of edges. Hence
//! `B = 2·H_reduced(Δ_eff)` with `Δ_eff = diag(B) / 2`, and dynamics under `B`
//! at time `t` equal reduced dynamics under `Δ_eff` at time `2t`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{transfer_probability, EigenSystem};
use crate::error::{invalid, Error, Result};
use crate::network::{build_reduced_hamiltonian, BiasVector, NetworkSpec, Topology};

pub const MAX_FULL_SPINS: usize = 12;

/// Off-diagonal scale of the single-excitation block relative to the reduced Hamiltonian.
pub const BLOCK_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FullHamiltonian {
    matrix: DMatrix<f64>,
    kappa: f64,
    spec: NetworkSpec,
}

impl FullHamiltonian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
}

#[inline]
fn spin_bit(n_spins: usize, node: usize) -> usize {
    1 << (n_spins - node)
}

#[inline]
fn z_eigenvalue(state: usize, bit: usize) -> f64 {
    if state & bit == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn build_full_hamiltonian(
    spec: &NetworkSpec,
    bias: &BiasVector,
    kappa: f64,
) -> Result<FullHamiltonian> {
    let n = spec.size();
    if n > MAX_FULL_SPINS {
        return Err(Error::ResourceLimit(format!(
            "full Hamiltonian limited to {MAX_FULL_SPINS} spins, got {n}"
        )));
    }
    if bias.len() != n {
        return invalid(format!(
            "bias has {} entries, network has {n} nodes",
            bias.len()
        ));
    }
    if !kappa.is_finite() {
        return invalid("kappa must be finite");
    }
    let dim = 1usize << n;
    let edges: Vec<(usize, usize)> = spec
        .edges()
        .into_iter()
        .map(|(a, b)| (spin_bit(n, a), spin_bit(n, b)))
        .collect();
    let mut matrix = DMatrix::zeros(dim, dim);
    for state in 0..dim {
        let mut diag = 0.0;
        for (node, &delta) in (1..=n).zip(bias.values()) {
            diag += delta * z_eigenvalue(state, spin_bit(n, node));
        }
        for &(a, b) in &edges {
            diag += kappa * z_eigenvalue(state, a) * z_eigenvalue(state, b);
            // XX + YY flips an anti-aligned pair with amplitude 2 and
            // annihilates aligned pairs.
            if (state & a == 0) != (state & b == 0) {
                matrix[(state ^ a ^ b, state)] += 2.0;
            }
        }
        matrix[(state, state)] = diag;
    }
    Ok(FullHamiltonian {
        matrix,
        kappa,
        spec: *spec,
    })
}

/// Basis indices of the single-excitation states, ordered by excited node.
pub fn single_excitation_indices(n_spins: usize) -> Vec<usize> {
    (1..=n_spins).map(|node| spin_bit(n_spins, node)).collect()
}

pub fn extract_single_excitation_block(full: &FullHamiltonian) -> DMatrix<f64> {
    let idx = single_excitation_indices(full.spec.size());
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| full.matrix[(idx[i], idx[j])])
}

/// Diagonal of `Σ_n Z_n` in the computational basis.
pub fn total_excitation_diagonal(n_spins: usize) -> Vec<f64> {
    (0..1usize << n_spins)
        .map(|s| n_spins as f64 - 2.0 * s.count_ones() as f64)
        .collect()
}

/// `max |[H, Σ Z]|` entrywise.
pub fn excitation_commutator_norm(full: &FullHamiltonian) -> f64 {
    let z = total_excitation_diagonal(full.spec.size());
    let m = &full.matrix;
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max((m[(i, j)] * (z[j] - z[i])).abs());
        }
    }
    worst
}

/// The diagonal the single-excitation block must carry:
/// `ΣΔ − 2Δ_n + κ(E − 2·deg n)`.
pub fn expected_block_diagonal(spec: &NetworkSpec, bias: &BiasVector, kappa: f64) -> Vec<f64> {
    let total: f64 = bias.values().iter().sum();
    let edges = spec.edges().len() as f64;
    (1..=spec.size())
        .map(|node| total - 2.0 * bias.at(node) + kappa * (edges - 2.0 * spec.degree(node) as f64))
        .collect()
}

/// Bias for which `2·H_reduced(bias)` equals the single-excitation block.
pub fn equivalent_reduced_bias(spec: &NetworkSpec, bias: &BiasVector, kappa: f64) -> BiasVector {
    BiasVector::new(
        expected_block_diagonal(spec, bias, kappa)
            .into_iter()
            .map(|d| d / BLOCK_SCALE)
            .collect(),
    )
    .expect("finite inputs give finite diagonal")
}

/// Largest residuals found by [`verify_fullspace`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FullspaceReport {
    pub cases: usize,
    /// `max |[H_full, ΣZ]|`.
    pub commutator: f64,
    /// `max |B − 2·A − diag(expected)|`.
    pub block_affine: f64,
    /// `max |B − 2·H_reduced(Δ_eff)|`.
    pub block_scaled: f64,
    /// For uniform rings, spread of `B(κ=1) − B(κ=0)`; it must be a multiple of identity.
    pub ring_kappa_offset_spread: f64,
    /// `max |p_full(t) − p_reduced(2t)|` over sampled times and node pairs.
    pub transfer: f64,
}

impl FullspaceReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.commutator <= 1e-12
            && self.block_affine <= tol
            && self.block_scaled <= tol
            && self.ring_kappa_offset_spread <= tol
            && self.transfer <= tol
    }

    fn absorb(&mut self, other: &FullspaceReport) {
        self.cases += other.cases;
        self.commutator = self.commutator.max(other.commutator);
        self.block_affine = self.block_affine.max(other.block_affine);
        self.block_scaled = self.block_scaled.max(other.block_scaled);
        self.ring_kappa_offset_spread = self
            .ring_kappa_offset_spread
            .max(other.ring_kappa_offset_spread);
        self.transfer = self.transfer.max(other.transfer);
    }
}

/// Checks one (network, bias, κ) case, including full `2^N` time evolution.
pub fn check_fullspace_case(
    spec: &NetworkSpec,
    bias: &BiasVector,
    kappa: f64,
    times: &[f64],
) -> Result<FullspaceReport> {
    let n = spec.size();
    let full = build_full_hamiltonian(spec, bias, kappa)?;
    let block = extract_single_excitation_block(&full);

    let adjacency = build_reduced_hamiltonian(spec, &BiasVector::zeros(n))?;
    let mut affine = &block - adjacency.matrix() * BLOCK_SCALE;
    for (i, d) in expected_block_diagonal(spec, bias, kappa)
        .into_iter()
        .enumerate()
    {
        affine[(i, i)] -= d;
    }

    let reduced = build_reduced_hamiltonian(spec, &equivalent_reduced_bias(spec, bias, kappa))?;
    let scaled = (&block - reduced.matrix() * BLOCK_SCALE).amax();

    let ring_kappa_offset_spread = if spec.kind() == Topology::Ring && kappa != 0.0 {
        let flat = extract_single_excitation_block(&build_full_hamiltonian(spec, bias, 0.0)?);
        let diff = &block - flat;
        let d0 = diff[(0, 0)];
        let mut spread: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { d0 } else { 0.0 };
                spread = spread.max((diff[(i, j)] - target).abs());
            }
        }
        spread
    } else {
        0.0
    };

    let full_eig = EigenSystem::from_symmetric(full.matrix())?;
    let reduced_eig = EigenSystem::from_symmetric(reduced.matrix())?;
    let basis = single_excitation_indices(n);
    let mut transfer: f64 = 0.0;
    for input in 1..=n {
        for output in 1..=n {
            for &t in times {
                let p_full = transfer_probability(
                    &full_eig,
                    basis[input - 1] + 1,
                    basis[output - 1] + 1,
                    t,
                )?;
                let p_red = transfer_probability(&reduced_eig, input, output, BLOCK_SCALE * t)?;
                transfer = transfer.max((p_full - p_red).abs());
            }
        }
    }

    Ok(FullspaceReport {
        cases: 1,
        commutator: excitation_commutator_norm(&full),
        block_affine: affine.amax(),
        block_scaled: scaled,
        ring_kappa_offset_spread,
        transfer,
    })
}

/// Randomized full/reduced consistency suite over rings and chains of size
/// `3..=n_max`, κ ∈ {0, 1}, and biases uniform in `[-5, 5]`.
pub fn verify_fullspace(n_max: usize, trials: usize, seed: u64) -> Result<FullspaceReport> {
    if n_max > 10 {
        return Err(Error::ResourceLimit(format!(
            "verification limited to N <= 10, got {n_max}"
        )));
    }
    if n_max < 3 {
        return invalid(format!("n_max must be at least 3, got {n_max}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = [0.0, 0.37, 1.1, 2.9];
    let mut report = FullspaceReport::default();
    for _ in 0..trials {
        for n in 3..=n_max {
            for spec in [NetworkSpec::ring(n)?, NetworkSpec::chain(n)?] {
                let bias = BiasVector::new((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect())?;
                for kappa in [0.0, 1.0] {
                    report.absorb(&check_fullspace_case(&spec, &bias, kappa, &times)?);
                }
            }
        }
    }
    Ok(report)
}
