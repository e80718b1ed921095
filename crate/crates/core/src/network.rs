//! Network topologies and the biased single-excitation Hamiltonian.
//!
//! Nodes are numbered `1..=N` everywhere in the public API. Couplings are
//! uniform and fixed to 1, so frequencies are in units of J and times in
//! units of 1/J.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Chain,
}

/// A uniformly coupled ring or chain of `size` spins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NetworkSpec {
    kind: Topology,
    size: usize,
}

#[derive(Deserialize)]
struct RawSpec {
    kind: Topology,
    size: usize,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = crate::Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        Self::new(raw.kind, raw.size)
    }
}

impl NetworkSpec {
    pub const COUPLING: f64 = 1.0;

    pub fn new(kind: Topology, size: usize) -> Result<Self> {
        match kind {
            Topology::Chain if size < 2 => {
                invalid(format!("chain needs at least 2 nodes, got {size}"))
            }
            // A two-node "ring" would double-count its single edge.
            Topology::Ring if size < 3 => {
                invalid(format!("ring needs at least 3 nodes, got {size}"))
            }
            _ => Ok(Self { kind, size }),
        }
    }

    pub fn ring(size: usize) -> Result<Self> {
        Self::new(Topology::Ring, size)
    }

    pub fn chain(size: usize) -> Result<Self> {
        Self::new(Topology::Chain, size)
    }

    pub fn kind(&self) -> Topology {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Undirected edges as 1-based pairs `(m, n)` with `m < n`, each listed once.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = (1..self.size).map(|m| (m, m + 1)).collect();
        if self.kind == Topology::Ring {
            edges.push((1, self.size));
        }
        edges
    }

    pub fn is_edge(&self, m: usize, n: usize) -> bool {
        let (lo, hi) = if m < n { (m, n) } else { (n, m) };
        if lo == 0 || hi > self.size || lo == hi {
            return false;
        }
        hi - lo == 1 || (self.kind == Topology::Ring && lo == 1 && hi == self.size)
    }

    pub fn degree(&self, node: usize) -> usize {
        match self.kind {
            Topology::Ring => 2,
            Topology::Chain if node == 1 || node == self.size => 1,
            Topology::Chain => 2,
        }
    }

    /// Validates a 1-based node index.
    pub fn check_node(&self, node: usize) -> Result<()> {
        if node == 0 || node > self.size {
            return invalid(format!("node {node} outside 1..={}", self.size));
        }
        Ok(())
    }

    /// Ring distance (or chain distance) between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        match self.kind {
            Topology::Ring => d.min(self.size - d),
            Topology::Chain => d,
        }
    }
}

impl std::fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            Topology::Ring => write!(f, "ring{}", self.size),
            Topology::Chain => write!(f, "chain{}", self.size),
        }
    }
}

/// On-site potentials, one per node, in units of J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BiasVector(Vec<f64>);

impl BiasVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("bias entry {} is not finite", i + 1));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Value at a 1-based node.
    pub fn at(&self, node: usize) -> f64 {
        self.0[node - 1]
    }
}

impl AsRef<[f64]> for BiasVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `H_Δ = H_0 + diag(Δ)` restricted to the single-excitation subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    matrix: DMatrix<f64>,
    spec: NetworkSpec,
    bias: BiasVector,
}

impl Hamiltonian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn bias(&self) -> &BiasVector {
        &self.bias
    }

    pub fn dim(&self) -> usize {
        self.spec.size
    }
}

pub fn build_reduced_hamiltonian(spec: &NetworkSpec, bias: &BiasVector) -> Result<Hamiltonian> {
    let n = spec.size();
    if bias.len() != n {
        return invalid(format!(
            "bias has {} entries, network has {n} nodes",
            bias.len()
        ));
    }
    let mut matrix = DMatrix::zeros(n, n);
    for (i, &d) in bias.values().iter().enumerate() {
        matrix[(i, i)] = d;
    }
    for (m, k) in spec.edges() {
        matrix[(m - 1, k - 1)] = NetworkSpec::COUPLING;
        matrix[(k - 1, m - 1)] = NetworkSpec::COUPLING;
    }
    Ok(Hamiltonian {
        matrix,
        spec: *spec,
        bias: bias.clone(),
    })
}
