//! Transfer problems: which nodes, which time regime, which bias constraints.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::{NetworkSpec, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TimeMode {
    /// Transfer time held at `t`.
    Fixed { t: f64 },
    /// Transfer time optimized over `(0, ∞)`.
    Free,
    /// Transfer time optimized over `(0, t_max)`.
    Bounded { t_max: f64 },
}

impl TimeMode {
    pub fn is_optimized(&self) -> bool {
        !matches!(self, TimeMode::Fixed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

/// Restrictions on the bias vector. `symmetric` ties mirror-image nodes
/// together; `bounds` keeps every bias inside `[lo, hi]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasConstraint {
    pub symmetric: bool,
    pub bounds: Option<Bounds>,
}

impl BiasConstraint {
    pub const UNCONSTRAINED: Self = Self {
        symmetric: false,
        bounds: None,
    };

    pub const SYMMETRIC: Self = Self {
        symmetric: true,
        bounds: None,
    };

    pub fn boxed(lo: f64, hi: f64) -> Self {
        Self {
            symmetric: false,
            bounds: Some(Bounds { lo, hi }),
        }
    }

    pub fn symmetric_boxed(lo: f64, hi: f64) -> Self {
        Self {
            symmetric: true,
            bounds: Some(Bounds { lo, hi }),
        }
    }
}

/// Reflection of the network that swaps `input` and `output`, as a 1-based
/// map `node -> image` (index 0 unused).
///
/// On a ring this always exists: `j ↦ (in + out − j) mod N`. On a chain it
/// exists only when the two nodes sit symmetrically about the centre.
pub fn reflection(spec: &NetworkSpec, input: usize, output: usize) -> Result<Vec<usize>> {
    spec.check_node(input)?;
    spec.check_node(output)?;
    let n = spec.size();
    match spec.kind() {
        Topology::Ring => {
            let s = (input - 1) + (output - 1);
            Ok((0..=n)
                .map(|j| if j == 0 { 0 } else { (s + n - (j - 1)) % n + 1 })
                .collect())
        }
        Topology::Chain if input + output == n + 1 => Ok((0..=n)
            .map(|j| if j == 0 { 0 } else { n + 1 - j })
            .collect()),
        Topology::Chain => invalid(format!(
            "chain of {n} has no reflection exchanging nodes {input} and {output}"
        )),
    }
}

/// Orbits of the reflection of an `n`-ring that maps node 1 onto node `k`.
/// Orbits are sorted by their smallest node; each has one or two members.
pub fn symmetry_pairs(n: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    let spec = NetworkSpec::ring(n)?;
    if k < 2 || k > n {
        return invalid(format!("output node {k} outside 2..={n}"));
    }
    orbits(&reflection(&spec, 1, k)?)
}

/// Partitions `1..=N` into orbits of an involution given as a 1-based map.
pub fn orbits(map: &[usize]) -> Result<Vec<Vec<usize>>> {
    let n = map.len() - 1;
    let mut seen = vec![false; n + 1];
    let mut out = Vec::new();
    for j in 1..=n {
        if seen[j] {
            continue;
        }
        let image = map[j];
        if image == 0 || image > n || map[image] != j {
            return invalid("map is not an involution on 1..=N");
        }
        seen[j] = true;
        seen[image] = true;
        out.push(if image == j {
            vec![j]
        } else {
            vec![j.min(image), j.max(image)]
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferProblem {
    pub spec: NetworkSpec,
    pub in_node: usize,
    pub out_node: usize,
    pub time_mode: TimeMode,
    pub constraint: BiasConstraint,
}

impl TransferProblem {
    pub fn new(
        spec: NetworkSpec,
        in_node: usize,
        out_node: usize,
        time_mode: TimeMode,
        constraint: BiasConstraint,
    ) -> Result<Self> {
        spec.check_node(in_node)?;
        spec.check_node(out_node)?;
        if in_node == out_node {
            return invalid("input and output nodes must differ");
        }
        match time_mode {
            TimeMode::Fixed { t } if !(t.is_finite() && t >= 0.0) => {
                return invalid(format!(
                    "fixed time must be finite and non-negative, got {t}"
                ))
            }
            TimeMode::Bounded { t_max } if !(t_max.is_finite() && t_max > 0.0) => {
                return invalid(format!("t_max must be finite and positive, got {t_max}"))
            }
            _ => {}
        }
        if let Some(Bounds { lo, hi }) = constraint.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return invalid(format!("bias box [{lo}, {hi}] is empty or not finite"));
            }
        }
        if constraint.symmetric {
            reflection(&spec, in_node, out_node)?;
        }
        Ok(Self {
            spec,
            in_node,
            out_node,
            time_mode,
            constraint,
        })
    }

    /// Orbits of bias nodes that share one free parameter.
    pub fn bias_orbits(&self) -> Vec<Vec<usize>> {
        if self.constraint.symmetric {
            let map = reflection(&self.spec, self.in_node, self.out_node)
                .expect("validated at construction");
            orbits(&map).expect("reflections are involutions")
        } else {
            (1..=self.spec.size()).map(|j| vec![j]).collect()
        }
    }

    /// Number of free bias parameters.
    pub fn bias_dim(&self) -> usize {
        self.bias_orbits().len()
    }

    /// Total length of the optimizer's parameter vector.
    pub fn param_dim(&self) -> usize {
        self.bias_dim() + usize::from(self.time_mode.is_optimized())
    }

    /// Hop distance between input and output.
    pub fn distance(&self) -> usize {
        self.spec.distance(self.in_node, self.out_node)
    }
}
