//! Static on-site biases that route a single spin excitation through
//! uniformly coupled spin rings and chains.
//!
//! The crate covers the biased single-excitation Hamiltonian ([`network`]),
//! a full `2^N` cross-check ([`fullspace`]), exact spectral dynamics
//! ([`dynamics`], [`peaks`]), the infidelity objective with analytic gradients
//! ([`problem`], [`objective`]), multistart L-BFGS ([`optimize`]), the
//! eigenvector alignment analysis ([`eigenstructure`]) and the experiment
//! drivers behind the `spinbias` CLI ([`experiments`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod eigenstructure;
pub mod error;
pub mod experiments;
pub mod fullspace;
pub mod network;
pub mod objective;
pub mod optimize;
pub mod peaks;
pub mod problem;

pub use dynamics::{
    eigendecompose, probability_series, rabi_probability, transfer_probability, EigenSystem,
    ProbabilitySeries,
};
pub use eigenstructure::{
    check_optimality_condition, compute_itf, symmetric_transfer_expression, ItfReport,
};
pub use error::{Error, Result};
pub use fullspace::{build_full_hamiltonian, extract_single_excitation_block, FullHamiltonian};
pub use network::{build_reduced_hamiltonian, BiasVector, Hamiltonian, NetworkSpec, Topology};
pub use objective::{
    decode, eq3_residual, infidelity_and_gradient, ObjectiveValue, ParameterVector,
};
pub use optimize::{
    make_initials, minimize, run_ensemble, Ensemble, InitKind, InitStrategy, LbfgsOptions,
    RunRecord,
};
pub use peaks::{find_peaks, Peak};
pub use problem::{symmetry_pairs, BiasConstraint, Bounds, TimeMode, TransferProblem};
