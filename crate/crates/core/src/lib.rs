//! Two-group binary choice with social interaction on a random directed
//! communication graph.
//!
//! Agents `0..n/2` form block `S`, agents `n/2..n` form block `S^c`. A quenched
//! [`BlockGraph`] carries the within-block edges (`eps`, probability `p`) and the
//! between-block edges (`delta`, probability `q`). The crate provides
//!
//! * graph generation, including the nested survival coupling across sizes ([`blockgraph`]),
//! * energies, block magnetizations and link-count identities ([`hamiltonian`]),
//! * a heat-bath Glauber sampler of the quenched Gibbs measure ([`glauber`]),
//! * brute-force enumeration, partition functions and concentration checks ([`exact`]),
//! * Curie-Weiss fixed points, phase classification, the rate function and the
//!   variational free energy ([`meanfield`]),
//! * experiment orchestration used by the `blockspin` binary ([`experiment`]).

pub mod blockgraph;
pub mod entropy;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod glauber;
pub mod hamiltonian;
pub mod meanfield;
mod spins;

pub use blockgraph::{edge_counts, gen_graph, gen_nested, BlockGraph, GraphSequence};
pub use error::{Error, Result};
pub use hamiltonian::{LinkCounts, Magnetization, ModelParams, SpinConfig};
pub use meanfield::{classify_phase, cw_fixed_point, Phase, PhaseDiagnosis};
