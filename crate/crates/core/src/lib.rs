//! Monte Carlo Hamiltonian for a chain of coupled anharmonic oscillators.
//!
//! The transition matrix M_ij(T) = ⟨x_i| e^{-HT/ħ} |x_j⟩ is estimated over a
//! basis of box states by sampling Euclidean paths, and diagonalized to
//! give an effective low-energy spectrum. The spectrum feeds canonical
//! thermodynamics, which can be compared against conventional Lagrangian
//! lattice estimators and against exact references for small systems.
//!
//! The usual flow for an interacting chain:
//!
//! 1. [`sampler::sample_endpoint_ensemble`] draws path endpoints x(T).
//! 2. [`basis::build_stochastic_basis`] turns them into box states.
//! 3. [`hamiltonian::assemble`] estimates M(T) with Brownian bridges.
//! 4. [`hamiltonian::solve_spectrum`] gives levels with error bars.
//! 5. [`thermo::thermo_from_spectrum`] evaluates F, U, S and C.
//!
//! [`pipeline`] wires these stages together from a [`config::RunConfig`].

pub mod basis;
pub mod config;
pub mod error;
pub mod free;
pub mod hamiltonian;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod table;
pub mod thermo;

pub use error::{Error, Result};
pub use model::{ChainBoundary, FieldPath, LatticeParams, ModelParams};
pub use rng::RngStream;
pub use stats::Estimate;
