//! Analytic continuation of fermionic imaginary-time Green's functions.
//!
//! The crate recovers a real-frequency spectral function `A(ω)` from
//! `G(τ) = ∫ K(τ, ω) A(ω) dω` with the Fermi kernel, using
//!
//! * [`prox`]: ISTA on the ℓ₁-regularized least-squares problem, plus a
//!   coordinate-descent oracle;
//! * [`unrolled`]: LISTA/RLISTA, ISTA unrolled to a fixed depth with learned
//!   per-layer weights, trained by [`train`];
//! * [`fcn`]: fully-connected baselines;
//! * [`maxent`]: maximum entropy with a flat or a network-derived default model.
//!
//! [`synthdata`] generates labelled datasets, [`metrics`] scores results, and
//! [`benchmark`] runs the end-to-end comparisons. The `anacont` binary wraps
//! all of it; see `examples/` for one program per capability.

pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod fcn;
pub mod kernel;
pub mod linalg;
pub mod maxent;
pub mod metrics;
pub mod prox;
pub mod rng;
pub mod synthdata;
pub mod table;
pub mod train;
pub mod unrolled;

pub use error::{Error, Result};
pub use kernel::{GridSpec, KernelMatrix};
pub use train::SpectralPredictor;

/// Whether per-sample work may run on the rayon pool. Results are identical
/// either way; `Serial` exists for strict single-threaded reproducibility runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}
