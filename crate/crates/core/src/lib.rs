//! Simulation and analysis toolkit for counting quantum emitters packed into a
//! subwavelength volume from two macroscopic observables: the zero-delay
//! second-order correlation g²(0) and the collective fluorescence lifetime.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ensemble`] builds emitter geometries, their coherent (J) and dissipative
//!   (Γ) couplings, and the collective decay modes of Γ.
//! * [`dynamics`] evolves the emitters with a Lindblad master equation (small
//!   N oracle) or with quantum-jump trajectories, and produces photon streams.
//! * [`detection`] runs streams through a Hanbury Brown–Twiss detector chain
//!   and builds TCSPC decay and coincidence histograms.
//! * [`photstat`] holds the closed-form g²(0) relations, the brute-force
//!   operator oracle, the stream estimators and the decay fits.
//! * [`resolver`] inverts the dominant-channel relation for the emitter number
//!   and builds lookup surfaces.
//! * [`pipeline`] wires everything to configuration files and on-disk formats.
//!
//! Units throughout: times in ns, rates in ns⁻¹, lengths in nm, time tags in ps.
//!
//! The analytic layers are generic over the scalar type. Closed-form g²(0)
//! relations accept any [`Field`] (including exact rationals), matrix code
//! accepts any [`Real`] (`f32`/`f64`). Stochastic simulation and fitting run in
//! `f64`.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod photstat;
pub mod pipeline;
pub mod resolver;
mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

/// Toolkit version recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type EmitterEnsembleF32 = ensemble::EmitterEnsemble<f32>;
pub type EmitterEnsembleF64 = ensemble::EmitterEnsemble<f64>;
pub type CouplingMatrixF32 = ensemble::CouplingMatrix<f32>;
pub type CouplingMatrixF64 = ensemble::CouplingMatrix<f64>;
pub type CollectiveModesF32 = ensemble::CollectiveModes<f32>;
pub type CollectiveModesF64 = ensemble::CollectiveModes<f64>;
