//! Deterministic optimal control and Lagrangian mean field games on metric
//! networks.
//!
//! The crate provides:
//!
//! * metric networks (junctions and general graphs) with geodesic distance,
//! * running/terminal cost models with coercivity and convexity data,
//! * the convex velocity envelope at a vertex and its identity checks,
//! * numerical Legendre transforms (edge, one-sided and vertex Hamiltonians),
//! * a backward semi-Lagrangian solver for the value function together with
//!   dynamic-programming and viscosity residual checks,
//! * optimal trajectory synthesis with Euler-Lagrange and transversality
//!   residuals,
//! * particle trajectory measures, Wasserstein-1 on the network, fictitious
//!   play for relaxed equilibria and mild-solution diagnostics,
//! * vertex flux estimation and weak continuity-equation checks.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm` feature
//! when building without `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("netmfg-core requires either the `std` or the `libm` feature");

pub(crate) mod math;

pub mod continuity;
pub mod cost;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hamiltonian;
pub mod measure;
pub mod mfg;
pub mod simplex;
pub mod solver;
pub mod trajectory;

pub use error::CoreError;
pub use geometry::{EdgeId, NetPoint, Network, VertexId};
pub use grid::{SpaceTimeGrid, ValueField};

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, CoreError>;
