//! Multi-level reflecting Brownian motion on the half line.
//!
//! The library computes the exact stationary law of a reflecting diffusion
//! whose drift and diffusion scale are piecewise constant on finitely many
//! levels, simulates its paths (reflected Euler–Maruyama and an up/down
//! crossing construction), and checks the stationary identities relating the
//! regulator, boundary local times and level moment generating functions
//! against Monte Carlo output.

pub mod analytic;
pub mod cli;
pub mod diagnostics;
pub mod export;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod sde;

pub use analytic::{StationaryLaw, AnalyticError};
pub use model::{build_model, LevelSpec, ModelError, MultiLevelModel, Stability};

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 271_828;
