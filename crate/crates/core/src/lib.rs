//! Simulation and diagnostics for Fleming-Viot type particle systems built
//! on killed diffusions in bounded domains.
//!
//! * [`geometry`] — domains and the distance-to-boundary function.
//! * [`sde`] — diffusion models, the killed Euler-Maruyama step and the
//!   regularity validator.
//! * [`engine`] — the N-particle system and its jump policies.
//! * [`stats`] — empirical measures, distances and replicated sweeps.
//! * [`oracles`] — rejection sampling and spectral references.
//! * [`config`], [`experiment`] — the config-driven experiment runner.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod oracles;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{ConfigIssue, FvError, Result};
