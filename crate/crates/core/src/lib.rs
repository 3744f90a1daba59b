//! Free-boundary incompressible porous media flow in flattened coordinates.
//!
//! The fluid occupies the region below the graph of `f` (above a bottom `b`
//! in finite depth). The density is a background profile `γ(y)` plus a
//! localized perturbation transported with the flow. Everything is solved
//! on the fixed strip `[0, L) × [z_bot, 0]` obtained by a smoothing change
//! of variables.

pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod flatten;
pub mod harness;
pub mod picard;
pub mod profiles;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
