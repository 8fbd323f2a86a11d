//! Heat equations `∂ₜu = Δu + Vu` with singular potentials on uniform grids.
//!
//! The crate builds potentials (including derivative combinations
//! `V = Δf − α|∇f|² − ∂ₜf`), time-steps the Cauchy problem, estimates
//! fundamental solutions as limits along truncation ladders, fits Gaussian
//! envelopes, classifies heat-boundedness by refinement studies, tests
//! positivity and form-boundedness, and evaluates the vortex-stretching
//! quantity `Q` for synthetic incompressible flows.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod kato;
pub mod kernels;
pub mod nse;
pub mod par;
pub mod positivity;
pub mod potentials;
pub mod solver;

pub use error::{Error, Result};
