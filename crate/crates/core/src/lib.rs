//! Hyperbolic dual feature augmentation on the Poincaré ball.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical
//! machinery:
//!
//! - [`geometry`]: Möbius addition, distance, exponential/logarithmic maps,
//!   conformal factor, transport from the origin and boundary projection.
//! - [`wrapped_normal`]: the wrapped normal distribution, its reparameterized
//!   sampler, density and moment fit.
//! - [`diff`]: a small reverse-mode tensor tape, dense and self-attention
//!   layers, and a fixed-step RK4 integrator.
//! - [`estimator`]: the six gradient-flow networks that refine seen-class
//!   distributions and synthesize unseen ones from class pairs.
//! - [`losses`]: classifier probabilities, finite/Monte-Carlo augmentation
//!   losses, the closed-form upper bound and the hierarchy regularizer.
//! - [`trainer`]: Riemannian inner training and the bi-level meta update.
//! - [`harness`]: synthetic hierarchical data, episodic evaluation and a
//!   replay-buffer miniature.
//! - [`selfcheck`]: randomized identity suites used by the CLI.
//!
//! File formats, checkpoints and the command line live in the `hdfa` crate.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod diff;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod losses;
mod math;
pub mod rng;
pub mod selfcheck;
pub mod trainer;
pub mod wrapped_normal;

pub use error::{Error, Result};
pub use geometry::{BallPoint, Curvature, TangentVector};
