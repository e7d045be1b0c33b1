//! Alternating projections between two closed sets, with convergence
//! diagnostics and two structured tight-frame design pipelines.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense matrix type and deterministic SVD / symmetric eigensolvers.
//! * [`projections`]: exact nearest-point maps behind the [`Projector`] trait.
//! * [`engine`]: the alternating projection loop and its per-iteration trace.
//! * [`diagnostics`]: sufficient-decrease, contraction and KL-exponent estimates from a trace.
//! * [`frames`]: tight frames with prescribed column norms and equiangular tight frames.
//! * [`cli`]: config parsing, CSV/JSON serialisation and the `altproj` commands.

pub mod cli;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod frames;
pub mod numerics;
pub mod projections;

pub use error::{Error, Result};
pub use numerics::DenseMatrix;
pub use projections::Projector;
