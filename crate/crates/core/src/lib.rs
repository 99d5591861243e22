//! Explicit position-to-pixel machinery for GUI grounding models.
//!
//! * [`rope`]: rotary frequency spectra and per-pair rotations (with backward pass).
//! * [`mrope`]: multi-axis rotary embeddings with sequential or interleaved
//!   frequency-to-axis assignment.
//! * [`ruler`]: patch grids, ruler coordinate tokens, multimodal sequence
//!   assembly and token-overhead analysis.
//! * [`attention`]: a single-head scoring scaffold used to verify that ruler
//!   tokens are retrievable by position.
//! * [`eval`]: coordinate parsing and element-accuracy evaluation.
//! * [`check`]: the seeded property suite behind `ruler check`.
//! * [`cli`]: the `ruler` command-line front end.

pub mod attention;
pub mod check;
pub mod cli;
mod error;
pub mod eval;
pub mod mrope;
pub mod rope;
pub mod ruler;

pub use error::{Error, Result};

/// Version tag carried by every JSON and CSV report.
pub const SCHEMA_VERSION: u32 = 1;
