//! Per-phase gradient statistics of fine-scale solutions and the studies
//! comparing them with homogenized predictions.

mod stats;
mod study;

pub use stats::*;
pub use study::*;
