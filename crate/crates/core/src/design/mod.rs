//! Gradient-constrained design over graded laminates: admissibility,
//! compliance, per-phase gradient constraints, a deterministic optimizer and
//! realization as a fine-scale microstructure.

mod optimize;
mod partition;
mod problem;
mod realize;

pub use optimize::*;
pub use partition::*;
pub use problem::*;
pub use realize::*;
