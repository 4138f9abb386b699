//! Numerical homogenization toolkit for two-dimensional periodic and graded
//! composites: cell problems, effective tensors, per-phase gradient bounds,
//! convergence studies, and gradient-constrained laminate design.

pub mod analysis;
pub mod design;
pub mod error;
pub mod grid;
pub mod homogenize;
pub mod io;
pub mod microstructure;
pub mod pde;

pub use error::{Error, Result};
