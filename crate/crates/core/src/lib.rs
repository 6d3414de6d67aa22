//! Random-feature (extreme learning machine) collocation for linear and
//! nonlinear PDEs on general 2D and space-time domains.
//!
//! Three ways of handling boundary conditions are provided:
//!
//! * `lse`: boundary collocation rows act as equality constraints, eliminated
//!   through the SVD null space of the boundary matrix;
//! * `pielm`: boundary rows are appended to the interior system with a
//!   penalty weight;
//! * `xtfc`: each feature is corrected by a Coons-patch interpolant of its own
//!   boundary trace, so the boundary data hold by construction (rectangles
//!   only).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate blas_src;

pub mod assembly;
pub mod error;
pub mod features;
pub mod field;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod problems;
pub mod seed;
pub mod solvers;
pub mod xtfc;

pub use error::{Error, Result};
