//! Fundamental limits of successive-refinement lossy source coding.

// Index loops mirror the matrix notation; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersion;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod normal;
pub mod rd;
pub mod special;
pub mod spectrum;
pub mod sr;

pub use error::{Error, Result};
pub use model::{
    entropy, validate_instance, DistortionMatrix, Pmf, RatePoint, RawInstance, SourceInstance,
};
pub use rd::{rd_solve, RdSolution};
