//! Pareto-guided policy distillation pipeline.
//!
//! The crate builds a frozen synthetic teacher over a multi-modal observation
//! schema with a hierarchical masked action space, distills lightweight
//! student networks against it, profiles their efficiency analytically and on
//! the host, searches the student design space for the empirical Pareto
//! frontier with a Chamfer-distance stopping rule, and scores candidates with
//! the competition arithmetic.

pub mod dataset;
pub mod error;
pub mod profiler;
pub mod student;
pub mod teacher;
pub mod trainer;
pub mod mat;
pub mod env;
pub mod nn;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
pub use tensor::Tensor;
