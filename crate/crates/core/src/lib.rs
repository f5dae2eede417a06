//! Numerical laboratory for subordinate stable processes on the Sierpinski
//! gasket among killing Poissonian obstacles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod gasket;
pub mod graph;
pub mod ids;
pub mod lab;
pub mod linalg;
pub mod obstacles;
pub mod quadrature;
pub mod rng;
pub mod sausage;
pub mod stable;
pub mod stats;

pub use error::{LabError, Result};
