//! Numerical verification of the Lipschitz geometry of the multiplication
//! maps `Sⁿ × Sⁿ → Sⁿ` for unit complex numbers, quaternions and octonions,
//! together with a non-homogeneous torus example of a Riemannian submersion
//! that is not the unique Lipschitz minimizer in its homotopy class.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cli;
pub mod error;
pub mod fiber;
pub mod linalg;
pub mod lipmap;
pub mod sphere;
pub mod torus;

pub use error::{Error, Result};
