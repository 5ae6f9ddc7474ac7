//! Battle–Lemarié spline wavelets of arbitrary order, their compactly
//! supported localizations, tensor-product systems, and weighted
//! Besov/Triebel–Lizorkin sequence norms.

pub mod battle_lemarie;
pub mod bspline;
pub mod error;
pub mod euler_frobenius;
pub mod localized;
pub mod poly;
pub mod quadrature;
pub mod selftest;
pub mod seqspace;
pub mod tensor;
pub mod transform;
pub mod weights;

pub use error::{Error, Result};
