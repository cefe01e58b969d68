//! Compact sketched covariance pooling.
//!
//! Second-order feature pooling sums outer products of local descriptors;
//! square-root normalization of that feature helps downstream classifiers
//! but is expensive to form and to differentiate directly. This crate
//! implements the sketched alternative: random pair sketches (tensor sketch
//! and random Maclaurin) approximate inner products of polynomials of the
//! second-order feature in expectation, and the polynomial matching the
//! square root is obtained from the coupled Newton–Schulz iteration on the
//! Gram matrix — no eigendecomposition anywhere in the forward or backward
//! path.
//!
//! Modules:
//! - [`matrix`], [`eig`]: dense symmetric linear algebra and the
//!   eigendecomposition oracles everything gets verified against;
//! - [`newton_schulz`]: the coupled iteration and square-root weights;
//! - [`fft`], [`sketch`]: radix-2 transform and the two sketch families;
//! - [`pooling`]: the pooling operators and input substitutions;
//! - [`grad`]: reverse-mode derivatives and finite-difference checking;
//! - [`fp32`]: single-precision sketch evaluation for benchmark parity.

pub mod eig;
pub mod error;
pub mod fft;
pub mod fp32;
pub mod grad;
pub mod matrix;
pub mod newton_schulz;
pub mod pooling;
pub mod sketch;

pub use error::{Error, Result};
pub use matrix::{LocalFeatureSet, Matrix, SymmetricMatrix};
