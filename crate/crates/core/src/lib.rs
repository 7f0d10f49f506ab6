//! Extremal positions of convex bodies.
//!
//! Given an outer body `K` and an inner body `L`, this crate computes
//!
//! * the positive John position: the largest-volume image `PL + z` inside `K`
//!   with `P` symmetric positive-definite,
//! * the family of such positions over all rotations of `L`, its saddle
//!   points and extremes,
//! * the maximal intersection position, where `vol(K ∩ (AL + z))` is maximised
//!   over volume-preserving affine maps,
//!
//! together with the certificates (contact-pair identity decompositions,
//! stationarity of the rotation envelope, first-order boundary integrals)
//! that characterise each of them.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bodies;
pub mod error;
pub mod family;
pub mod linalg;
pub mod maxint;
pub mod pjp;
pub mod report;
pub mod suite;

pub use error::{Error, Result};

/// Dynamic column vector used throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dynamic square or rectangular matrix used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
