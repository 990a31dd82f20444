//! Bloch-wave homogenization of periodic media at band-gap frequencies.
//!
//! The pipeline: [`medium`] describes G and rho on the unit cell, [`bloch`]
//! solves the plane-wave eigenproblem, [`cell`] builds correctors and effective
//! tensors at Gamma, [`source`] and [`fields`] synthesize exact and homogenized
//! wavefields, and [`convergence`] measures them against a finite-difference
//! reference.

pub mod bloch;
pub mod cell;
pub mod convergence;
pub mod error;
pub mod fields;
pub mod grid;
pub mod linalg;
pub mod medium;
pub mod quadrature;
pub mod source;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
/// Complex scalar used by every field and coefficient vector.
pub use faer::c64;
