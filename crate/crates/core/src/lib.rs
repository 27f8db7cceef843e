//! Hypoelliptic heat kernels on the Engel group (growth vector (2,3,4)) and
//! the Cartan group (growth vector (2,3,5)).
//!
//! The kernel is assembled from the group Fourier transform: on each
//! generic irreducible representation the hypoelliptic Laplacian becomes a
//! one-dimensional Schrodinger operator with quartic potential, whose heat
//! kernel is computed spectrally ([`propagator`]) and integrated over the
//! dual ([`kernel`]). An independent Monte Carlo simulation of the
//! diffusion ([`diffusion`]) serves as a cross-check.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod group;
pub mod interp;
pub mod kernel;
pub mod propagator;
pub mod quadrature;
pub mod representation;
pub mod tridiag;
pub mod validation;

mod par;

pub use error::{Error, Result};
pub use group::{AlgebraVector, GroupPoint, GroupTag, TangentVector, UnipotentMatrix};
pub use representation::{DualPoint, QuarticParams, WaveFunction};
