//! Bochner-Riesz summation on compact simply connected semisimple Lie groups.
//!
//! The crate is organised bottom-up:
//!
//! - [`rootsys`] builds the root datum, the Killing-normalised metric on the
//!   maximal torus, the Weyl group and the lattices of a group given by its
//!   Dynkin type.
//! - [`weyl`] evaluates the Weyl denominator, characters and dimensions and
//!   integrates central functions with the Weyl integration formula.
//! - [`kernels`] holds radial multipliers, Bessel utilities and the central
//!   kernels `Σ φ(|λ+ρ|/R) d_λ χ_λ`, both as exact weight sums and through
//!   Poisson summation.
//! - [`gpoints`] realises group elements as matrices, samples Haar measure and
//!   maps elements to their conjugacy class in the fundamental alcove.
//! - [`diverge`] runs the empirical-measure divergence machinery.
//! - [`localize`] exhibits the localization phenomena.
//! - [`cli`] hosts configuration, reports and the batch commands.

pub mod cli;
pub mod diverge;
pub mod error;
pub mod gpoints;
pub mod kernels;
pub mod localize;
pub mod numerics;
pub mod rootsys;
pub mod weyl;

pub use error::{Error, Result};
pub use rootsys::{GroupSpec, RootSystem};
