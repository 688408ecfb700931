//! Permutation-symmetrized variational inference for small Bayesian MLPs.
//!
//! Hidden-unit permutations leave an MLP's function unchanged, so its
//! posterior has many equivalent modes. A unimodal variational posterior
//! cannot cover them. This crate symmetrizes a mean-field Gaussian over the
//! permutation group and trains it through a low-variance entropy bound.
//!
//! The building blocks, bottom up:
//!
//! - [`diffcore`]: reverse-mode autodiff over dense `f64` tensors.
//! - [`weightspace`]: weight layout, the permutation group and its action.
//! - [`models`]: MLP forward passes and likelihoods.
//! - [`variational`]: Gaussian families and mixture targets.
//! - [`symmetrization`]: `q^G`, the `Ĥᴷ` estimator and the symmetrized ELBO.
//! - [`training`]: optimizers and training loops.
//! - [`experiments`]: reproducible experiment runners.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod diffcore;
pub mod error;
pub mod experiments;
pub mod models;
pub mod rng;
pub mod selftest;
pub mod symmetrization;
pub mod training;
pub mod variational;
pub mod weightspace;

pub use error::{Error, Result};
