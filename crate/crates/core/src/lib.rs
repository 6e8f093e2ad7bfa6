//! Poisson point processes pinned by their first moment, and bridges of
//! compound Poisson processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`point_measure`]: finite point configurations, the first-moment
//!   functional `B(μ)`, factorial pairs and the splitting transform.
//! - [`jump_models`]: jump intensities `ν(dx) = λ f(x) dx`, the reciprocal
//!   characteristic `χ_ν` and numerical bounds on `(f∗f)/f`.
//! - [`path`]: pure-jump càdlàg paths on `[0, 1]`, jump split/merge and the
//!   periodic Ornstein-Uhlenbeck map.
//! - [`samplers`]: forward compound Poisson sampling, the brute-force
//!   ε-rejection bridge oracle and the split/coalesce bridge chain.
//! - [`verify`]: two-sided Monte Carlo estimators for the Mecke-type
//!   identities.
//! - [`domination`]: stochastic dominance of bridge jump counts by
//!   conditioned Poisson laws.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domination;
pub mod error;
pub mod jump_models;
pub mod path;
pub mod point_measure;
pub mod quadrature;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
