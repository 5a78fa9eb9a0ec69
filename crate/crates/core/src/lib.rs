//! Discounted adaptive online convex optimization.
//!
//! The crate provides
//!
//! * parameter-free magnitude learners built on an erfi potential, with
//!   discounting applied through gradient rescaling ([`scalar`]),
//! * a polar-decomposition learner on `R^d` ([`vector`]),
//! * OGD baselines with constant, horizon-adaptive and AdaGrad-style step
//!   sizes ([`baselines`]),
//! * an online conformal prediction wrapper and its coverage metrics
//!   ([`conformal`], [`metrics`]),
//! * synthetic environments and an experiment harness ([`environments`],
//!   [`harness`]).
//!
//! Indexing follows the online protocol: in round `t` the learner predicts,
//! then observes the gradient `g_t` together with the discount `λ_{t-1}`.
//! Schedules are queried with [`DiscountSchedule::lambda`] at index `t - 1`.

#![deny(unsafe_code)]

pub mod baselines;
pub mod conformal;
pub mod environments;
mod error;
pub mod harness;
pub mod metrics;
pub mod schedules;
pub mod scalar;
pub mod special;
pub mod vector;

pub use error::{Error, Result};
pub use schedules::{DiscountSchedule, DiscountedMoments};
pub use scalar::{ScalarLearner, Variant};
pub use vector::VectorLearner;
