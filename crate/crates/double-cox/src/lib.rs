//! Survival models with covariate effects on both the scale and the shape of
//! the baseline hazard, tied together within clusters by a shared gamma
//! frailty.
//!
//! The crate covers the full workflow:
//!
//! * [`model`]: Weibull and Gompertz hazards with separate Cox-type terms on
//!   scale and shape, plus conditional and marginal survival functions.
//! * [`likelihood`]: the closed-form marginal log-likelihood obtained by
//!   integrating the gamma frailty out of each cluster.
//! * [`estimation`]: maximum likelihood fitting with boundary handling for
//!   the frailty variance, and finite-difference observed information.
//! * [`intervals`]: standard-error intervals (including the boundary mixture
//!   law for the frailty variance) and profile-likelihood intervals.
//! * [`simulation`]: clustered survival data generation with censoring
//!   calibrated to a target rate by Monte Carlo.
//! * [`study`]: replicated simulation studies reporting bias and coverage.

pub mod error;
pub mod estimation;
pub mod intervals;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod seeding;
pub mod simulation;
pub mod special;
pub mod study;

pub use error::{Error, Result};
pub use model::{Family, ModelSpec, ParameterVector, SubjectRecord};
