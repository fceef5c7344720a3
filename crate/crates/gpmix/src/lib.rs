//! Gaussian-process mixture estimation of conditional and average treatment
//! effects from observational data.
//!
//! The model works on a transformed response variable: each outcome is
//! rescaled by its (known or estimated) propensity so that the conditional
//! mean of the transformed outcome equals the treatment effect surface. That
//! surface gets a linear-kernel GP prior, the propensity-dependent nuisance
//! surface gets a squared-exponential GP prior, and both are integrated out
//! of a two-component Gaussian mixture by a Gibbs sampler. When propensities
//! are unknown, a probit model for treatment assignment is learned jointly
//! through a Metropolis-within-Gibbs step.
//!
//! Entry points:
//! - [`simgen`] generates the two synthetic benchmark designs.
//! - [`sampler_known`] fits the mixture when propensities are recorded.
//! - [`sampler_unknown`] fits the mixture and the probit jointly.
//! - [`estimands`] turns posterior draws into CATE/ATE summaries.
//! - [`cli`] wraps everything as file-to-file commands for the `gpmix` binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimands;
pub mod kernels;
pub mod numerics;
pub mod sampler_known;
pub mod sampler_unknown;
pub mod simgen;
pub mod transform;

pub use error::{Error, Result};
