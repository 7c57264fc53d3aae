//! Sharpened logarithmic opinion pools (SLOP) for inference-time alignment.
//!
//! The crate is organised bottom-up:
//!
//! - [`pool`]: exact tilted, tempered-tilted and pooled distributions over a
//!   finite output space, plus KL, entropy and the regularized objective.
//! - [`samplers`]: Best-of-N, Best-of-Poisson, soft Best-of-N and the
//!   pooled soft/hard candidate selectors, with an enumeration oracle for the
//!   exact law of the pooled selector.
//! - [`calibration`]: gradient-ascent weight calibration against gold rewards
//!   and moment-based weight estimators.
//! - [`scoremodel`]: closed-form accuracy analysis for jointly Gaussian and
//!   Cauchy log-posterior-ratio scores.
//! - [`synth`]: synthetic worlds and experiment drivers.
//!
//! All scores are log-scores in nats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod io;
pub mod linalg;
pub mod math;
pub mod pool;
pub mod rng;
pub mod samplers;
pub mod scoremodel;
pub mod synth;

pub use error::{Error, Result};
pub use pool::{DiscreteDistribution, OutputSpace, ScoreMatrix, WeightVector};
pub use rng::RngSeed;
