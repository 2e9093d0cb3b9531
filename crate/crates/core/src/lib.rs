//! Continuous-time causal mediation analysis with three correlated latent
//! processes (time-varying confounder, mediator, outcome) observed with error
//! at irregular times.
//!
//! The pipeline is: describe a [`ModelSpec`], compile it into a [`Model`],
//! fit it by maximum likelihood ([`estimation::fit_mle`]), then compute
//! natural and path-specific effect curves with bootstrap bands
//! ([`causal`]). [`simulation`] generates the benchmark scenarios and
//! [`boundary`] provides tests for parameters on the boundary of the space.

pub mod boundary;
pub mod causal;
pub mod data;
pub mod error;
pub mod io;
pub mod estimation;
pub mod model;
pub mod rng;
pub mod simulation;

pub use data::{Covariates, Dataset, Observation, SubjectRecord};
pub use error::{Error, Result};
pub use model::{
    marginal_moments, EffectKind, Influence, LatentAffineBasis, MarginalMoments, Model,
    ModelSpec, ParamLayout, Process, ProcessSpec, RandomEffect, RandomEffectsStructure, Term,
    ThetaVector, TimeFn, TimeGrid, Timescale,
};
