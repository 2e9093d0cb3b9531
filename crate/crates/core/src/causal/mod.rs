//! Counterfactual means under exposure regimes, natural and path-specific
//! effects, Monte-Carlo g-formula evaluation and parametric-bootstrap bands.
//!
//! Identification rests on untestable assumptions that are not checked at
//! run time: no unmeasured exposure-outcome, exposure-mediator or
//! mediator-outcome confounding given the baseline covariates, and (for
//! natural effects) no confounder of the mediator-outcome relation affected
//! by the exposure. Path-specific effects relax the last one by modelling
//! that confounder as its own process.
//!
//! Counterfactual means are of the latent outcome; measurement error has
//! mean zero and does not enter the contrasts.

mod bootstrap;
mod counterfactual;
mod effects;

use serde::{Deserialize, Serialize};

use crate::data::Covariates;
use crate::error::{Error, Result};

pub use bootstrap::{bootstrap_contrasts, percentile};
pub use counterfactual::{counterfactual_mean, mc_counterfactual_mean, McEstimate};
pub(crate) use counterfactual::{contrast_grid, regime_profiles, Welford};
pub(crate) use effects::{check_decomposition, contrasts, regimes};
pub use effects::{
    compute_contrasts, find, marginal_contrasts, natural_effects, path_specific_effects, regime_means,
};

/// Exposure values plugged into each process equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureRegime {
    /// Outcome equation, including influence modifiers on edges into Y.
    pub x_y: f64,
    /// Confounder equation; `None` when the model has no confounder.
    pub x_l: Option<f64>,
    /// Mediator equation, including modifiers on the L -> M edge.
    pub x_m: f64,
}

impl ExposureRegime {
    /// Natural-effect regime `m(x_y, x_m)`.
    pub fn natural(x_y: f64, x_m: f64) -> Self {
        ExposureRegime { x_y, x_l: None, x_m }
    }

    /// Path-specific regime `m(x_y, x_l, x_m)`.
    pub fn path(x_y: f64, x_l: f64, x_m: f64) -> Self {
        ExposureRegime {
            x_y,
            x_l: Some(x_l),
            x_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "TE")]
    Te,
    #[serde(rename = "NDE")]
    Nde,
    #[serde(rename = "NIE")]
    Nie,
    #[serde(rename = "PSE_XY")]
    PseXy,
    #[serde(rename = "PSE_XMY")]
    PseXmy,
    #[serde(rename = "PSE_XLMY")]
    PseXlmy,
}

impl Effect {
    pub const NATURAL: [Effect; 3] = [Effect::Te, Effect::Nde, Effect::Nie];
    pub const PATH_SPECIFIC: [Effect; 3] = [Effect::PseXy, Effect::PseXmy, Effect::PseXlmy];

    pub fn label(self) -> &'static str {
        match self {
            Effect::Te => "TE",
            Effect::Nde => "NDE",
            Effect::Nie => "NIE",
            Effect::PseXy => "PSE_XY",
            Effect::PseXmy => "PSE_XMY",
            Effect::PseXlmy => "PSE_XLMY",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            Effect::Te,
            Effect::Nde,
            Effect::Nie,
            Effect::PseXy,
            Effect::PseXmy,
            Effect::PseXlmy,
        ]
        .into_iter()
        .find(|e| e.label() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown effect `{s}`")))
    }
}

impl std::fmt::Display for Effect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which decomposition to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decomposition {
    /// TE, NDE, NIE; requires a model without confounder.
    Natural,
    /// PSE_XY, PSE_XMY, PSE_XLMY; requires the confounder.
    PathSpecific,
}

impl Decomposition {
    pub fn effects(self) -> [Effect; 3] {
        match self {
            Decomposition::Natural => Effect::NATURAL,
            Decomposition::PathSpecific => Effect::PATH_SPECIFIC,
        }
    }
}

/// Contrast request: effects, exposure levels, times and the covariate
/// population (`profile = None` averages over the dataset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectRequest {
    pub decomposition: Decomposition,
    #[serde(default = "one")]
    pub x: f64,
    #[serde(default)]
    pub x_prime: f64,
    pub times: Vec<f64>,
    #[serde(default)]
    pub profile: Option<Covariates>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    Conditional(Covariates),
    Marginal,
}

/// A causal contrast on a time grid with optional bootstrap bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSeries {
    pub effect: Effect,
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    pub ci_lower: Option<Vec<f64>>,
    pub ci_upper: Option<Vec<f64>>,
    pub population: Population,
}

impl ContrastSeries {
    pub fn new(effect: Effect, times: Vec<f64>, estimate: Vec<f64>, population: Population) -> Self {
        debug_assert_eq!(times.len(), estimate.len());
        ContrastSeries {
            effect,
            times,
            estimate,
            ci_lower: None,
            ci_upper: None,
            population,
        }
    }
}
