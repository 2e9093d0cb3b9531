//! JSON run configuration shared by the command-line subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::read_to_string;
use crate::causal::EffectRequest;
use crate::error::{Error, Result};
use crate::estimation::{FitOptions, OptimOptions};
use crate::model::ModelSpec;
use crate::simulation::{Dropout, EstimatorOptions, InitStrategy, ScenarioConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Working model for real data. Simulation commands derive it from the
    /// scenario when absent.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub scenario: Option<ScenarioBlock>,
    #[serde(default)]
    pub estimator: EstimatorBlock,
    #[serde(default)]
    pub effects: Option<EffectRequest>,
    #[serde(default)]
    pub bootstrap: BootstrapBlock,
    #[serde(default)]
    pub replicate: ReplicateBlock,
}

/// A published scenario preset with optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub preset: String,
    #[serde(default)]
    pub with_confounder: bool,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub dropout: Option<Dropout>,
    #[serde(default)]
    pub jitter_sd: Option<f64>,
    #[serde(default)]
    pub truth_population: Option<usize>,
    #[serde(default)]
    pub contrast_times: Option<Vec<f64>>,
    /// Replaces individual generating parameters by name.
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "default_init")]
    pub init: InitStrategy,
    /// Starting values by name, applied on top of `init`.
    #[serde(default)]
    pub init_values: BTreeMap<String, f64>,
}

fn default_init() -> InitStrategy {
    InitStrategy::Default
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        EstimatorBlock {
            rel_tol: None,
            grad_tol: None,
            max_iter: None,
            init: InitStrategy::Default,
            init_values: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapBlock {
    /// Number of parameter draws; 0 disables the bands.
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_r() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapBlock {
    fn default() -> Self {
        BootstrapBlock {
            r: default_r(),
            seed: 0,
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateBlock {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    100
}

impl Default for ReplicateBlock {
    fn default() -> Self {
        ReplicateBlock { k: default_k(), seed: 0 }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bootstrap level must lie in (0, 1), got {}",
                self.bootstrap.level
            )));
        }
        if self.replicate.k == 0 {
            return Err(Error::InvalidArgument("replicate k must be >= 1".into()));
        }
        if let Some(s) = &self.scenario {
            s.build()?;
        }
        Ok(())
    }

    /// The scenario after applying overrides, if one is configured.
    pub fn scenario_config(&self) -> Result<Option<ScenarioConfig>> {
        self.scenario.as_ref().map(ScenarioBlock::build).transpose()
    }

    /// Explicit model, else the scenario's working model.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        match self.scenario_config()? {
            Some(s) => Ok(s.model_spec()),
            None => Err(Error::InvalidSpec("config needs a `model` or a `scenario` block".into())),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        let d = OptimOptions::default();
        FitOptions {
            optim: OptimOptions {
                rel_tol: self.estimator.rel_tol.unwrap_or(d.rel_tol),
                grad_tol: self.estimator.grad_tol.unwrap_or(d.grad_tol),
                max_iter: self.estimator.max_iter.unwrap_or(d.max_iter),
            },
            ..FitOptions::default()
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            fit: self.fit_options(),
            init: self.estimator.init,
            bootstrap_r: self.bootstrap.r,
            level: self.bootstrap.level,
        }
    }
}

impl ScenarioBlock {
    pub fn build(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::preset(&self.preset, self.with_confounder)?;
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(d) = self.dropout {
            cfg.dropout = d;
        }
        if let Some(j) = self.jitter_sd {
            cfg.visits.jitter_sd = j;
        }
        if let Some(p) = self.truth_population {
            cfg.truth_population = p;
        }
        if let Some(t) = &self.contrast_times {
            cfg.contrast_times = t.clone();
        }
        cfg.theta.extend(self.theta.iter().map(|(k, v)| (k.clone(), *v)));
        cfg.validate()?;
        cfg.check_theta_names()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::from_json(
            r#"{"scenario": {"preset": "1C", "n": 40, "dropout": {"kind": "none"}, "theta": {"sigma.Y": 0.5}},
                "estimator": {"max_iter": 7}, "bootstrap": {"r": 0}}"#,
        )
        .unwrap();
        let s = c.scenario_config().unwrap().unwrap();
        assert_eq!(s.n, 40);
        assert_eq!(s.dropout, Dropout::None);
        assert_eq!(s.theta["sigma.Y"], 0.5);
        assert_eq!(c.fit_options().optim.max_iter, 7);
        assert_eq!(c.fit_options().optim.rel_tol, OptimOptions::default().rel_tol);
        assert_eq!(c.estimator_options().bootstrap_r, 0);
        assert_eq!(c.bootstrap.level, 0.95);
        assert!(c.model_spec().unwrap().processes.len() == 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::from_json(r#"{"estimator": {"max_iters": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("max_iters"), "{e}");
        let e = RunConfig::from_json(r#"{"scenario": {"preset": "1A", "theta": {"nope": 1}}}"#).unwrap_err();
        assert!(matches!(e, Error::UnknownParameter(_)));
        assert!(RunConfig::from_json(r#"{"scenario": {"preset": "9Z"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bootstrap": {"level": 1.5}}"#).is_err());
    }

    #[test]
    fn model_is_required_somewhere() {
        assert!(matches!(RunConfig::default().model_spec(), Err(Error::InvalidSpec(_))));
    }
}
