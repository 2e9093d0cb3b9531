//! Benchmark scenarios: cohort generation, dropout mechanisms, the
//! counterfactual truth oracle and the replication harness.

mod dropout;
mod generate;
mod oracle;
mod replicate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causal::Decomposition;
use crate::error::{Error, Result};
use crate::model::{Influence, Model, ModelSpec, Process, ProcessSpec, ThetaVector, Timescale};

pub use dropout::{apply_dropout, Dropout};
pub use generate::{generate, generate_scenario1, generate_scenario2};
pub use oracle::{true_effects_oracle, TruthHandle};
pub use replicate::{
    aggregate, relative_bias, replicate_study, run_replicate, EstimatorOptions, InitStrategy,
    ReplicateOutcome, ReplicationReport, ReportRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Time since entry, annual visits over five years.
    #[serde(rename = "1")]
    One,
    /// Age timescale with staggered entry and a baseline confounder.
    #[serde(rename = "2")]
    Two,
}

/// Law of the entry time on the model timescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryLaw {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

/// Planned visits relative to entry, with Gaussian jitter on every visit
/// after the first. `marker_offsets` restricts a marker to a subset of the
/// planned offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisitSchedule {
    pub planned: Vec<f64>,
    pub jitter_sd: f64,
    #[serde(default)]
    pub marker_offsets: BTreeMap<Process, Vec<f64>>,
}

/// A fully specified simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub family: Family,
    pub n: usize,
    /// Euler step used for generation and by the working model.
    pub delta: f64,
    pub with_confounder: bool,
    /// True parameter values by name; unnamed parameters are 0.
    pub theta: BTreeMap<String, f64>,
    pub entry: EntryLaw,
    pub visits: VisitSchedule,
    pub dropout: Dropout,
    pub exposure_prob: f64,
    /// Probability of the binary baseline confounder `C`, if any.
    #[serde(default)]
    pub confounder_prob: Option<f64>,
    pub contrast_times: Vec<f64>,
    /// Size of the counterfactual population used for the truth.
    pub truth_population: usize,
}

const SCENARIO1_VISITS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
const SCENARIO2_VISITS: [f64; 9] = [0.0, 2.0, 4.0, 7.0, 10.0, 13.0, 15.0, 17.0, 20.0];

fn named(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// Generation parameters of scenario 1 with the time-varying confounder.
pub fn scenario1_theta_with_l() -> BTreeMap<String, f64> {
    named(&[
        ("beta.L.intercept", 0.5),
        ("beta.L.X", 1.8),
        ("beta.M.intercept", 0.2),
        ("beta.M.X", 0.9),
        ("beta.Y.intercept", 0.6),
        ("beta.Y.X", 1.5),
        ("gamma.L.intercept", 0.1),
        ("gamma.L.X", 0.2),
        ("gamma.M.intercept", 0.2),
        ("gamma.M.X", 0.8),
        ("gamma.Y.intercept", 0.8),
        ("gamma.Y.X", 0.4),
        ("chol.1", 1.0),
        ("chol.2", 0.2),
        ("chol.3", 0.1),
        ("chol.4", 0.0),
        ("chol.7", 2.0),
        ("chol.8", 0.1),
        ("chol.10", 0.0),
        ("chol.12", 3.0),
        ("chol.15", 0.0),
        ("chol.16", 1.0),
        ("chol.19", 2.0),
        ("chol.21", 3.0),
        ("alpha.ML.0", 0.3),
        ("alpha.YL.0", 0.4),
        ("alpha.YM.0", 0.5),
        ("sigma.L", 0.3),
        ("sigma.M", 0.6),
        ("sigma.Y", 0.2),
    ])
}

/// Generation parameters of scenario 1 without the confounder. The
/// published `chol6` (the outcome random-intercept diagonal) sits at
/// position 5 of the two-process enumeration.
pub fn scenario1_theta_without_l() -> BTreeMap<String, f64> {
    named(&[
        ("beta.M.intercept", 0.5),
        ("beta.M.X", 1.8),
        ("beta.Y.intercept", 0.6),
        ("beta.Y.X", 1.5),
        ("gamma.M.intercept", 0.1),
        ("gamma.M.X", 0.2),
        ("gamma.Y.intercept", 0.8),
        ("gamma.Y.X", 0.4),
        ("chol.1", 1.0),
        ("chol.2", 0.1),
        ("chol.3", 0.0),
        ("chol.5", 3.0),
        ("chol.7", 0.0),
        ("chol.8", 1.0),
        ("chol.10", 2.0),
        ("alpha.YM.0", 0.4),
        ("sigma.M", 0.3),
        ("sigma.Y", 0.2),
    ])
}

/// Generation parameters of scenario 2 (design `intercept, X, C`).
pub fn scenario2_theta() -> BTreeMap<String, f64> {
    named(&[
        ("beta.L.intercept", -0.20),
        ("beta.L.X", 0.09),
        ("beta.L.C", 0.01),
        ("beta.M.intercept", 6.12),
        ("beta.M.X", -0.10),
        ("beta.M.C", -0.07),
        ("beta.Y.intercept", 0.53),
        ("beta.Y.X", -0.06),
        ("beta.Y.C", -0.00),
        ("gamma.L.intercept", -0.16),
        ("gamma.L.X", -0.01),
        ("gamma.L.C", 0.00),
        ("gamma.M.intercept", -0.15),
        ("gamma.M.X", 0.02),
        ("gamma.M.C", 0.00),
        ("gamma.Y.intercept", 0.10),
        ("gamma.Y.X", -0.01),
        ("gamma.Y.C", -0.00),
        ("chol.1", 0.86),
        ("chol.2", 0.04),
        ("chol.3", 0.10),
        ("chol.4", -0.00),
        ("chol.7", 1.04),
        ("chol.8", 0.00),
        ("chol.10", 0.06),
        ("chol.12", 0.80),
        ("chol.15", -0.02),
        ("chol.16", 0.03),
        ("chol.19", -0.08),
        ("chol.21", -0.04),
        ("alpha.ML.0", -0.03),
        ("alpha.YL.0", 0.01),
        ("alpha.YM.0", -0.01),
        ("sigma.L", 0.22),
        ("sigma.M", 0.48),
        ("sigma.Y", -0.51),
    ])
}

impl ScenarioConfig {
    /// Preset for scenario `id` in {1A..1E, 2A..2D}. `with_confounder` only
    /// matters for family 1 (family 2 always has the confounder process).
    pub fn preset(id: &str, with_confounder: bool) -> Result<Self> {
        let family = match id.chars().next() {
            Some('1') => Family::One,
            Some('2') => Family::Two,
            _ => return Err(Error::InvalidArgument(format!("unknown scenario `{id}`"))),
        };
        let mut cfg = match family {
            Family::One => ScenarioConfig {
                id: id.to_string(),
                family,
                n: 500,
                delta: 0.1,
                with_confounder,
                theta: if with_confounder {
                    scenario1_theta_with_l()
                } else {
                    scenario1_theta_without_l()
                },
                entry: EntryLaw::Fixed(0.0),
                visits: VisitSchedule {
                    planned: SCENARIO1_VISITS.to_vec(),
                    jitter_sd: 0.05,
                    marker_offsets: BTreeMap::new(),
                },
                dropout: Dropout::Mcar { rate: 0.1 },
                exposure_prob: 0.6,
                confounder_prob: None,
                contrast_times: vec![1.0, 2.0, 3.0, 4.0, 5.0],
                truth_population: 100_000,
            },
            Family::Two => ScenarioConfig {
                id: id.to_string(),
                family,
                n: 500,
                delta: 1.0,
                with_confounder: true,
                theta: scenario2_theta(),
                entry: EntryLaw::Uniform { lo: 65.0, hi: 75.0 },
                visits: VisitSchedule {
                    planned: SCENARIO2_VISITS.to_vec(),
                    jitter_sd: 0.5,
                    marker_offsets: BTreeMap::new(),
                },
                dropout: Dropout::Mcar { rate: 0.1 },
                exposure_prob: 0.6,
                confounder_prob: Some(0.4),
                contrast_times: vec![65.0, 70.0, 75.0, 80.0, 85.0],
                truth_population: 100_000,
            },
        };
        match id {
            "1A" | "2A" => {}
            "1B" => cfg.delta = 0.05,
            "1C" => cfg.n = 250,
            "1D" => cfg.dropout = Dropout::Mcar { rate: 0.2 },
            "1E" => cfg.dropout = Dropout::None,
            "2B" => {
                cfg.dropout = Dropout::None;
                for p in [Process::L, Process::M] {
                    cfg.visits.marker_offsets.insert(p, vec![0.0, 4.0, 10.0]);
                }
            }
            "2C" => cfg.dropout = Dropout::Mar { q: 0.75 },
            "2D" => cfg.dropout = Dropout::Mnar { q: 0.75 },
            other => return Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 {
            return bad("scenario n must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("scenario delta must be > 0, got {}", self.delta));
        }
        if !(0.0..=1.0).contains(&self.exposure_prob) {
            return bad("exposure_prob must lie in [0, 1]".into());
        }
        if let Some(p) = self.confounder_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("confounder_prob must lie in [0, 1]".into());
            }
        }
        if self.family == Family::Two && !self.with_confounder {
            return bad("family 2 scenarios always include the confounder process".into());
        }
        if let EntryLaw::Uniform { lo, hi } = self.entry {
            if !(lo <= hi) {
                return bad("entry law needs lo <= hi".into());
            }
        }
        if self.visits.planned.is_empty() || self.visits.planned.windows(2).any(|w| w[0] >= w[1]) {
            return bad("planned visits must be non-empty and strictly increasing".into());
        }
        if !(self.visits.jitter_sd >= 0.0) {
            return bad("jitter_sd must be >= 0".into());
        }
        for (p, offs) in &self.visits.marker_offsets {
            if offs.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("marker offsets of {p} must be strictly increasing"));
            }
        }
        self.dropout.validate()?;
        if self.truth_population < 1000 {
            return bad("truth_population must be >= 1000".into());
        }
        if self.contrast_times.is_empty() {
            return bad("contrast_times must be non-empty".into());
        }
        Ok(())
    }

    /// Baseline covariate names besides the exposure.
    pub fn confounders(&self) -> Vec<&'static str> {
        if self.confounder_prob.is_some() {
            vec!["C"]
        } else {
            Vec::new()
        }
    }

    /// Working model: the generation model itself.
    pub fn model_spec(&self) -> ModelSpec {
        let mut covs = vec!["X"];
        covs.extend(self.confounders());
        let mut processes = BTreeMap::new();
        if self.with_confounder {
            processes.insert(Process::L, ProcessSpec::simple(&covs, true));
        }
        processes.insert(Process::M, ProcessSpec::simple(&covs, true));
        processes.insert(Process::Y, ProcessSpec::simple(&covs, true));
        let mut influences = vec![Influence::new(Process::M, Process::Y)];
        if self.with_confounder {
            influences.push(Influence::new(Process::L, Process::M));
            influences.push(Influence::new(Process::L, Process::Y));
        }
        let (timescale, origin) = match self.family {
            Family::One => (Timescale::TimeInStudy, 0.0),
            Family::Two => (Timescale::Age, 65.0),
        };
        ModelSpec {
            exposure: "X".into(),
            has_confounder: self.with_confounder,
            processes,
            influences,
            delta: self.delta,
            timescale,
            origin,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.model_spec())
    }

    pub fn theta_true(&self, model: &Model) -> Result<ThetaVector> {
        model.layout().from_named(&self.theta)
    }

    pub fn decomposition(&self) -> Decomposition {
        if self.with_confounder {
            Decomposition::PathSpecific
        } else {
            Decomposition::Natural
        }
    }

    /// Markers observed at planned offset `offset`.
    pub(crate) fn markers_at(&self, model: &Model, offset: f64) -> Vec<Process> {
        model
            .processes()
            .filter(|p| match self.visits.marker_offsets.get(p) {
                None => true,
                Some(offs) => offs.iter().any(|o| (o - offset).abs() < 1e-9),
            })
            .collect()
    }

    /// Names that must be present in `theta`.
    pub fn check_theta_names(&self) -> Result<()> {
        let model = self.model()?;
        let known: BTreeSet<&str> = model.layout().names().iter().map(String::as_str).collect();
        for k in self.theta.keys() {
            if !known.contains(k.as_str()) {
                return Err(Error::UnknownParameter(k.clone()));
            }
        }
        Ok(())
    }
}
