//! Baseline covariates plus irregular per-marker longitudinal observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Process;

/// Named time-fixed covariates of a subject (exposure included).
pub type Covariates = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub covariates: Covariates,
    /// Entry into the study, on the model's timescale.
    pub entry: f64,
    /// Observations indexed by `Process::index()`.
    pub observations: [Vec<Observation>; 3],
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, covariates: Covariates, entry: f64) -> Self {
        SubjectRecord {
            id: id.into(),
            covariates,
            entry,
            observations: Default::default(),
        }
    }

    pub fn markers(&self, p: Process) -> &[Observation] {
        &self.observations[p.index()]
    }

    pub fn markers_mut(&mut self, p: Process) -> &mut Vec<Observation> {
        &mut self.observations[p.index()]
    }

    pub fn n_obs(&self) -> usize {
        self.observations.iter().map(Vec::len).sum()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.observations
            .iter()
            .flatten()
            .map(|o| o.time)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }

    /// Drops every observation with time strictly after `t` (or at/after `t`
    /// when `inclusive`).
    pub fn truncate_after(&mut self, t: f64, inclusive: bool) {
        for obs in &mut self.observations {
            obs.retain(|o| if inclusive { o.time < t } else { o.time <= t });
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(subjects: Vec<SubjectRecord>) -> Self {
        Dataset { subjects }
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_obs(&self, p: Process) -> usize {
        self.subjects.iter().map(|s| s.markers(p).len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for s in &self.subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate subject id `{}`", s.id)));
            }
            for (name, v) in &s.covariates {
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "subject `{}`: covariate `{name}` is not finite",
                        s.id
                    )));
                }
            }
            for p in Process::ALL {
                for o in s.markers(p) {
                    if !o.time.is_finite() || !o.value.is_finite() {
                        return Err(Error::InvalidData(format!(
                            "subject `{}`: non-finite {p} observation",
                            s.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
