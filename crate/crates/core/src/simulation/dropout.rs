//! Monotone dropout mechanisms applied to a generated cohort.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::causal::percentile;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Process;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dropout {
    None,
    /// Each subject drops with probability `rate` at a uniform time within
    /// its follow-up.
    Mcar { rate: f64 },
    /// Observation stops after the first outcome above the `q`-quantile of
    /// all generated outcomes.
    Mar { q: f64 },
    /// As `Mar`, but the triggering visit is removed too.
    Mnar { q: f64 },
}

impl Dropout {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Dropout::None => Ok(()),
            Dropout::Mcar { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            Dropout::Mar { q } | Dropout::Mnar { q } if q > 0.0 && q < 1.0 => Ok(()),
            Dropout::Mcar { rate } => Err(Error::InvalidArgument(format!(
                "dropout rate must lie in [0, 1], got {rate}"
            ))),
            Dropout::Mar { q } | Dropout::Mnar { q } => Err(Error::InvalidArgument(format!(
                "dropout quantile must lie in (0, 1), got {q}"
            ))),
        }
    }
}

/// Applies `mechanism` to `data`. Observation values are never modified;
/// only trailing visits are removed.
pub fn apply_dropout(data: &Dataset, mechanism: Dropout, seed: u64) -> Result<Dataset> {
    mechanism.validate()?;
    let mut out = data.clone();
    match mechanism {
        Dropout::None => {}
        Dropout::Mcar { rate } => {
            let mut rng = rng_from(seed);
            for s in &mut out.subjects {
                // Both draws are always taken so the stream does not depend on outcomes.
                let drops = rng.random::<f64>() < rate;
                let u: f64 = rng.random();
                let first = s
                    .observations
                    .iter()
                    .flatten()
                    .map(|o| o.time)
                    .fold(f64::INFINITY, f64::min);
                if let (true, Some(last)) = (drops, s.last_time()) {
                    s.truncate_after(first + u * (last - first), false);
                }
            }
        }
        Dropout::Mar { q } | Dropout::Mnar { q } => {
            let mut ys: Vec<f64> = data
                .subjects
                .iter()
                .flat_map(|s| s.markers(Process::Y).iter().map(|o| o.value))
                .collect();
            if ys.is_empty() {
                return Ok(out);
            }
            ys.sort_by(f64::total_cmp);
            let threshold = percentile(&ys, q);
            let inclusive = matches!(mechanism, Dropout::Mnar { .. });
            for s in &mut out.subjects {
                let trigger = s
                    .markers(Process::Y)
                    .iter()
                    .filter(|o| o.value > threshold)
                    .map(|o| o.time)
                    .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
                if let Some(t) = trigger {
                    s.truncate_after(t, inclusive);
                }
            }
        }
    }
    Ok(out)
}
