//! Parametric-bootstrap percentile bands for contrast series.

use rayon::prelude::*;

use super::effects::compute_contrasts;
use super::{ContrastSeries, EffectRequest};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{draw_theta, FitResult};
use crate::model::Model;

/// Largest tolerated share of failed draws.
const MAX_FAILED_SHARE: f64 = 0.05;

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Plug-in contrasts at `fit.theta_hat` with percentile bands from `r`
/// draws of `N(theta_hat, vcov)`. Draws whose contrasts cannot be computed
/// are dropped; more than 5% of drops is an error.
pub fn bootstrap_contrasts(
    model: &Model,
    fit: &FitResult,
    request: &EffectRequest,
    data: Option<&Dataset>,
    r: usize,
    seed: u64,
    level: f64,
) -> Result<Vec<ContrastSeries>> {
    if r < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let mut point = compute_contrasts(model, &fit.theta_hat, request, data)?;
    let draws = draw_theta(fit, r, seed)?;
    let results: Vec<Option<Vec<ContrastSeries>>> = draws
        .par_iter()
        .map(|th| compute_contrasts(model, th, request, data).ok())
        .collect();
    let ok: Vec<&Vec<ContrastSeries>> = results.iter().flatten().collect();
    let failed = r - ok.len();
    if failed as f64 > MAX_FAILED_SHARE * r as f64 {
        return Err(Error::BootstrapFailures { failed, total: r });
    }
    let (pl, pu) = ((1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0);
    for (k, series) in point.iter_mut().enumerate() {
        let n_t = series.times.len();
        let mut lo = Vec::with_capacity(n_t);
        let mut hi = Vec::with_capacity(n_t);
        for i in 0..n_t {
            let mut vals: Vec<f64> = ok.iter().map(|s| s[k].estimate[i]).collect();
            vals.sort_by(f64::total_cmp);
            lo.push(percentile(&vals, pl));
            hi.push(percentile(&vals, pu));
        }
        series.ci_lower = Some(lo);
        series.ci_upper = Some(hi);
    }
    Ok(point)
}
