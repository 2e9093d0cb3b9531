//! Natural and path-specific contrasts, conditional or averaged over the
//! empirical covariate distribution.

use std::collections::HashMap;

use super::counterfactual::{contrast_grid, counterfactual_mean_slots};
use super::{ContrastSeries, Decomposition, Effect, EffectRequest, ExposureRegime, Population};
use crate::data::{Covariates, Dataset};
use crate::error::{Error, Result};
use crate::model::{Model, Process, ThetaVector};

/// Regimes needed by a decomposition, in a fixed order.
pub(crate) fn regimes(decomposition: Decomposition, x: f64, xp: f64) -> Vec<ExposureRegime> {
    match decomposition {
        // m(x,x), m(x,x'), m(x',x')
        Decomposition::Natural => vec![
            ExposureRegime::natural(x, x),
            ExposureRegime::natural(x, xp),
            ExposureRegime::natural(xp, xp),
        ],
        // m(x,x,x), m(x,x',x), m(x,x',x'), m(x',x',x')
        Decomposition::PathSpecific => vec![
            ExposureRegime::path(x, x, x),
            ExposureRegime::path(x, xp, x),
            ExposureRegime::path(x, xp, xp),
            ExposureRegime::path(xp, xp, xp),
        ],
    }
}

/// Contrasts from the regime means returned by [`regimes`].
pub(crate) fn contrasts(decomposition: Decomposition, means: &[Vec<f64>]) -> [Vec<f64>; 3] {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    match decomposition {
        Decomposition::Natural => {
            let (xx, xxp, xpxp) = (&means[0], &means[1], &means[2]);
            [diff(xx, xpxp), diff(xxp, xpxp), diff(xx, xxp)]
        }
        Decomposition::PathSpecific => {
            let (xxx, xxpx, xxpxp, xpxpxp) = (&means[0], &means[1], &means[2], &means[3]);
            [diff(xxpxp, xpxpxp), diff(xxpx, xxpxp), diff(xxx, xxpx)]
        }
    }
}

pub(crate) fn check_decomposition(model: &Model, decomposition: Decomposition) -> Result<()> {
    match (decomposition, model.has(Process::L)) {
        (Decomposition::Natural, true) => Err(Error::InvalidArgument(
            "natural effects are not identified with an exposure-induced confounder; \
             use path-specific effects"
                .into(),
        )),
        (Decomposition::PathSpecific, false) => Err(Error::InvalidArgument(
            "path-specific effects need the confounder process".into(),
        )),
        _ => Ok(()),
    }
}

/// Counterfactual outcome means for every regime of a decomposition.
pub fn regime_means(
    model: &Model,
    theta: &ThetaVector,
    decomposition: Decomposition,
    profile: &Covariates,
    times: &[f64],
    x: f64,
    x_prime: f64,
) -> Result<Vec<(ExposureRegime, Vec<f64>)>> {
    let base = model.profile(profile, false)?;
    let (grid, nodes) = contrast_grid(model, times)?;
    regimes(decomposition, x, x_prime)
        .into_iter()
        .map(|r| Ok((r, counterfactual_mean_slots(model, theta, &base, &r, grid, &nodes)?)))
        .collect()
}

fn conditional_slots(
    model: &Model,
    theta: &ThetaVector,
    decomposition: Decomposition,
    base: &[f64],
    times: &[f64],
    x: f64,
    x_prime: f64,
) -> Result<[Vec<f64>; 3]> {
    let (grid, nodes) = contrast_grid(model, times)?;
    let means = regimes(decomposition, x, x_prime)
        .iter()
        .map(|r| counterfactual_mean_slots(model, theta, base, r, grid, &nodes))
        .collect::<Result<Vec<_>>>()?;
    Ok(contrasts(decomposition, &means))
}

fn series(
    decomposition: Decomposition,
    values: [Vec<f64>; 3],
    times: &[f64],
    population: Population,
) -> Vec<ContrastSeries> {
    decomposition
        .effects()
        .into_iter()
        .zip(values)
        .map(|(e, v)| ContrastSeries::new(e, times.to_vec(), v, population.clone()))
        .collect()
}

/// TE, NDE and NIE for a model without confounder.
pub fn natural_effects(
    model: &Model,
    theta: &ThetaVector,
    profile: &Covariates,
    times: &[f64],
    x: f64,
    x_prime: f64,
) -> Result<Vec<ContrastSeries>> {
    check_decomposition(model, Decomposition::Natural)?;
    let base = model.profile(profile, false)?;
    let v = conditional_slots(model, theta, Decomposition::Natural, &base, times, x, x_prime)?;
    Ok(series(Decomposition::Natural, v, times, Population::Conditional(profile.clone())))
}

/// PSE through the direct path, through M only, and through L.
pub fn path_specific_effects(
    model: &Model,
    theta: &ThetaVector,
    profile: &Covariates,
    times: &[f64],
    x: f64,
    x_prime: f64,
) -> Result<Vec<ContrastSeries>> {
    check_decomposition(model, Decomposition::PathSpecific)?;
    let base = model.profile(profile, false)?;
    let v = conditional_slots(model, theta, Decomposition::PathSpecific, &base, times, x, x_prime)?;
    Ok(series(
        Decomposition::PathSpecific,
        v,
        times,
        Population::Conditional(profile.clone()),
    ))
}

/// Contrasts averaged over the baseline covariates of `data`.
pub fn marginal_contrasts(
    model: &Model,
    theta: &ThetaVector,
    data: &Dataset,
    decomposition: Decomposition,
    times: &[f64],
    x: f64,
    x_prime: f64,
) -> Result<Vec<ContrastSeries>> {
    check_decomposition(model, decomposition)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("marginal contrasts need a non-empty dataset".into()));
    }
    let xs = model.exposure_slot();
    let mut groups: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for s in &data.subjects {
        let mut slots = model.profile(&s.covariates, false)?;
        slots[xs] = 0.0;
        let key: Vec<u64> = slots.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&g) => groups[g].1 += 1,
            None => {
                index.insert(key, groups.len());
                groups.push((slots, 1));
            }
        }
    }
    let n = data.len() as f64;
    let mut acc: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; times.len()]);
    for (slots, count) in &groups {
        let w = *count as f64 / n;
        let v = conditional_slots(model, theta, decomposition, slots, times, x, x_prime)?;
        for (a, c) in acc.iter_mut().zip(&v) {
            for (ai, ci) in a.iter_mut().zip(c) {
                *ai += w * ci;
            }
        }
    }
    Ok(series(decomposition, acc, times, Population::Marginal))
}

/// Dispatches a request to the conditional or marginal computation.
pub fn compute_contrasts(
    model: &Model,
    theta: &ThetaVector,
    request: &EffectRequest,
    data: Option<&Dataset>,
) -> Result<Vec<ContrastSeries>> {
    match (&request.profile, data) {
        (Some(p), _) => match request.decomposition {
            Decomposition::Natural => {
                natural_effects(model, theta, p, &request.times, request.x, request.x_prime)
            }
            Decomposition::PathSpecific => {
                path_specific_effects(model, theta, p, &request.times, request.x, request.x_prime)
            }
        },
        (None, Some(d)) => marginal_contrasts(
            model,
            theta,
            d,
            request.decomposition,
            &request.times,
            request.x,
            request.x_prime,
        ),
        (None, None) => {
            // Without covariates beyond the exposure the conditional contrast is the marginal one.
            let only_exposure = model.covariate_names().len() == 1;
            if only_exposure {
                let mut r = request.clone();
                r.profile = Some(Covariates::new());
                compute_contrasts(model, theta, &r, None)
            } else {
                Err(Error::InvalidArgument(
                    "marginal contrasts need a dataset or an explicit covariate profile".into(),
                ))
            }
        }
    }
}

/// Looks up one effect in a list of series.
pub fn find(series: &[ContrastSeries], e: Effect) -> Option<&ContrastSeries> {
    series.iter().find(|s| s.effect == e)
}
