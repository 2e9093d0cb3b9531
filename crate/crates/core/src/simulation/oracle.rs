//! Empirical true contrasts from a simulated counterfactual population.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{check_decomposition, contrast_grid, contrasts, regime_profiles, regimes, Decomposition, Effect, Welford};
use crate::data::Covariates;
use crate::error::{Error, Result};
use crate::model::{Model, Process, ThetaVector};
use crate::rng::{derive_seed, rng_from, Rng};

const CHUNK: usize = 2048;

/// True contrasts per effect and time, with their Monte-Carlo standard
/// errors. Always contains `TE` alongside the three decomposition effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthHandle {
    pub decomposition: Decomposition,
    pub times: Vec<f64>,
    pub x: f64,
    pub x_prime: f64,
    pub population: usize,
    pub values: BTreeMap<Effect, Vec<f64>>,
    pub mc_se: BTreeMap<Effect, Vec<f64>>,
}

impl TruthHandle {
    pub fn get(&self, e: Effect) -> Option<&[f64]> {
        self.values.get(&e).map(Vec::as_slice)
    }

    pub fn se(&self, e: Effect) -> Option<&[f64]> {
        self.mc_se.get(&e).map(Vec::as_slice)
    }
}

/// Simulates `population` individuals with covariates from `sample` (the
/// exposure entry is ignored) and one full random-effects draw each, runs
/// every regime of the decomposition on the same draw and averages the
/// individual contrasts of the latent outcome.
#[allow(clippy::too_many_arguments)]
pub fn true_effects_oracle<F>(
    model: &Model,
    theta: &ThetaVector,
    decomposition: Decomposition,
    times: &[f64],
    x: f64,
    x_prime: f64,
    population: usize,
    sample: F,
    seed: u64,
) -> Result<TruthHandle>
where
    F: Fn(&mut Rng) -> Covariates + Sync,
{
    if population < 1000 {
        return Err(Error::InvalidArgument(format!(
            "oracle population must be >= 1000, got {population}"
        )));
    }
    check_decomposition(model, decomposition)?;
    let (grid, nodes) = contrast_grid(model, times)?;
    let regs = regimes(decomposition, x, x_prime);
    let chol = model.re_cholesky(theta);
    let q = model.random_effects().dim();
    let nt = times.len();

    let chunks: Vec<Result<Welford>> = (0..population.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(population - c * CHUNK);
            let mut rng = rng_from(derive_seed(seed, c as u64));
            let mut acc = Welford::new(4 * nt);
            let mut row = vec![0.0; 4 * nt];
            for _ in 0..count {
                let covs = sample(&mut rng);
                let base = model.profile(&covs, false)?;
                let z = DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(&mut rng)));
                let b = &chol * z;
                let means = regs
                    .iter()
                    .map(|r| {
                        let [pl, pm, py] = regime_profiles(model, &base, r)?;
                        let paths = model.simulate_latent(theta, [&pl, &pm, &py], b.as_slice(), grid)?;
                        Ok(nodes.iter().map(|&k| paths.at(Process::Y, k)).collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?;
                let parts = contrasts(decomposition, &means);
                let (first, last) = (&means[0], &means[means.len() - 1]);
                for i in 0..nt {
                    row[i] = first[i] - last[i];
                    for (j, part) in parts.iter().enumerate() {
                        row[(j + 1) * nt + i] = part[i];
                    }
                }
                acc.push(&row);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Welford::new(4 * nt);
    for c in chunks {
        total.merge(&c?);
    }
    let se = total.se();
    let mut values = BTreeMap::new();
    let mut mc_se = BTreeMap::new();
    let mut keys = vec![Effect::Te];
    keys.extend(decomposition.effects());
    for (j, e) in keys.into_iter().enumerate() {
        // For the natural decomposition TE appears twice; both rows agree.
        values.insert(e, total.mean[j * nt..(j + 1) * nt].to_vec());
        mc_se.insert(e, se[j * nt..(j + 1) * nt].to_vec());
    }
    Ok(TruthHandle {
        decomposition,
        times: times.to_vec(),
        x,
        x_prime,
        population,
        values,
        mc_se,
    })
}
