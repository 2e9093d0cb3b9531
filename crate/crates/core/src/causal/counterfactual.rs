//! Counterfactual mean of the latent outcome under an exposure regime.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::ExposureRegime;
use crate::data::Covariates;
use crate::error::{Error, Result};
use crate::model::{Model, Process, ThetaVector, TimeGrid};
use crate::rng::{derive_seed, rng_from};

const MC_CHUNK: usize = 2048;

/// Per-process covariate slot vectors for a regime, starting from a
/// baseline slot vector whose exposure entry is overwritten.
pub(crate) fn regime_profiles(
    model: &Model,
    base: &[f64],
    regime: &ExposureRegime,
) -> Result<[Vec<f64>; 3]> {
    match (model.has(Process::L), regime.x_l) {
        (true, None) => {
            return Err(Error::InvalidArgument(
                "the model has a confounder process; the regime needs an x_l value".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidArgument(
                "the model has no confounder process; the regime must not set x_l".into(),
            ))
        }
        _ => {}
    }
    let x_l = regime.x_l.unwrap_or(0.0);
    Ok([
        model.with_exposure(base, x_l),
        model.with_exposure(base, regime.x_m),
        model.with_exposure(base, regime.x_y),
    ])
}

pub(crate) fn contrast_grid(model: &Model, times: &[f64]) -> Result<(TimeGrid, Vec<usize>)> {
    let spec = model.spec();
    let last = times.iter().copied().fold(spec.origin, f64::max);
    let grid = TimeGrid::covering(spec.origin, spec.delta, last)?;
    let nodes = times
        .iter()
        .map(|&t| grid.node_of(t))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, nodes))
}

/// Mean outcome path on a prepared slot vector (exposure slot ignored).
pub(crate) fn counterfactual_mean_slots(
    model: &Model,
    theta: &ThetaVector,
    base: &[f64],
    regime: &ExposureRegime,
    grid: TimeGrid,
    nodes: &[usize],
) -> Result<Vec<f64>> {
    let [pl, pm, py] = regime_profiles(model, base, regime)?;
    let basis = model.propagate(theta, [&pl, &pm, &py], grid, false)?;
    Ok(nodes.iter().map(|&k| basis.mean(Process::Y, k)).collect())
}

/// `E[Y(t)]` under `regime` for covariate profile `profile`.
///
/// The system is linear, so the g-formula integral over the counterfactual
/// confounder and mediator laws reduces to propagating the mean system with
/// L driven by `x_l`, M by `x_m` (fed by the `x_l` confounder path) and Y by
/// `x_y`.
pub fn counterfactual_mean(
    model: &Model,
    theta: &ThetaVector,
    regime: &ExposureRegime,
    profile: &Covariates,
    times: &[f64],
) -> Result<Vec<f64>> {
    let base = model.profile(profile, false)?;
    let (grid, nodes) = contrast_grid(model, times)?;
    counterfactual_mean_slots(model, theta, &base, regime, grid, &nodes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    /// Standard error of each mean.
    pub se: Vec<f64>,
}

/// Monte-Carlo evaluation of the same counterfactual mean.
///
/// Each draw samples the random effects, simulates the confounder under
/// `x_l` and the mediator under `x_m`, then evaluates the outcome under `x_y`
/// with its own random effects replaced by their conditional mean given the
/// confounder and mediator effects.
pub fn mc_counterfactual_mean(
    model: &Model,
    theta: &ThetaVector,
    regime: &ExposureRegime,
    profile: &Covariates,
    times: &[f64],
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    if draws == 0 {
        return Err(Error::InvalidArgument("Monte-Carlo draws must be >= 1".into()));
    }
    let base = model.profile(profile, false)?;
    let (grid, nodes) = contrast_grid(model, times)?;
    let [pl, pm, py] = regime_profiles(model, &base, regime)?;

    let re = model.random_effects();
    let q = re.dim();
    let l = model.re_cholesky(theta);
    let d = model.re_covariance(theta);
    let y_idx: Vec<usize> = (0..q).filter(|&j| re.effects[j].process == Process::Y).collect();
    let o_idx: Vec<usize> = (0..q).filter(|&j| re.effects[j].process != Process::Y).collect();
    let d_oo = DMatrix::from_fn(o_idx.len(), o_idx.len(), |i, j| d[(o_idx[i], o_idx[j])]);
    let d_yo = DMatrix::from_fn(y_idx.len(), o_idx.len(), |i, j| d[(y_idx[i], o_idx[j])]);
    let pinv = d_oo
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let reg = d_yo * pinv;

    let n_chunks = draws.div_ceil(MC_CHUNK);
    let chunks: Vec<Result<Welford>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(draws - c * MC_CHUNK);
            let mut rng = rng_from(derive_seed(seed, c as u64));
            let mut acc = Welford::new(nodes.len());
            let mut b = vec![0.0; q];
            let mut vals = vec![0.0; nodes.len()];
            for _ in 0..count {
                let z = DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(&mut rng)));
                let full = &l * z;
                let bo = DVector::from_iterator(o_idx.len(), o_idx.iter().map(|&j| full[j]));
                let by = &reg * bo;
                for &j in &o_idx {
                    b[j] = full[j];
                }
                for (k, &j) in y_idx.iter().enumerate() {
                    b[j] = by[k];
                }
                let paths = model.simulate_latent(theta, [&pl, &pm, &py], &b, grid)?;
                for (v, &k) in vals.iter_mut().zip(&nodes) {
                    *v = paths.at(Process::Y, k);
                }
                acc.push(&vals);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Welford::new(nodes.len());
    for c in chunks {
        total.merge(&c?);
    }
    Ok(McEstimate {
        se: total.se(),
        mean: total.mean,
    })
}

/// Running mean and sum of squared deviations, per coordinate.
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    n: f64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }

    pub fn se(&self) -> Vec<f64> {
        if self.n < 2.0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2
            .iter()
            .map(|s| (s / (self.n - 1.0) / self.n).sqrt())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Influence, ModelSpec, ProcessSpec, Timescale};
    use std::collections::BTreeMap;

    fn model(with_l: bool) -> Model {
        let mut processes = BTreeMap::new();
        if with_l {
            processes.insert(Process::L, ProcessSpec::simple(&["X"], true));
        }
        processes.insert(Process::M, ProcessSpec::simple(&["X"], true));
        processes.insert(Process::Y, ProcessSpec::simple(&["X"], true));
        let mut influences = vec![Influence::new(Process::M, Process::Y)];
        if with_l {
            influences.push(Influence::new(Process::L, Process::M));
            influences.push(Influence::new(Process::L, Process::Y));
        }
        Model::new(ModelSpec {
            exposure: "X".into(),
            has_confounder: with_l,
            processes,
            influences,
            delta: 0.1,
            timescale: Timescale::TimeInStudy,
            origin: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn spec_examples_for_propagation() {
        let m = model(false);
        let l = m.layout();
        let mut th = ThetaVector::zeros(m.n_params());
        th[l.index_of("gamma.Y.intercept").unwrap()] = 0.8;
        th[l.index_of("beta.Y.intercept").unwrap()] = 0.6;
        let covs = Covariates::new();
        let r = ExposureRegime::natural(0.0, 0.0);
        let y = counterfactual_mean(&m, &th, &r, &covs, &[1.0]).unwrap();
        assert!((y[0] - 1.4).abs() < 1e-12);
        th[l.index_of("beta.M.intercept").unwrap()] = 0.5;
        th[l.index_of("alpha.YM.0").unwrap()] = 0.5;
        let y = counterfactual_mean(&m, &th, &r, &covs, &[1.0]).unwrap();
        assert!((y[0] - 1.65).abs() < 1e-12);
    }

    #[test]
    fn regime_must_match_model() {
        let covs = Covariates::new();
        let m = model(false);
        let th = ThetaVector::zeros(m.n_params());
        assert!(counterfactual_mean(&m, &th, &ExposureRegime::path(1.0, 0.0, 0.0), &covs, &[1.0]).is_err());
        let m = model(true);
        let th = ThetaVector::zeros(m.n_params());
        assert!(counterfactual_mean(&m, &th, &ExposureRegime::natural(1.0, 0.0), &covs, &[1.0]).is_err());
        assert!(matches!(
            counterfactual_mean(&m, &th, &ExposureRegime::path(1.0, 0.0, 0.0), &covs, &[-1.0]),
            Err(Error::TimeOutsideGrid { .. })
        ));
    }

    #[test]
    fn degenerate_random_effects_make_mc_exact() {
        let m = model(true);
        let mut th = ThetaVector::new((0..m.n_params()).map(|i| 0.05 * (i % 7) as f64 - 0.1).collect());
        for i in m.layout().chol_range() {
            th[i] = 0.0;
        }
        let covs = Covariates::new();
        let r = ExposureRegime::path(1.0, 0.0, 1.0);
        let times = [0.0, 1.0, 2.5];
        let exact = counterfactual_mean(&m, &th, &r, &covs, &times).unwrap();
        for draws in [1, 3, 5000] {
            let mc = mc_counterfactual_mean(&m, &th, &r, &covs, &times, draws, 9).unwrap();
            for i in 0..times.len() {
                assert!((mc.mean[i] - exact[i]).abs() <= 1e-12 * exact[i].abs().max(1.0));
                assert_eq!(mc.se[i], 0.0);
            }
        }
    }

    #[test]
    fn mc_is_reproducible() {
        let m = model(false);
        let th = ThetaVector::new((0..m.n_params()).map(|i| 0.1 + 0.02 * i as f64).collect());
        let covs = Covariates::new();
        let r = ExposureRegime::natural(1.0, 0.0);
        let a = mc_counterfactual_mean(&m, &th, &r, &covs, &[1.0, 2.0], 1, 4).unwrap();
        let b = mc_counterfactual_mean(&m, &th, &r, &covs, &[1.0, 2.0], 1, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut one = Welford::new(1);
        for &x in &xs {
            one.push(&[x]);
        }
        let mut a = Welford::new(1);
        let mut b = Welford::new(1);
        for (i, &x) in xs.iter().enumerate() {
            if i < 17 { a.push(&[x]) } else { b.push(&[x]) }
        }
        a.merge(&b);
        assert!((a.mean[0] - one.mean[0]).abs() < 1e-14);
        assert!((a.se()[0] - one.se()[0]).abs() < 1e-14);
    }
}
