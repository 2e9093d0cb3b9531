//! Cohort generation from the working model at its true parameters.

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{apply_dropout, EntryLaw, Family, ScenarioConfig};
use crate::data::{Covariates, Dataset, Observation, SubjectRecord};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Generates one cohort for `cfg`, dropout included.
///
/// Each subject gets baseline covariates, a random-effects draw, latent
/// paths on the Euler grid from the model origin, and noisy markers at the
/// grid nodes nearest to the jittered visit times.
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let model = cfg.model()?;
    let theta = cfg.theta_true(&model)?;
    let q = model.random_effects().dim();
    let chol = model.re_cholesky(&theta);
    let origin = model.spec().origin;
    let jitter = Normal::new(0.0, cfg.visits.jitter_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let offsets_last = *cfg.visits.planned.last().expect("validated non-empty");
    let markers: Vec<_> = cfg
        .visits
        .planned
        .iter()
        .map(|&o| cfg.markers_at(&model, o))
        .collect();

    let mut rng = rng_from(derive_seed(seed, 0));
    let mut subjects = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut covs = Covariates::new();
        covs.insert("X".into(), f64::from(u8::from(rng.random::<f64>() < cfg.exposure_prob)));
        if let Some(pc) = cfg.confounder_prob {
            covs.insert("C".into(), f64::from(u8::from(rng.random::<f64>() < pc)));
        }
        let entry = match cfg.entry {
            EntryLaw::Fixed(e) => e,
            EntryLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        };
        if entry < origin {
            return Err(Error::InvalidArgument(format!(
                "entry {entry} precedes the model origin {origin}"
            )));
        }
        let times: Vec<f64> = cfg
            .visits
            .planned
            .iter()
            .enumerate()
            .map(|(k, &o)| {
                let e = if k == 0 { 0.0 } else { jitter.sample(&mut rng) };
                (entry + o + e).max(entry)
            })
            .collect();
        let z = DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(&mut rng)));
        let b = &chol * z;
        let profile = model.profile(&covs, true)?;
        let last = times.iter().copied().fold(entry + offsets_last, f64::max);
        let grid = model.grid(last)?;
        let paths = model.simulate_latent(&theta, [&profile, &profile, &profile], b.as_slice(), grid)?;

        let mut s = SubjectRecord::new((i + 1).to_string(), covs, entry);
        for (&t, present) in times.iter().zip(&markers) {
            let node = grid.node_of(t)?;
            for &p in present {
                let sd = model.error_variance(&theta, p).unwrap_or(0.0).sqrt();
                let e: f64 = StandardNormal.sample(&mut rng);
                s.markers_mut(p).push(Observation {
                    time: t,
                    value: paths.at(p, node) + sd * e,
                });
            }
        }
        subjects.push(s);
    }
    let data = Dataset::new(subjects);
    apply_dropout(&data, cfg.dropout, derive_seed(seed, 1))
}

/// [`generate`] restricted to the time-since-entry scenarios.
pub fn generate_scenario1(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    expect_family(cfg, Family::One)?;
    generate(cfg, seed)
}

/// [`generate`] restricted to the age-timescale scenarios.
pub fn generate_scenario2(cfg: &ScenarioConfig, seed: u64) -> Result<Dataset> {
    expect_family(cfg, Family::Two)?;
    generate(cfg, seed)
}

fn expect_family(cfg: &ScenarioConfig, f: Family) -> Result<()> {
    if cfg.family != f {
        return Err(Error::InvalidArgument(format!(
            "scenario `{}` does not belong to this family",
            cfg.id
        )));
    }
    Ok(())
}
