//! Generate / fit / contrast / compare loop over independent replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, true_effects_oracle, ScenarioConfig, TruthHandle};
use crate::causal::{bootstrap_contrasts, ContrastSeries, Effect, EffectRequest};
use crate::data::Covariates;
use crate::error::{Error, Result};
use crate::estimation::{default_init, fit_mle, FitOptions};
use crate::rng::{derive_seed, Rng};

use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Least-squares starting values from the data.
    Default,
    /// The generating parameters.
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub fit: FitOptions,
    pub init: InitStrategy,
    pub bootstrap_r: usize,
    pub level: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            fit: FitOptions::default(),
            init: InitStrategy::Default,
            bootstrap_r: 1000,
            level: 0.95,
        }
    }
}

/// Result of one replicate: contrast series with bands, or the reason it
/// failed.
pub type ReplicateOutcome = std::result::Result<Vec<ContrastSeries>, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub effect: Effect,
    pub time: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_rel_bias_pct: f64,
    pub coverage_pct: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub scenario: String,
    pub rows: Vec<ReportRow>,
    /// Failure messages by replicate index.
    pub failure_messages: Vec<(usize, String)>,
}

impl ReplicationReport {
    pub fn row(&self, e: Effect, time: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.effect == e && r.time == time)
    }
}

/// `100 (estimate - truth) / truth`. A zero truth gives 0 when the
/// estimate is also exactly zero and NaN otherwise.
pub fn relative_bias(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::NAN
        }
    } else {
        100.0 * (estimate - truth) / truth
    }
}

impl ScenarioConfig {
    /// Draws baseline covariates besides the exposure.
    pub fn sample_covariates(&self, rng: &mut Rng) -> Covariates {
        let mut c = Covariates::new();
        if let Some(p) = self.confounder_prob {
            c.insert("C".into(), f64::from(u8::from(rng.random::<f64>() < p)));
        }
        c
    }

    /// Oracle truth for `x = 1` against `x' = 0` at the contrast times.
    pub fn truth(&self, seed: u64) -> Result<TruthHandle> {
        let model = self.model()?;
        let theta = self.theta_true(&model)?;
        true_effects_oracle(
            &model,
            &theta,
            self.decomposition(),
            &self.contrast_times,
            1.0,
            0.0,
            self.truth_population,
            |rng| self.sample_covariates(rng),
            seed,
        )
    }
}

/// One replicate: generate, fit, bootstrap the contrasts.
pub fn run_replicate(cfg: &ScenarioConfig, opts: &EstimatorOptions, seed: u64) -> Result<Vec<ContrastSeries>> {
    let model = cfg.model()?;
    let data = generate(cfg, derive_seed(seed, 0))?;
    let init = match opts.init {
        InitStrategy::Default => default_init(&model, &data)?,
        InitStrategy::Truth => cfg.theta_true(&model)?,
    };
    let mut fo = opts.fit;
    fo.compute_hessian = true;
    let fit = fit_mle(&model, &data, &init, &fo)?;
    if !fit.converged {
        return Err(Error::NotConverged(fit.message.clone()));
    }
    let request = EffectRequest {
        decomposition: cfg.decomposition(),
        x: 1.0,
        x_prime: 0.0,
        times: cfg.contrast_times.clone(),
        profile: None,
    };
    bootstrap_contrasts(&model, &fit, &request, Some(&data), opts.bootstrap_r, derive_seed(seed, 1), opts.level)
}

/// Runs `k` replicates of `cfg` in parallel and compares them with the
/// oracle truth. Deterministic given `seed`; failed replicates are counted
/// and excluded from the averages.
pub fn replicate_study(
    cfg: &ScenarioConfig,
    k: usize,
    opts: &EstimatorOptions,
    seed: u64,
) -> Result<ReplicationReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("replicate_study needs K >= 1".into()));
    }
    cfg.validate()?;
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", opts.level)));
    }
    let truth = cfg.truth(derive_seed(seed, u64::MAX))?;
    let outcomes: Vec<ReplicateOutcome> = (0..k)
        .into_par_iter()
        .map(|i| run_replicate(cfg, opts, derive_seed(seed, i as u64)).map_err(|e| e.to_string()))
        .collect();
    Ok(aggregate(&cfg.id, &truth, &outcomes))
}

/// Folds replicate outcomes into the per (effect, time) summary.
pub fn aggregate(scenario: &str, truth: &TruthHandle, outcomes: &[ReplicateOutcome]) -> ReplicationReport {
    let ok: Vec<&Vec<ContrastSeries>> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures = outcomes.len() - ok.len();
    let mut rows = Vec::new();
    for e in truth.decomposition.effects() {
        let tv = truth.get(e).expect("oracle covers its decomposition");
        for (i, &time) in truth.times.iter().enumerate() {
            let mut rb = Vec::with_capacity(ok.len());
            let mut est = 0.0;
            let mut covered = 0usize;
            for series in &ok {
                let s = crate::causal::find(series, e).expect("replicate covers the decomposition");
                let v = s.estimate[i];
                est += v;
                rb.push(relative_bias(v, tv[i]));
                let (lo, hi) = (
                    s.ci_lower.as_ref().map_or(f64::NAN, |c| c[i]),
                    s.ci_upper.as_ref().map_or(f64::NAN, |c| c[i]),
                );
                if lo <= tv[i] && tv[i] <= hi {
                    covered += 1;
                }
            }
            let n = ok.len() as f64;
            rows.push(ReportRow {
                effect: e,
                time,
                truth: tv[i],
                mean_estimate: est / n,
                mean_rel_bias_pct: rb.iter().sum::<f64>() / n,
                coverage_pct: 100.0 * covered as f64 / n,
                replicates: ok.len(),
                failures,
            });
        }
    }
    ReplicationReport {
        scenario: scenario.to_string(),
        rows,
        failure_messages: outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.as_ref().err().map(|m| (i, m.clone())))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{Decomposition, Population};
    use std::collections::BTreeMap;

    #[test]
    fn relative_bias_conventions() {
        assert_eq!(relative_bias(1.1, 1.0), 100.0 * (1.1 - 1.0) / 1.0);
        assert_eq!(relative_bias(0.0, 0.0), 0.0);
        assert!(relative_bias(0.1, 0.0).is_nan());
        assert_eq!(relative_bias(-2.0, -1.0), 100.0);
    }

    fn series(e: Effect, est: f64, lo: f64, hi: f64) -> ContrastSeries {
        let mut s = ContrastSeries::new(e, vec![1.0], vec![est], Population::Marginal);
        s.ci_lower = Some(vec![lo]);
        s.ci_upper = Some(vec![hi]);
        s
    }

    #[test]
    fn aggregation_excludes_failures() {
        let truth = TruthHandle {
            decomposition: Decomposition::Natural,
            times: vec![1.0],
            x: 1.0,
            x_prime: 0.0,
            population: 1000,
            values: [(Effect::Te, vec![2.0]), (Effect::Nde, vec![1.0]), (Effect::Nie, vec![1.0])].into(),
            mc_se: BTreeMap::new(),
        };
        let rep = |a: f64| -> ReplicateOutcome {
            Ok(vec![
                series(Effect::Te, 2.0 * a, 0.0, 3.0),
                series(Effect::Nde, a, a, 2.0),
                series(Effect::Nie, a, 5.0, 6.0),
            ])
        };
        let outcomes = vec![rep(1.1), Err("boom".into()), rep(0.8)];
        let r = aggregate("x", &truth, &outcomes);
        assert_eq!(r.rows.len(), 3);
        let te = r.row(Effect::Te, 1.0).unwrap();
        assert_eq!((te.replicates, te.failures), (2, 1));
        assert!((te.mean_rel_bias_pct - (-5.0)).abs() < 1e-9);
        assert_eq!(te.coverage_pct, 100.0);
        assert_eq!(r.row(Effect::Nde, 1.0).unwrap().coverage_pct, 50.0);
        assert_eq!(r.row(Effect::Nie, 1.0).unwrap().coverage_pct, 0.0);
        assert_eq!(r.failure_messages, vec![(1, "boom".to_string())]);
    }

    #[test]
    fn smoke_run_from_truth() {
        let mut cfg = ScenarioConfig::preset("1E", false).unwrap();
        cfg.n = 500;
        cfg.truth_population = 2000;
        let opts = EstimatorOptions {
            init: InitStrategy::Truth,
            bootstrap_r: 20,
            ..Default::default()
        };
        let r = replicate_study(&cfg, 1, &opts, 3).unwrap();
        assert_eq!(r.rows.len(), 15);
        for row in &r.rows {
            assert!(row.replicates + row.failures == 1);
            assert!((0.0..=100.0).contains(&row.coverage_pct) || row.replicates == 0);
        }
        assert!(r.failure_messages.is_empty(), "{:?}", r.failure_messages);
        for row in &r.rows {
            assert!(row.mean_rel_bias_pct.abs() < 50.0, "{row:?}");
        }
    }
}
