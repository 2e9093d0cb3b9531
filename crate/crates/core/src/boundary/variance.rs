//! Score statistic for a random intercept and the likelihood-ratio bridge
//! for random-slope blocks of the working model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{lrt_boundary, BoundaryTestResult, ChiBarMixture, Sided};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{default_init, fit_mle, FitOptions, FitResult};
use crate::model::{EffectKind, Model, ModelSpec, Process, RandomEffect, ThetaVector};

/// Information used in the random-intercept score statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreForm {
    /// `(Nn/2) (C-1)^2 / (2nC-1)`, the closed form as usually printed.
    #[default]
    Printed,
    /// `Nn (C-1)^2 / (2(n-1))`: expected information with the error
    /// variance profiled out. Its null law is `1/2 chi2_0 + 1/2 chi2_1`
    /// after one-sided gating.
    Efficient,
}

/// Score statistic for `tau^2 = 0` in `y_ij = b_i + e_ij` with balanced
/// clusters, from residuals and the null estimate of the error variance.
pub fn random_intercept_score_stat(clusters: &[Vec<f64>], sigma2_hat: f64, form: ScoreForm) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::InvalidArgument("no clusters".into()));
    }
    let n = clusters[0].len();
    if n == 0 || clusters.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument("clusters must be balanced and non-empty".into()));
    }
    if !(sigma2_hat > 0.0) || !sigma2_hat.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma2_hat must be > 0, got {sigma2_hat}")));
    }
    let (nn, big_n) = (n as f64, clusters.len() as f64);
    let c = clusters.iter().map(|y| y.iter().sum::<f64>().powi(2)).sum::<f64>() / (sigma2_hat * big_n * nn);
    let denom = match form {
        ScoreForm::Printed => 2.0 * nn * c - 1.0,
        ScoreForm::Efficient => 2.0 * (nn - 1.0),
    };
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "score statistic denominator is {denom}; it must be positive"
        )));
    }
    Ok(match form {
        ScoreForm::Printed => big_n * nn / 2.0 * (c - 1.0).powi(2) / denom,
        ScoreForm::Efficient => big_n * nn * (c - 1.0).powi(2) / denom,
    })
}

#[derive(Debug, Clone)]
pub struct VarianceComponentTest {
    pub result: BoundaryTestResult,
    pub null_fit: FitResult,
    pub alt_fit: Option<FitResult>,
    /// Process whose random slope is tested; `None` when the specs coincide.
    pub tested: Option<Process>,
}

/// Process whose random slope is switched on in `alt`, or `None` if the
/// specs are identical.
fn added_slope(null: &ModelSpec, alt: &ModelSpec) -> Result<Option<Process>> {
    let mut stripped = alt.clone();
    let mut added = None;
    for (p, ps) in &mut stripped.processes {
        let before = null.processes.get(p).map(|s| s.random_slope);
        if ps.random_slope && before == Some(false) {
            if added.is_some() {
                return Err(Error::Unsupported(
                    "only one added random-slope block can be tested at a time".into(),
                ));
            }
            added = Some(*p);
            ps.random_slope = false;
        }
    }
    if &stripped != null {
        return Err(Error::InvalidArgument(
            "null spec must equal the alternative with one random slope removed".into(),
        ));
    }
    Ok(added)
}

/// Embeds a null estimate in the alternative parameterisation: shared
/// names carry over, Cholesky entries are matched by effect pair, and the
/// new diagonal entry starts at `start`.
fn embed(null: &Model, theta: &ThetaVector, alt: &Model, added: RandomEffect, start: f64) -> Result<ThetaVector> {
    let chol: BTreeMap<(RandomEffect, RandomEffect), f64> = {
        let re = null.random_effects();
        re.allowed
            .iter()
            .zip(null.chol(theta))
            .map(|(&(r, c), &v)| ((re.effects[r], re.effects[c]), v))
            .collect()
    };
    let mut named = null.layout().to_named(theta);
    named.retain(|k, _| !k.starts_with("chol."));
    let mut out = alt.layout().from_named(&named)?;
    let re = alt.random_effects();
    let range = alt.layout().chol_range();
    for (k, &(r, c)) in re.allowed.iter().enumerate() {
        let key = (re.effects[r], re.effects[c]);
        out[range.start + k] = match chol.get(&key) {
            Some(&v) => v,
            None if r == c && key.0 == added => start,
            None => 0.0,
        };
    }
    Ok(out)
}

/// Fits both models and applies the one-sided likelihood-ratio test for the
/// added random slope. The added effect correlates with the random
/// intercept of its process only, so the null law is
/// `1/2 chi2_k + 1/2 chi2_{k+1}` with `k` the number of free covariances
/// of the new effect.
pub fn variance_component_test(
    null: &ModelSpec,
    alt: &ModelSpec,
    data: &Dataset,
    opts: &FitOptions,
) -> Result<VarianceComponentTest> {
    let added = added_slope(null, alt)?;
    let mut fo = *opts;
    fo.compute_hessian = false;
    let m0 = Model::new(null.clone())?;
    let f0 = fit_mle(&m0, data, &default_init(&m0, data)?, &fo)?;
    if !f0.converged {
        return Err(Error::NotConverged(format!("null model: {}", f0.message)));
    }
    let Some(p) = added else {
        return Ok(VarianceComponentTest {
            result: BoundaryTestResult::new(0.0, ChiBarMixture::pure(0), Sided::One)?,
            null_fit: f0,
            alt_fit: None,
            tested: None,
        });
    };
    let m1 = Model::new(alt.clone())?;
    let effect = RandomEffect {
        process: p,
        kind: EffectKind::Slope,
    };
    let start = embed(&m0, &f0.theta_hat, &m1, effect, 0.1)?;
    let f1 = fit_mle(&m1, data, &start, &fo)?;
    if !f1.converged {
        return Err(Error::NotConverged(format!("alternative model: {}", f1.message)));
    }
    let re = m1.random_effects();
    let row = re.index_of(p, EffectKind::Slope).expect("alternative has the slope");
    let k = re.allowed.iter().filter(|&&(r, c)| r == row && c != row).count() as u32;
    // The null optimum is attainable in the alternative, so its supremum is at least the null's.
    let ll_alt = f1.loglik.max(f0.loglik);
    let result = lrt_boundary(f0.loglik, ll_alt, k, 1, true)?;
    Ok(VarianceComponentTest {
        result,
        null_fit: f0,
        alt_fit: Some(f1),
        tested: Some(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn closed_forms() {
        let y = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]];
        // Sum of squared cluster totals = 9 + 0.25 + 0.36.
        let c: f64 = 9.61 / (1.5 * 3.0 * 2.0);
        let p = random_intercept_score_stat(&y, 1.5, ScoreForm::Printed).unwrap();
        assert!((p - 3.0 * 2.0 / 2.0 * (c - 1.0).powi(2) / (4.0 * c - 1.0)).abs() < 1e-12);
        let e = random_intercept_score_stat(&y, 1.5, ScoreForm::Efficient).unwrap();
        assert!((e - 6.0 * (c - 1.0).powi(2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let zeros = vec![vec![0.0; 3]; 4];
        // C = 0 makes the printed denominator negative.
        assert!(random_intercept_score_stat(&zeros, 1.0, ScoreForm::Printed).is_err());
        assert_eq!(random_intercept_score_stat(&zeros, 1.0, ScoreForm::Efficient).unwrap(), 12.0 / 4.0);
        assert!(random_intercept_score_stat(&zeros, 0.0, ScoreForm::Efficient).is_err());
        assert!(random_intercept_score_stat(&[vec![1.0], vec![1.0, 2.0]], 1.0, ScoreForm::Efficient).is_err());
    }

    /// Score statistic from its definition: the score by finite differences
    /// of the compound-symmetry log-likelihood, the efficient information
    /// from the trace formula on explicit matrices.
    #[test]
    fn efficient_form_matches_definition() {
        use nalgebra::DMatrix;
        let mut rng = rng_from(3);
        let (big_n, n) = (40usize, 4usize);
        let y: Vec<Vec<f64>> = (0..big_n)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let s2 = y.iter().flatten().map(|v| v * v).sum::<f64>() / (big_n * n) as f64;
        let ll = |tau2: f64| -> f64 {
            let v = DMatrix::identity(n, n) * s2 + DMatrix::from_element(n, n, tau2);
            let ch = v.clone().cholesky().unwrap();
            let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            y.iter()
                .map(|c| {
                    let r = nalgebra::DVector::from_column_slice(c);
                    -0.5 * (logdet + r.dot(&ch.solve(&r)))
                })
                .sum()
        };
        let h = 1e-5;
        let score = (ll(h) - ll(-h)) / (2.0 * h);
        let vinv = DMatrix::identity(n, n) / s2;
        let j = DMatrix::from_element(n, n, 1.0);
        let eye = DMatrix::identity(n, n);
        let tr = |a: &DMatrix<f64>, b: &DMatrix<f64>| 0.5 * big_n as f64 * (&vinv * a * &vinv * b).trace();
        let eff = tr(&j, &j) - tr(&j, &eye).powi(2) / tr(&eye, &eye);
        let t = random_intercept_score_stat(&y, s2, ScoreForm::Efficient).unwrap();
        let t_def = score * score / eff;
        assert!((t - t_def).abs() < 1e-4 * (1.0 + t), "{t} {t_def}");
    }

    /// Kolmogorov-Smirnov statistic and asymptotic p-value against `cdf`.
    fn ks(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> (f64, f64) {
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        let d = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf(v);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max);
        let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let p = (1..=100)
            .map(|k| {
                let k = k as f64;
                2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lam * lam).exp()
            })
            .sum::<f64>();
        (d, p.clamp(0.0, 1.0))
    }

    fn null_statistics(form: ScoreForm) -> (Vec<f64>, usize) {
        let mut rng = rng_from(17);
        let (big_n, n, reps) = (200, 5, 2000);
        let mut positive = Vec::new();
        for _ in 0..reps {
            let y: Vec<Vec<f64>> = (0..big_n)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let s2 = y.iter().flatten().map(|v| v * v).sum::<f64>() / (big_n * n) as f64;
            let c = y.iter().map(|c| c.iter().sum::<f64>().powi(2)).sum::<f64>() / (s2 * (big_n * n) as f64);
            // One-sided gating: a negative score at zero gives T = 0.
            if c > 1.0 {
                positive.push(random_intercept_score_stat(&y, s2, form).unwrap());
            }
        }
        (positive, reps)
    }

    #[test]
    fn efficient_form_has_chibar_null_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (pos, reps) = null_statistics(ScoreForm::Efficient);
        let frac = pos.len() as f64 / reps as f64;
        assert!((frac - 0.5).abs() < 3.0 * (0.25 / reps as f64).sqrt(), "{frac}");
        let chi1 = ChiSquared::new(1.0).unwrap();
        let (_, p) = ks(pos, |t| chi1.cdf(t));
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn printed_form_departs_from_chibar_null_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let (pos, _) = null_statistics(ScoreForm::Printed);
        let chi1 = ChiSquared::new(1.0).unwrap();
        let mean = pos.iter().sum::<f64>() / pos.len() as f64;
        // Under H0 C is near 1, so the printed form is about (n-1)/(2(2n-1)) = 2/9 of the efficient one.
        assert!(mean < 0.5, "{mean}");
        let (_, p) = ks(pos, |t| chi1.cdf(t));
        assert!(p < 0.01, "KS p = {p}");
    }

    #[test]
    fn score_grows_with_cluster_variance() {
        let mut means = Vec::new();
        for tau2 in [0.0, 0.05, 0.2, 0.8] {
            let mut rng = rng_from(5);
            let mut total = 0.0;
            for _ in 0..50 {
                let y: Vec<Vec<f64>> = (0..100)
                    .map(|_| {
                        let b: f64 = StandardNormal.sample(&mut rng);
                        (0..4)
                            .map(|_| {
                                let e: f64 = StandardNormal.sample(&mut rng);
                                f64::sqrt(tau2) * b + e
                            })
                            .collect()
                    })
                    .collect();
                let s2 = y.iter().flatten().map(|v| v * v).sum::<f64>() / 400.0;
                total += random_intercept_score_stat(&y, s2, ScoreForm::Efficient).unwrap();
            }
            means.push(total / 50.0);
        }
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }

    fn slope_cohort(slope_sd: f64, seed: u64) -> (ModelSpec, ModelSpec, Dataset) {
        use crate::simulation::{generate, ScenarioConfig};
        let mut cfg = ScenarioConfig::preset("1E", false).unwrap();
        cfg.n = 100;
        cfg.theta.insert("chol.7".into(), 0.0);
        cfg.theta.insert("chol.10".into(), slope_sd);
        let data = generate(&cfg, seed).unwrap();
        let alt = cfg.model_spec();
        let mut null = alt.clone();
        null.processes.get_mut(&Process::Y).unwrap().random_slope = false;
        (null, alt, data)
    }

    #[test]
    fn identical_specs_give_zero() {
        let (null, _, data) = slope_cohort(0.0, 1);
        let r = variance_component_test(&null, &null, &data, &FitOptions::default()).unwrap();
        assert_eq!((r.result.statistic, r.result.p_value), (0.0, 1.0));
        assert!(r.alt_fit.is_none());
    }

    #[test]
    fn strong_slope_variance_is_detected() {
        let (null, alt, data) = slope_cohort(2.0, 2);
        let r = variance_component_test(&null, &alt, &data, &FitOptions::default()).unwrap();
        assert_eq!(r.tested, Some(Process::Y));
        assert_eq!(r.result.mixture, ChiBarMixture::half_half(1));
        assert!(r.result.p_value < 1e-6, "{:?}", r.result);
    }

    #[test]
    fn non_nested_specs_are_rejected() {
        let (null, alt, data) = slope_cohort(0.0, 1);
        assert!(variance_component_test(&alt, &null, &data, &FitOptions::default()).is_err());
    }
}
