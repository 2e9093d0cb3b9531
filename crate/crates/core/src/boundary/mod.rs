//! One-sided tests for variance components on the boundary of the
//! parameter space, with chi-bar-squared null distributions.

mod cone;
mod variance;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub use cone::{score_one_sided_cone, ConeProjector, ConeScore, NonnegativeOrthant, Projection, PsdCompletion2x2, WholeSpace};
pub use variance::{
    random_intercept_score_stat, variance_component_test, ScoreForm, VarianceComponentTest,
};

/// Mixture `sum_m w_m chi2_{df_m}`; `chi2_0` is the point mass at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiBarMixture {
    components: Vec<(u32, f64)>,
}

impl ChiBarMixture {
    pub fn new(mut components: Vec<(u32, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        components.sort_by_key(|c| c.0);
        if components.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("mixture degrees of freedom must be distinct".into()));
        }
        if components.iter().any(|c| !(c.1 >= 0.0 && c.1 <= 1.0)) {
            return Err(Error::InvalidArgument("mixture weights must lie in [0, 1]".into()));
        }
        let total: f64 = components.iter().map(|c| c.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(ChiBarMixture { components })
    }

    pub fn pure(df: u32) -> Self {
        ChiBarMixture {
            components: vec![(df, 1.0)],
        }
    }

    /// `1/2 chi2_k + 1/2 chi2_{k+1}`.
    pub fn half_half(k: u32) -> Self {
        ChiBarMixture {
            components: vec![(k, 0.5), (k + 1, 0.5)],
        }
    }

    /// `sum_m 2^-k' C(k', m) chi2_{k+m}`: `k'` uncorrelated effects added to
    /// a null with `k` degrees of freedom already in the reference.
    pub fn binomial(k: u32, k_prime: u32) -> Self {
        let scale = 0.5f64.powi(k_prime as i32);
        let mut c = 1.0;
        let mut components = Vec::with_capacity(k_prime as usize + 1);
        for m in 0..=k_prime {
            components.push((k + m, c * scale));
            c = c * f64::from(k_prime - m) / f64::from(m + 1);
        }
        ChiBarMixture { components }
    }

    pub fn components(&self) -> &[(u32, f64)] {
        &self.components
    }

    /// `P(T > t)` under the mixture, with `P(chi2_0 > t) = 0` for `t >= 0`.
    pub fn survival(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|&(df, w)| {
                if df == 0 {
                    if t < 0.0 {
                        w
                    } else {
                        0.0
                    }
                } else if t <= 0.0 {
                    w
                } else {
                    w * ChiSquared::new(f64::from(df)).expect("df > 0").sf(t)
                }
            })
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

impl std::fmt::Display for ChiBarMixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .components
            .iter()
            .map(|(df, w)| format!("{w}*chi2_{df}"))
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

/// Reported p-value of an observed statistic. An observed value of exactly
/// 0 is reported as 1, although the right limit of the survival function
/// at 0 is the weight of the non-degenerate components.
pub fn chibar_pvalue(t: f64, mixture: &ChiBarMixture) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("test statistic must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(mixture.survival(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sided {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTestResult {
    pub statistic: f64,
    pub mixture: ChiBarMixture,
    pub p_value: f64,
    pub sided: Sided,
}

impl BoundaryTestResult {
    pub fn new(statistic: f64, mixture: ChiBarMixture, sided: Sided) -> Result<Self> {
        let p_value = chibar_pvalue(statistic, &mixture)?;
        Ok(BoundaryTestResult {
            statistic,
            mixture,
            p_value,
            sided,
        })
    }
}

/// Slack tolerated when the alternative log-likelihood falls below the null.
const NESTING_SLACK: f64 = 1e-6;

/// One-sided likelihood-ratio test for adding `k_prime` random effects to a
/// null with `k` (correlated case: `k` free covariances with the new
/// effect).
pub fn lrt_boundary(
    loglik_null: f64,
    loglik_alt: f64,
    k: u32,
    k_prime: u32,
    correlated: bool,
) -> Result<BoundaryTestResult> {
    if !loglik_null.is_finite() || !loglik_alt.is_finite() {
        return Err(Error::InvalidArgument("log-likelihoods must be finite".into()));
    }
    if loglik_alt < loglik_null - NESTING_SLACK {
        return Err(Error::InvalidArgument(format!(
            "alternative log-likelihood {loglik_alt} is below the null {loglik_null}; models are not nested"
        )));
    }
    if k_prime == 0 {
        return Err(Error::InvalidArgument("k_prime must be >= 1".into()));
    }
    let mixture = match (correlated, k_prime) {
        (true, 1) => ChiBarMixture::half_half(k),
        (false, _) => ChiBarMixture::binomial(k, k_prime),
        (true, _) => {
            return Err(Error::Unsupported(
                "chi-bar-squared weights for several correlated added effects can only be \
                 calculated analytically in a number of special cases"
                    .into(),
            ))
        }
    };
    let t = (2.0 * (loglik_alt - loglik_null)).max(0.0);
    BoundaryTestResult::new(t, mixture, Sided::One)
}

/// Classical two-sided reference: unconstrained statistic against `chi2_df`.
pub fn lrt_two_sided(loglik_null: f64, loglik_alt: f64, df: u32) -> Result<BoundaryTestResult> {
    if !loglik_null.is_finite() || !loglik_alt.is_finite() {
        return Err(Error::InvalidArgument("log-likelihoods must be finite".into()));
    }
    let t = (2.0 * (loglik_alt - loglik_null)).max(0.0);
    BoundaryTestResult::new(t, ChiBarMixture::pure(df), Sided::Two)
}

/// Scalar one-sided score test: `score^2 / info` when the unconstrained
/// estimate is nonnegative, else 0; null law `1/2 chi2_0 + 1/2 chi2_1`.
pub fn score_one_sided_scalar(score: f64, info: f64, tau_hat_nonneg: bool) -> Result<BoundaryTestResult> {
    if !(info > 0.0) || !info.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "information at zero must be positive, got {info}"
        )));
    }
    if !score.is_finite() {
        return Err(Error::InvalidArgument("score must be finite".into()));
    }
    let t = if tau_hat_nonneg { score * score / info } else { 0.0 };
    BoundaryTestResult::new(t, ChiBarMixture::half_half(0), Sided::One)
}
