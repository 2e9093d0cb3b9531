//! Maximum-likelihood fitting, asymptotic covariance and parametric draws.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::likelihood::LikelihoodEvaluator;
use super::optim::{bfgs, numerical_hessian, OptimOptions, StepRule};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{EffectKind, Model, Process, ThetaVector, TimeFn};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub optim: OptimOptions,
    /// Skip the Hessian when only the maximised log-likelihood is needed.
    pub compute_hessian: bool,
    pub hessian_step: StepRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optim: OptimOptions::default(),
            compute_hessian: true,
            hessian_step: StepRule::FourthRoot,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub theta_hat: ThetaVector,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest scaled gradient component at the final iterate.
    pub grad_max: f64,
    pub message: String,
    /// Hessian of the log-likelihood at `theta_hat`.
    pub hessian: Option<DMatrix<f64>>,
    /// Inverse of the negative Hessian.
    pub vcov: Option<DMatrix<f64>>,
}

impl FitResult {
    /// Square roots of the diagonal of `vcov`.
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.vcov
            .as_ref()
            .map(|v| v.diagonal().iter().map(|d| d.max(0.0).sqrt()).collect())
    }
}

/// Maximises the log-likelihood from `init`.
pub fn fit_mle(model: &Model, data: &Dataset, init: &ThetaVector, opts: &FitOptions) -> Result<FitResult> {
    model.check_theta(init)?;
    if !init.is_finite() {
        return Err(Error::InvalidArgument("initial parameter vector is not finite".into()));
    }
    for p in model.processes() {
        if data.n_obs(p) == 0 {
            return Err(Error::InvalidData(format!("no observations of process {p}")));
        }
    }
    let eval = LikelihoodEvaluator::new(model, data)?;
    let objective = |x: &[f64]| -> Result<f64> { Ok(-eval.eval(&ThetaVector::new(x.to_vec()))?) };
    let out = bfgs(&objective, init.as_slice(), &opts.optim)?;
    let mut theta_hat = ThetaVector::new(out.x);
    canonicalize(model, &mut theta_hat);
    let mut result = FitResult {
        param_names: model.layout().names().to_vec(),
        theta_hat,
        loglik: -out.f,
        converged: out.converged,
        iterations: out.iterations,
        grad_max: out.scaled_grad,
        message: out.message,
        hessian: None,
        vcov: None,
    };
    if opts.compute_hessian {
        let loglik = |x: &[f64]| -> Result<f64> { eval.eval(&ThetaVector::new(x.to_vec())) };
        let h = numerical_hessian(&loglik, result.theta_hat.as_slice(), opts.hessian_step)?;
        let neg = -&h;
        match neg.clone().cholesky() {
            Some(ch) => {
                let vcov = ch.inverse();
                result.vcov = Some((&vcov + vcov.transpose()) * 0.5);
            }
            None => {
                result.converged = false;
                result.message = format!(
                    "{}; negative Hessian is not positive definite",
                    result.message
                );
            }
        }
        result.hessian = Some(h);
    }
    Ok(result)
}

/// The likelihood is invariant to the sign of each error SD and of each
/// column of the Cholesky factor; report nonnegative SDs and diagonals.
pub(crate) fn canonicalize(model: &Model, theta: &mut ThetaVector) {
    let layout = model.layout();
    for p in model.processes() {
        if let Some(i) = layout.sigma_index(p) {
            theta[i] = theta[i].abs();
        }
    }
    let re = model.random_effects();
    let off = layout.chol_range().start;
    for col in 0..re.dim() {
        let diag = re.allowed.iter().position(|&rc| rc == (col, col));
        if diag.is_some_and(|d| theta[off + d] < 0.0) {
            for (k, _) in re.allowed.iter().enumerate().filter(|(_, rc)| rc.1 == col) {
                theta[off + k] = -theta[off + k];
            }
        }
    }
}

/// Deterministic starting values from per-marker least squares.
///
/// Each marker is regressed on its initial-level design plus its drift design
/// integrated over elapsed time. The residual SD seeds the random-intercept
/// diagonal, the residual SD over the time span seeds the random-slope
/// diagonal, and half of it seeds the error SD. Influence coefficients and
/// off-diagonal Cholesky entries start at 0.
pub fn default_init(model: &Model, data: &Dataset) -> Result<ThetaVector> {
    let mut theta = ThetaVector::zeros(model.n_params());
    let layout = model.layout();
    let re = model.random_effects();
    let chol = layout.chol_range();
    let origin = model.spec().origin;
    let diag_slot = |j: usize| {
        re.allowed
            .iter()
            .position(|&(r, c)| r == j && c == j)
            .map(|k| chol.start + k)
    };
    for cp in &model.procs {
        let p: Process = cp.kind;
        let ncol = cp.init.len() + cp.slope.len();
        let mut rows: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &data.subjects {
            let prof = model.profile(&s.covariates, true)?;
            for o in s.markers(p) {
                let e = o.time - origin;
                smin = smin.min(e);
                smax = smax.max(e);
                for t in &cp.init {
                    rows.push(t.value(&prof, 0.0));
                }
                for t in &cp.slope {
                    let integ = match t.time {
                        TimeFn::Const => e,
                        TimeFn::Linear => e * e / 2.0,
                        TimeFn::Quadratic => e * e * e / 3.0,
                    };
                    rows.push(t.base(&prof) * integ);
                }
                ys.push(o.value);
            }
        }
        let n = ys.len();
        let sd = if n > ncol {
            let x = DMatrix::from_row_slice(n, ncol, &rows);
            let y = DVector::from_vec(ys);
            let coef = x
                .clone()
                .svd(true, true)
                .solve(&y, 1e-10)
                .map_err(|e| Error::Singular(e.to_string()))?;
            for (i, c) in coef.iter().enumerate() {
                if i < cp.init.len() {
                    theta[cp.beta.start + i] = *c;
                } else {
                    theta[cp.gamma.start + i - cp.init.len()] = *c;
                }
            }
            let resid = &y - &x * &coef;
            (resid.norm_squared() / (n - ncol) as f64).sqrt().max(1e-3)
        } else {
            1.0
        };
        let span = if smax > smin { smax - smin } else { 1.0 };
        if let Some(k) = diag_slot(re.index_of(p, EffectKind::Level).unwrap()) {
            theta[k] = sd;
        }
        if let Some(j) = re.index_of(p, EffectKind::Slope) {
            if let Some(k) = diag_slot(j) {
                theta[k] = sd / span.max(1.0);
            }
        }
        theta[cp.sigma] = 0.5 * sd;
    }
    Ok(theta)
}

/// `r` draws from `N(theta_hat, vcov)`.
pub fn draw_theta(fit: &FitResult, r: usize, seed: u64) -> Result<Vec<ThetaVector>> {
    if r == 0 {
        return Err(Error::InvalidArgument("number of draws must be >= 1".into()));
    }
    if !fit.converged {
        return Err(Error::InvalidArgument("cannot draw from a non-converged fit".into()));
    }
    let vcov = fit
        .vcov
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("fit has no covariance matrix".into()))?;
    let l = vcov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("vcov is not positive definite".into()))?
        .unpack();
    let n = fit.theta_hat.len();
    let mut rng = rng_from(seed);
    let mean = DVector::from_column_slice(fit.theta_hat.as_slice());
    Ok((0..r)
        .map(|_| {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
            ThetaVector::new((&mean + &l * z).as_slice().to_vec())
        })
        .collect())
}
