//! Finite-difference derivatives and a BFGS minimiser.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Central-difference step for coordinate value `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Per-coordinate step of [`numerical_hessian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `eps^(1/3) max(1, |x|)`, the gradient step.
    #[default]
    CubeRoot,
    /// `eps^(1/4) max(1, |x|)`. Balances truncation against roundoff for
    /// second differences; preferable when `|f|` is large.
    FourthRoot,
}

impl StepRule {
    pub fn step(self, x: f64) -> f64 {
        match self {
            StepRule::CubeRoot => fd_step(x),
            StepRule::FourthRoot => f64::EPSILON.powf(0.25) * x.abs().max(1.0),
        }
    }
}

/// Central-difference gradient, plus the diagonal second differences that
/// come for free from the same evaluations.
pub fn numerical_gradient<F>(f: &F, x: &[f64], fx: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut curv = vec![0.0; n];
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = fd_step(x[k]);
        xp[k] = x[k] + h;
        let fp = f(&xp).ok().filter(|v| v.is_finite());
        xp[k] = x[k] - h;
        let fm = f(&xp).ok().filter(|v| v.is_finite());
        xp[k] = x[k];
        match (fp, fm) {
            (Some(a), Some(b)) => {
                g[k] = (a - b) / (2.0 * h);
                curv[k] = (a - 2.0 * fx + b) / (h * h);
            }
            (Some(a), None) => g[k] = (a - fx) / h,
            (None, Some(b)) => g[k] = (fx - b) / h,
            (None, None) => {
                return Err(Error::Objective(format!(
                    "objective undefined on both sides of coordinate {k}"
                )))
            }
        }
    }
    Ok((g, curv))
}

/// Symmetric central-difference Hessian with steps `eps^(1/3) * max(1, |x_k|)`.
pub fn numerical_hessian<F>(f: &F, x: &[f64], rule: StepRule) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let eval = |p: &[f64]| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Objective("non-finite value during Hessian evaluation".into()))
        }
    };
    let f0 = eval(x)?;
    let h: Vec<f64> = x.iter().map(|&v| rule.step(v)).collect();
    let mut hess = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h[i];
        let fp = eval(&p)?;
        p[i] = x[i] - h[i];
        let fm = eval(&p)?;
        p[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in 0..i {
            let mut quad = [0.0; 4];
            for (slot, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .into_iter()
                .enumerate()
            {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                quad[slot] = eval(&p)?;
            }
            p[i] = x[i];
            p[j] = x[j];
            let v = (quad[0] - quad[1] - quad[2] + quad[3]) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Relative change of the objective between accepted iterates.
    pub rel_tol: f64,
    /// Bound on `max_k |g_k| * max(|x_k|, 1) / max(|f|, 1)`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            rel_tol: 1e-8,
            grad_tol: 1e-4,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub scaled_grad: f64,
    pub converged: bool,
    pub message: String,
}

fn scaled_gradient(g: &[f64], x: &[f64], f: f64) -> f64 {
    let fs = f.abs().max(1.0);
    g.iter()
        .zip(x)
        .map(|(gk, xk)| gk.abs() * xk.abs().max(1.0) / fs)
        .fold(0.0, f64::max)
}

fn diagonal_inverse(curv: &[f64], g: &[f64]) -> DMatrix<f64> {
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    DMatrix::from_diagonal(&DVector::from_iterator(
        curv.len(),
        curv.iter().map(|&c| {
            if c.is_finite() && c > 1e-8 {
                1.0 / c
            } else {
                1.0 / gnorm
            }
        }),
    ))
}

/// Minimises `f` by BFGS with backtracking Armijo line search and
/// finite-difference gradients. Evaluation failures inside the line search
/// are treated as `+inf`.
pub fn bfgs<F>(f: &F, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x0)?;
    if !fx.is_finite() {
        return Err(Error::Objective("objective is not finite at the initial point".into()));
    }
    let (g0, curv) = numerical_gradient(f, x.as_slice(), fx)?;
    let mut g = DVector::from_vec(g0);
    let mut hinv = diagonal_inverse(&curv, g.as_slice());
    let mut last_curv = curv;

    let mut iterations = 0;
    let mut scaled = scaled_gradient(g.as_slice(), x.as_slice(), fx);
    let mut rel_change = f64::INFINITY;
    let mut message = String::from("iteration limit reached");
    let mut converged = false;
    let mut reset_used = false;

    while iterations < opts.max_iter {
        if rel_change < opts.rel_tol && scaled < opts.grad_tol {
            converged = true;
            message = "converged".into();
            break;
        }
        iterations += 1;
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hinv = diagonal_inverse(&last_curv, g.as_slice());
            d = -(&hinv * &g);
            slope = g.dot(&d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + step * &d;
            if let Ok(fnew) = f(xn.as_slice()) {
                if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if !reset_used {
                reset_used = true;
                hinv = diagonal_inverse(&last_curv, g.as_slice());
                continue;
            }
            message = if scaled < opts.grad_tol {
                converged = true;
                "converged (no further decrease possible)".into()
            } else {
                "line search failed".into()
            };
            break;
        };
        reset_used = false;

        let (gn, curv) = numerical_gradient(f, xn.as_slice(), fnew)?;
        let gn = DVector::from_vec(gn);
        last_curv = curv;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv -= rho * (&hy * s.transpose() + &s * hy.transpose());
            hinv += (rho * rho * yhy + rho) * (&s * s.transpose());
        }
        rel_change = (fx - fnew).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gn;
        scaled = scaled_gradient(g.as_slice(), x.as_slice(), fx);
    }
    if !converged && rel_change < opts.rel_tol && scaled < opts.grad_tol {
        converged = true;
        message = "converged".into();
    }
    debug_assert_eq!(x.len(), n);
    Ok(OptimOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        scaled_grad: scaled,
        converged,
        message,
    })
}
