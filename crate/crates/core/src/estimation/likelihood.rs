//! Marginal Gaussian log-likelihood.
//!
//! Subjects sharing a covariate profile share their latent basis, so the
//! dataset is grouped by profile and each group is propagated once. Per
//! subject, `V = Phi D Phi' + S` is handled through the q x q matrix
//! `I + W'W` with `W = S^{-1/2} Phi L`, which avoids factorising `V`
//! directly. Rows with zero error variance fall back to a dense Cholesky.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Model, Process, ThetaVector, TimeGrid};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
struct Row {
    process: Process,
    node: usize,
    value: f64,
}

#[derive(Debug, Clone)]
struct PreparedSubject {
    id: String,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
struct ProfileGroup {
    profile: Vec<f64>,
    grid: TimeGrid,
    subjects: Vec<PreparedSubject>,
}

/// A dataset pre-processed for repeated likelihood evaluation under one
/// model: observation times are snapped once and subjects are grouped by
/// covariate profile.
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluator<'m> {
    model: &'m Model,
    groups: Vec<ProfileGroup>,
    n_subjects: usize,
}

impl<'m> LikelihoodEvaluator<'m> {
    pub fn new(model: &'m Model, data: &Dataset) -> Result<Self> {
        data.validate()?;
        let spec = model.spec();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut groups: Vec<ProfileGroup> = Vec::new();
        for s in &data.subjects {
            let profile = model.profile(&s.covariates, true)?;
            let mut rows = Vec::with_capacity(s.n_obs());
            let mut last_node = 0;
            for p in model.processes() {
                for o in s.markers(p) {
                    let g = TimeGrid::covering(spec.origin, spec.delta, o.time)?;
                    let node = g.nodes - 1;
                    last_node = last_node.max(node);
                    rows.push(Row {
                        process: p,
                        node,
                        value: o.value,
                    });
                }
            }
            for p in Process::ALL {
                if !model.has(p) && !s.markers(p).is_empty() {
                    return Err(Error::InvalidData(format!(
                        "subject `{}` has {p} observations but the model has no process {p}",
                        s.id
                    )));
                }
            }
            let key: Vec<u64> = profile.iter().map(|v| v.to_bits()).collect();
            let gi = *index.entry(key).or_insert_with(|| {
                groups.push(ProfileGroup {
                    profile,
                    grid: TimeGrid {
                        origin: spec.origin,
                        delta: spec.delta,
                        nodes: 1,
                    },
                    subjects: Vec::new(),
                });
                groups.len() - 1
            });
            let g = &mut groups[gi];
            g.grid.nodes = g.grid.nodes.max(last_node + 1);
            g.subjects.push(PreparedSubject {
                id: s.id.clone(),
                rows,
            });
        }
        Ok(LikelihoodEvaluator {
            model,
            groups,
            n_subjects: data.len(),
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    /// Total log-likelihood at `theta`.
    pub fn eval(&self, theta: &ThetaVector) -> Result<f64> {
        self.model.check_theta(theta)?;
        let model = self.model;
        let l = model.re_cholesky(theta);
        let q = l.nrows();
        let mut err_var = [0.0; 3];
        for p in model.processes() {
            err_var[p.index()] = model.error_variance(theta, p).unwrap_or(0.0);
        }

        let per_group: Vec<Result<f64>> = self
            .groups
            .par_iter()
            .map(|g| {
                let prof = g.profile.as_slice();
                let basis = model.propagate(theta, [prof, prof, prof], g.grid, true)?;
                // phi_p(k)' L for every node, shared by the group.
                let mut gl: [Vec<f64>; 3] = Default::default();
                for p in model.processes() {
                    let mut buf = vec![0.0; g.grid.nodes * q];
                    for k in 0..g.grid.nodes {
                        let phi = basis.loading(p, k);
                        for c in 0..q {
                            let mut acc = 0.0;
                            for (r, &ph) in phi.iter().enumerate().skip(c) {
                                acc += ph * l[(r, c)];
                            }
                            buf[k * q + c] = acc;
                        }
                    }
                    gl[p.index()] = buf;
                }
                let mut total = 0.0;
                for s in &g.subjects {
                    total += subject_loglik(s, &basis, &gl, &err_var, q)?;
                }
                Ok(total)
            })
            .collect();
        let mut total = 0.0;
        for r in per_group {
            total += r?;
        }
        Ok(total)
    }
}

fn subject_loglik(
    s: &PreparedSubject,
    basis: &crate::model::LatentAffineBasis,
    gl: &[Vec<f64>; 3],
    err_var: &[f64; 3],
    q: usize,
) -> Result<f64> {
    let n = s.rows.len();
    if n == 0 {
        return Ok(0.0);
    }
    let row_g = |r: &Row| &gl[r.process.index()][r.node * q..(r.node + 1) * q];
    if s.rows.iter().any(|r| err_var[r.process.index()] <= 0.0) {
        return dense_loglik(s, basis, &row_g, err_var);
    }

    let mut a = DMatrix::<f64>::identity(q, q);
    let mut c = DVector::<f64>::zeros(q);
    let mut rr = 0.0;
    let mut logdet_s = 0.0;
    for r in &s.rows {
        let s2 = err_var[r.process.index()];
        let inv_sd = 1.0 / s2.sqrt();
        let resid = (r.value - basis.mean(r.process, r.node)) * inv_sd;
        let g = row_g(r);
        for i in 0..q {
            let wi = g[i] * inv_sd;
            if wi == 0.0 {
                continue;
            }
            c[i] += wi * resid;
            for j in 0..=i {
                a[(i, j)] += wi * g[j] * inv_sd;
            }
        }
        rr += resid * resid;
        logdet_s += s2.ln();
    }
    for i in 0..q {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    let chol = a.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        subject: s.id.clone(),
    })?;
    let logdet_a: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sol = chol.solve(&c);
    let quad = rr - c.dot(&sol);
    let ll = -0.5 * (n as f64 * LN_2PI + logdet_s + logdet_a + quad);
    if !ll.is_finite() {
        return Err(Error::NotPositiveDefinite {
            subject: s.id.clone(),
        });
    }
    Ok(ll)
}

fn dense_loglik<'a>(
    s: &PreparedSubject,
    basis: &crate::model::LatentAffineBasis,
    row_g: &dyn Fn(&Row) -> &'a [f64],
    err_var: &[f64; 3],
) -> Result<f64> {
    let n = s.rows.len();
    let mut v = DMatrix::<f64>::zeros(n, n);
    let mut resid = DVector::<f64>::zeros(n);
    for (i, ri) in s.rows.iter().enumerate() {
        resid[i] = ri.value - basis.mean(ri.process, ri.node);
        let gi = row_g(ri);
        for (j, rj) in s.rows.iter().enumerate().take(i + 1) {
            let gj = row_g(rj);
            let d: f64 = gi.iter().zip(gj).map(|(a, b)| a * b).sum();
            v[(i, j)] = d;
            v[(j, i)] = d;
        }
        v[(i, i)] += err_var[ri.process.index()];
    }
    dense_gaussian_logpdf(&resid, v).ok_or_else(|| Error::NotPositiveDefinite {
        subject: s.id.clone(),
    })
}

/// `log N(resid; 0, v)`, `None` when `v` is not positive definite.
pub(crate) fn dense_gaussian_logpdf(resid: &DVector<f64>, v: DMatrix<f64>) -> Option<f64> {
    let n = resid.len();
    let chol = v.cholesky()?;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = resid.dot(&chol.solve(resid));
    let ll = -0.5 * (n as f64 * LN_2PI + logdet + quad);
    ll.is_finite().then_some(ll)
}

/// Sum over subjects of the log density of their stacked observations.
pub fn log_likelihood(model: &Model, theta: &ThetaVector, data: &Dataset) -> Result<f64> {
    LikelihoodEvaluator::new(model, data)?.eval(theta)
}
