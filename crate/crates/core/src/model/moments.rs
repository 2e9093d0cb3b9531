//! Dense marginal moments of a subject's stacked observation vector.

use nalgebra::{DMatrix, DVector};

use super::{Model, Process, ThetaVector};
use crate::data::SubjectRecord;
use crate::error::Result;

/// Observations are stacked L, then M, then Y, each in recorded order.
#[derive(Debug, Clone)]
pub struct MarginalMoments {
    pub observed: DVector<f64>,
    pub mean: DVector<f64>,
    /// Loading matrix `Phi` (n x q).
    pub loadings: DMatrix<f64>,
    /// `Phi D Phi' + diag(sigma^2)`.
    pub cov: DMatrix<f64>,
    pub markers: Vec<Process>,
}

pub fn marginal_moments(
    model: &Model,
    theta: &ThetaVector,
    subject: &SubjectRecord,
) -> Result<MarginalMoments> {
    let basis = model.propagate_basis(theta, subject)?;
    let q = basis.q;
    let n: usize = model.processes().map(|p| subject.markers(p).len()).sum();
    let mut observed = DVector::zeros(n);
    let mut mean = DVector::zeros(n);
    let mut loadings = DMatrix::zeros(n, q);
    let mut err = DVector::zeros(n);
    let mut markers = Vec::with_capacity(n);
    let mut r = 0;
    for p in model.processes() {
        let s2 = model.error_variance(theta, p).unwrap_or(0.0);
        for o in subject.markers(p) {
            let k = basis.grid.node_of(o.time)?;
            observed[r] = o.value;
            mean[r] = basis.mean(p, k);
            for (j, &v) in basis.loading(p, k).iter().enumerate() {
                loadings[(r, j)] = v;
            }
            err[r] = s2;
            markers.push(p);
            r += 1;
        }
    }
    let d = model.re_covariance(theta);
    let mut cov = &loadings * d * loadings.transpose();
    for i in 0..n {
        cov[(i, i)] += err[i];
    }
    Ok(MarginalMoments {
        observed,
        mean,
        loadings,
        cov,
        markers,
    })
}
