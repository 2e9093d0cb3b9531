//! Projections onto closed convex cones in the `H^-1` metric and the
//! resulting one-sided score statistic.

use nalgebra::{DMatrix, DVector};

use super::{BoundaryTestResult, ChiBarMixture, Sided};
use crate::error::{Error, Result};

/// Minimiser of `(z - b)' A (z - b)` over a cone, and the minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: DVector<f64>,
    pub distance: f64,
}

pub trait ConeProjector: Sync {
    /// Projects `z` in the metric `a` (symmetric positive definite).
    fn project(&self, z: &DVector<f64>, a: &DMatrix<f64>) -> Result<Projection>;
}

fn quad(z: &DVector<f64>, b: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    let e = z - b;
    e.dot(&(a * &e))
}

/// The unconstrained case: every `z` is its own projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeSpace;

impl ConeProjector for WholeSpace {
    fn project(&self, z: &DVector<f64>, _a: &DMatrix<f64>) -> Result<Projection> {
        Ok(Projection {
            point: z.clone(),
            distance: 0.0,
        })
    }
}

/// `{b : b >= 0}`. Solved exactly by enumerating active sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonnegativeOrthant;

const MAX_ORTHANT_DIM: usize = 16;

impl ConeProjector for NonnegativeOrthant {
    fn project(&self, z: &DVector<f64>, a: &DMatrix<f64>) -> Result<Projection> {
        let d = z.len();
        if d > MAX_ORTHANT_DIM {
            return Err(Error::Unsupported(format!(
                "orthant projection is enumerated exactly up to dimension {MAX_ORTHANT_DIM}"
            )));
        }
        if z.iter().all(|&v| v >= 0.0) {
            return Ok(Projection {
                point: z.clone(),
                distance: 0.0,
            });
        }
        let mut best: Option<Projection> = None;
        for mask in 0u32..(1 << d) {
            // Bits set: coordinates held at zero.
            let fixed: Vec<usize> = (0..d).filter(|&i| mask >> i & 1 == 1).collect();
            let free: Vec<usize> = (0..d).filter(|&i| mask >> i & 1 == 0).collect();
            let mut b = DVector::zeros(d);
            if !free.is_empty() {
                let aff = DMatrix::from_fn(free.len(), free.len(), |i, j| a[(free[i], free[j])]);
                let afs = DMatrix::from_fn(free.len(), fixed.len(), |i, j| a[(free[i], fixed[j])]);
                let zs = DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| z[i]));
                let shift = match aff.cholesky() {
                    Some(ch) => ch.solve(&(afs * zs)),
                    None => return Err(Error::Singular("cone metric".into())),
                };
                for (k, &i) in free.iter().enumerate() {
                    b[i] = z[i] + shift[k];
                }
            }
            if b.iter().any(|&v| v < 0.0) {
                continue;
            }
            let distance = quad(z, &b, a);
            if best.as_ref().is_none_or(|p| distance < p.distance) {
                best = Some(Projection { point: b, distance });
            }
        }
        best.ok_or_else(|| Error::Objective("no feasible active set".into()))
    }
}

/// `{(d12, d22) : [[d11, d12], [d12, d22]] PSD}` for a fixed `d11 > 0`.
///
/// For fixed `d12` the best `d22` is the larger of the boundary value
/// `d12^2 / d11` and the unconstrained minimiser; the profiled objective is
/// convex in `d12` and minimised by golden-section search.
#[derive(Debug, Clone, Copy)]
pub struct PsdCompletion2x2 {
    pub d11: f64,
}

impl PsdCompletion2x2 {
    fn profile(&self, z: &DVector<f64>, a: &DMatrix<f64>, d12: f64) -> (f64, f64) {
        let boundary = d12 * d12 / self.d11;
        let free = z[1] - a[(0, 1)] * (d12 - z[0]) / a[(1, 1)];
        let d22 = boundary.max(free);
        let b = DVector::from_vec(vec![d12, d22]);
        (d22, quad(z, &b, a))
    }
}

impl ConeProjector for PsdCompletion2x2 {
    fn project(&self, z: &DVector<f64>, a: &DMatrix<f64>) -> Result<Projection> {
        if z.len() != 2 || a.shape() != (2, 2) {
            return Err(Error::InvalidArgument("PSD completion works in dimension 2".into()));
        }
        if !(self.d11 > 0.0) {
            return Err(Error::InvalidArgument(format!("d11 must be > 0, got {}", self.d11)));
        }
        if z[1] >= 0.0 && z[0] * z[0] <= self.d11 * z[1] {
            return Ok(Projection {
                point: z.clone(),
                distance: 0.0,
            });
        }
        let lmin = a.clone().symmetric_eigen().eigenvalues.min();
        if !(lmin > 0.0) {
            return Err(Error::Singular("cone metric".into()));
        }
        // Any minimiser is no farther from z than the feasible point (0, max(z2, 0)).
        let start = DVector::from_vec(vec![0.0, z[1].max(0.0)]);
        let radius = (quad(z, &start, a) / lmin).sqrt();
        let (mut lo, mut hi) = (z[0] - radius, z[0] + radius);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = self.profile(z, a, x1).1;
        let mut f2 = self.profile(z, a, x2).1;
        for _ in 0..200 {
            if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = self.profile(z, a, x1).1;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = self.profile(z, a, x2).1;
            }
        }
        let d12 = 0.5 * (lo + hi);
        let (d22, distance) = self.profile(z, a, d12);
        Ok(Projection {
            point: DVector::from_vec(vec![d12, d22]),
            distance,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeScore {
    pub result: BoundaryTestResult,
    /// `Z' H^-1 Z`.
    pub unconstrained: f64,
    pub projection: Projection,
}

/// `T = Z' H^-1 Z - inf_{b in C} (Z - b)' H^-1 (Z - b)`.
pub fn score_one_sided_cone(
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    projector: &dyn ConeProjector,
    mixture: ChiBarMixture,
) -> Result<ConeScore> {
    if h.shape() != (z.len(), z.len()) {
        return Err(Error::InvalidArgument("H must be square and match Z".into()));
    }
    let hinv = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("score information H".into()))?
        .inverse();
    let unconstrained = z.dot(&(&hinv * z));
    let projection = projector.project(z, &hinv)?;
    let t = (unconstrained - projection.distance).max(0.0);
    Ok(ConeScore {
        result: BoundaryTestResult::new(t, mixture, Sided::One)?,
        unconstrained,
        projection,
    })
}
