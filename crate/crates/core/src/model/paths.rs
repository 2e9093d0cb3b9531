//! Direct scalar simulation of latent trajectories for a given random-effects
//! draw. Used for data generation and Monte-Carlo evaluation; it does not go
//! through the affine basis.

use super::{Model, Process, ThetaVector, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LatentPaths {
    pub grid: TimeGrid,
    paths: [Vec<f64>; 3],
}

impl LatentPaths {
    pub fn path(&self, p: Process) -> &[f64] {
        &self.paths[p.index()]
    }

    pub fn at(&self, p: Process, k: usize) -> f64 {
        self.paths[p.index()][k]
    }
}

impl Model {
    /// Euler recursion for one individual with random effects `b` (ordered
    /// as [`super::RandomEffectsStructure::effects`]).
    pub fn simulate_latent(
        &self,
        theta: &ThetaVector,
        profiles: [&[f64]; 3],
        b: &[f64],
        grid: TimeGrid,
    ) -> Result<LatentPaths> {
        self.check_theta(theta)?;
        if b.len() != self.random_effects().dim() {
            return Err(Error::InvalidArgument(format!(
                "random-effects vector has length {}, expected {}",
                b.len(),
                self.random_effects().dim()
            )));
        }
        let th = theta.as_slice();
        let mut paths: [Vec<f64>; 3] = Default::default();
        let mut cur = [0.0; 3];
        for cp in &self.procs {
            let prof = profiles[cp.kind.index()];
            let beta = &th[cp.beta.clone()];
            cur[cp.kind.index()] =
                cp.init.iter().zip(beta).map(|(t, c)| t.value(prof, 0.0) * c).sum::<f64>() + b[cp.u];
            paths[cp.kind.index()] = Vec::with_capacity(grid.nodes);
        }
        for k in 0..grid.nodes {
            for cp in &self.procs {
                let v = cur[cp.kind.index()];
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        process: cp.kind.label(),
                        node: k,
                        time: grid.time(k),
                    });
                }
                paths[cp.kind.index()].push(v);
            }
            if k + 1 == grid.nodes {
                break;
            }
            let s = k as f64 * grid.delta;
            let mut next = cur;
            for cp in &self.procs {
                let prof = profiles[cp.kind.index()];
                let gamma = &th[cp.gamma.clone()];
                let mut d: f64 = cp.slope.iter().zip(gamma).map(|(t, c)| t.value(prof, s) * c).sum();
                if let Some(j) = cp.v {
                    d += b[j];
                }
                for &e in &cp.incoming {
                    let edge = &self.edges[e];
                    let a = &th[edge.alpha.clone()];
                    let coef = a[0]
                        + edge.modifiers.iter().zip(&a[1..]).map(|(&m, c)| prof[m] * c).sum::<f64>();
                    d += coef * cur[self.procs[edge.from].kind.index()];
                }
                next[cp.kind.index()] = cur[cp.kind.index()] + grid.delta * d;
            }
            cur = next;
        }
        Ok(LatentPaths { grid, paths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::no_l_spec;

    #[test]
    fn agrees_with_affine_basis() {
        let m = Model::new(no_l_spec()).unwrap();
        let theta = ThetaVector::new((0..m.n_params()).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.11).collect());
        let grid = TimeGrid::covering(0.0, 0.1, 4.0).unwrap();
        let prof = vec![1.0];
        let basis = m.propagate(&theta, [&prof, &prof, &prof], grid, true).unwrap();
        let b = [0.2, -0.7, 0.05, 0.3];
        let paths = m.simulate_latent(&theta, [&prof, &prof, &prof], &b, grid).unwrap();
        for k in 0..grid.nodes {
            for p in [Process::M, Process::Y] {
                assert!((paths.at(p, k) - basis.value(p, k, &b)).abs() < 1e-12);
            }
        }
    }
}
