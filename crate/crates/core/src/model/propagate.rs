//! Forward-Euler propagation of the latent system.
//!
//! For fixed parameters and covariates the recursion is linear in the random
//! effects `b`, so every latent value is `m(t) + phi(t)' b`. Propagating the
//! pair `(m, phi)` once per covariate profile gives both the marginal mean and
//! the loading matrix used by the likelihood.

use super::{Model, Process, ThetaVector};
use crate::error::{Error, Result};

/// Uniform grid `origin + k * delta`, `k = 0..nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub origin: f64,
    pub delta: f64,
    pub nodes: usize,
}

impl TimeGrid {
    /// Smallest grid that contains the node nearest to `last`.
    pub fn covering(origin: f64, delta: f64, last: f64) -> Result<Self> {
        let k = node_index(origin, delta, last)?;
        Ok(TimeGrid {
            origin,
            delta,
            nodes: k + 1,
        })
    }

    /// Index of the node nearest to `t`.
    pub fn node_of(&self, t: f64) -> Result<usize> {
        let k = node_index(self.origin, self.delta, t)?;
        if k >= self.nodes {
            return Err(Error::InvalidArgument(format!(
                "time {t} lies beyond the propagated grid ({} nodes)",
                self.nodes
            )));
        }
        Ok(k)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.delta
    }
}

fn node_index(origin: f64, delta: f64, t: f64) -> Result<usize> {
    let r = ((t - origin) / delta).round();
    if !r.is_finite() || r < 0.0 {
        return Err(Error::TimeOutsideGrid { time: t, origin });
    }
    Ok(r as usize)
}

/// Latent trajectories as affine functions of the random-effects vector.
#[derive(Debug, Clone)]
pub struct LatentAffineBasis {
    pub grid: TimeGrid,
    /// Random-effects dimension.
    pub q: usize,
    slot: [Option<usize>; 3],
    mean: Vec<Vec<f64>>,
    load: Vec<Vec<f64>>,
}

impl LatentAffineBasis {
    fn slot(&self, p: Process) -> usize {
        self.slot[p.index()].unwrap_or_else(|| panic!("process {p} is not part of the model"))
    }

    pub fn has_loadings(&self) -> bool {
        self.load.first().is_some_and(|l| !l.is_empty())
    }

    /// `E[latent_p(t_k) | b = 0]`.
    pub fn mean(&self, p: Process, k: usize) -> f64 {
        self.mean[self.slot(p)][k]
    }

    pub fn mean_path(&self, p: Process) -> &[f64] {
        &self.mean[self.slot(p)]
    }

    /// Row `phi_p(t_k)`; empty for a mean-only basis.
    pub fn loading(&self, p: Process, k: usize) -> &[f64] {
        let l = &self.load[self.slot(p)];
        if l.is_empty() {
            return &[];
        }
        &l[k * self.q..(k + 1) * self.q]
    }

    /// Latent value at node `k` for random effects `b`.
    pub fn value(&self, p: Process, k: usize, b: &[f64]) -> f64 {
        let phi = self.loading(p, k);
        self.mean(p, k) + phi.iter().zip(b).map(|(a, c)| a * c).sum::<f64>()
    }
}

impl Model {
    /// Propagates the basis on `grid`. `profiles[p]` is the covariate slot
    /// vector used for process `p` (its design and its incoming influences),
    /// which lets each process see a different exposure level.
    pub fn propagate(
        &self,
        theta: &ThetaVector,
        profiles: [&[f64]; 3],
        grid: TimeGrid,
        with_loadings: bool,
    ) -> Result<LatentAffineBasis> {
        self.check_theta(theta)?;
        let th = theta.as_slice();
        let np = self.procs.len();
        let q = self.random_effects().dim();
        let n = grid.nodes;
        let delta = grid.delta;

        let edge_alpha: Vec<f64> = self
            .edges
            .iter()
            .map(|e| {
                let prof = profiles[self.procs[e.to].kind.index()];
                let a = &th[e.alpha.clone()];
                a[0] + e.modifiers.iter().zip(&a[1..]).map(|(&s, c)| prof[s] * c).sum::<f64>()
            })
            .collect();

        let mut mean = vec![vec![0.0; n]; np];
        let mut load = vec![if with_loadings { vec![0.0; n * q] } else { Vec::new() }; np];
        let mut drift_const = vec![0.0; np];
        for (i, cp) in self.procs.iter().enumerate() {
            let prof = profiles[cp.kind.index()];
            mean[i][0] = cp
                .init
                .iter()
                .zip(&th[cp.beta.clone()])
                .map(|(t, b)| t.value(prof, 0.0) * b)
                .sum();
            if with_loadings {
                load[i][cp.u] = 1.0;
            }
            if !cp.time_varying_drift {
                drift_const[i] = drift(cp, prof, &th[cp.gamma.clone()], 0.0);
            }
            if !mean[i][0].is_finite() {
                return Err(Error::NonFinite {
                    process: cp.kind.label(),
                    node: 0,
                    time: grid.origin,
                });
            }
        }

        for k in 0..n.saturating_sub(1) {
            let s = k as f64 * delta;
            for (i, cp) in self.procs.iter().enumerate() {
                let mut d = if cp.time_varying_drift {
                    drift(cp, profiles[cp.kind.index()], &th[cp.gamma.clone()], s)
                } else {
                    drift_const[i]
                };
                for &e in &cp.incoming {
                    d += edge_alpha[e] * mean[self.edges[e].from][k];
                }
                let next = mean[i][k] + delta * d;
                if !next.is_finite() {
                    return Err(Error::NonFinite {
                        process: cp.kind.label(),
                        node: k + 1,
                        time: grid.time(k + 1),
                    });
                }
                mean[i][k + 1] = next;

                if with_loadings {
                    let (cur, nxt) = (k * q, (k + 1) * q);
                    for j in 0..q {
                        let mut dl = if Some(j) == cp.v { 1.0 } else { 0.0 };
                        for &e in &cp.incoming {
                            dl += edge_alpha[e] * load[self.edges[e].from][cur + j];
                        }
                        let v = load[i][cur + j] + delta * dl;
                        if !v.is_finite() {
                            return Err(Error::NonFinite {
                                process: cp.kind.label(),
                                node: k + 1,
                                time: grid.time(k + 1),
                            });
                        }
                        load[i][nxt + j] = v;
                    }
                }
            }
        }

        let mut slot = [None; 3];
        for p in Process::ALL {
            slot[p.index()] = self.proc_index(p);
        }
        Ok(LatentAffineBasis {
            grid,
            q,
            slot,
            mean,
            load,
        })
    }
}

#[inline]
fn drift(cp: &super::CompiledProcess, profile: &[f64], gamma: &[f64], s: f64) -> f64 {
    cp.slope
        .iter()
        .zip(gamma)
        .map(|(t, g)| t.value(profile, s) * g)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::no_l_spec;

    #[test]
    fn grid_snaps_to_nearest_node() {
        let g = TimeGrid::covering(0.0, 0.1, 1.04).unwrap();
        assert_eq!(g.nodes, 11);
        assert_eq!(g.node_of(0.26).unwrap(), 3);
        assert!(g.node_of(1.2).is_err());
        assert!(matches!(
            TimeGrid::covering(65.0, 1.0, 60.0),
            Err(Error::TimeOutsideGrid { .. })
        ));
    }

    #[test]
    fn closed_form_without_influences() {
        // With no edges, M(t_k) = beta'x + u + k*delta*(gamma'x + v).
        let mut spec = no_l_spec();
        spec.influences.clear();
        let m = Model::new(spec).unwrap();
        let mut theta = ThetaVector::zeros(m.n_params());
        let l = m.layout();
        theta[l.index_of("beta.M.intercept").unwrap()] = 1.5;
        theta[l.index_of("beta.M.X").unwrap()] = 0.5;
        theta[l.index_of("gamma.M.intercept").unwrap()] = -0.3;
        theta[l.index_of("gamma.M.X").unwrap()] = 0.2;
        let prof = vec![1.0];
        let grid = TimeGrid::covering(0.0, 0.1, 2.0).unwrap();
        let b = m.propagate(&theta, [&prof, &prof, &prof], grid, true).unwrap();
        let rand = [0.4, -0.2, 0.7, 0.1];
        for k in 0..grid.nodes {
            let t = k as f64 * 0.1;
            let expect = 2.0 + 0.4 + t * (-0.1 + 0.7);
            assert!((b.value(Process::M, k, &rand) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_recursion_matches() {
        let m = Model::new(no_l_spec()).unwrap();
        let theta = ThetaVector::new((0..m.n_params()).map(|i| 0.1 * (i as f64 % 5.0) - 0.15).collect());
        let l = m.layout();
        let g = |n: &str| theta[l.index_of(n).unwrap()];
        let x = 1.0;
        let b = [0.3, -0.4, 0.2, 0.5];
        let grid = TimeGrid::covering(0.0, 0.1, 3.0).unwrap();
        let prof = vec![x];
        let basis = m.propagate(&theta, [&prof, &prof, &prof], grid, true).unwrap();
        let mut mv = g("beta.M.intercept") + g("beta.M.X") * x + b[0];
        let mut yv = g("beta.Y.intercept") + g("beta.Y.X") * x + b[1];
        for k in 0..grid.nodes {
            assert!((basis.value(Process::M, k, &b) - mv).abs() < 1e-12);
            assert!((basis.value(Process::Y, k, &b) - yv).abs() < 1e-12);
            let dm = g("gamma.M.intercept") + g("gamma.M.X") * x + b[2];
            let dy = g("gamma.Y.intercept") + g("gamma.Y.X") * x + b[3] + g("alpha.YM.0") * mv;
            mv += 0.1 * dm;
            yv += 0.1 * dy;
        }
    }

    #[test]
    fn explosive_drift_is_reported() {
        let m = Model::new(no_l_spec()).unwrap();
        let mut theta = ThetaVector::zeros(m.n_params());
        theta[m.layout().index_of("beta.M.intercept").unwrap()] = 1e300;
        theta[m.layout().index_of("alpha.YM.0").unwrap()] = 1e300;
        let prof = vec![0.0];
        let grid = TimeGrid::covering(0.0, 0.1, 1.0).unwrap();
        let err = m.propagate(&theta, [&prof, &prof, &prof], grid, false).unwrap_err();
        assert!(matches!(err, Error::NonFinite { process: 'Y', .. }));
    }
}
