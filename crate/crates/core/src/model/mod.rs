//! The three-process structural model, its Euler discretisation, and the
//! affine maps from parameters and random effects to latent trajectories and
//! marginal observation moments.

mod layout;
mod moments;
mod paths;
mod propagate;
mod random_effects;
mod spec;

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::DMatrix;

pub use layout::{ParamLayout, ThetaVector};
pub use moments::{marginal_moments, MarginalMoments};
pub use paths::LatentPaths;
pub use propagate::{LatentAffineBasis, TimeGrid};
pub use random_effects::{EffectKind, RandomEffect, RandomEffectsStructure};
pub use spec::{Influence, ModelSpec, Process, ProcessSpec, Term, TimeFn, Timescale};

use crate::data::{Covariates, SubjectRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct CompiledTerm {
    /// Covariate slot, `None` for the intercept.
    pub slot: Option<usize>,
    pub time: TimeFn,
}

impl CompiledTerm {
    #[inline]
    pub fn base(&self, profile: &[f64]) -> f64 {
        match self.slot {
            Some(i) => profile[i],
            None => 1.0,
        }
    }

    #[inline]
    pub fn value(&self, profile: &[f64], s: f64) -> f64 {
        self.base(profile) * self.time.eval(s)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledProcess {
    pub kind: Process,
    pub init: Vec<CompiledTerm>,
    pub slope: Vec<CompiledTerm>,
    pub u: usize,
    pub v: Option<usize>,
    pub beta: Range<usize>,
    pub gamma: Range<usize>,
    pub sigma: usize,
    /// Indices into `Model::edges` of influences arriving at this process.
    pub incoming: Vec<usize>,
    pub time_varying_drift: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledEdge {
    pub from: usize,
    pub to: usize,
    pub modifiers: Vec<usize>,
    pub alpha: Range<usize>,
}

/// A validated [`ModelSpec`] together with its parameter layout and
/// random-effects structure. All numerical entry points take a `&Model`.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    covariates: Vec<String>,
    exposure_slot: usize,
    pub(crate) procs: Vec<CompiledProcess>,
    proc_slot: [Option<usize>; 3],
    pub(crate) edges: Vec<CompiledEdge>,
    re: RandomEffectsStructure,
    layout: ParamLayout,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;

        // Covariate slots: every referenced name plus the exposure, sorted.
        let mut names = BTreeSet::new();
        names.insert(spec.exposure.clone());
        for ps in spec.processes.values() {
            for t in ps.init.iter().chain(&ps.slope) {
                if let Some(c) = &t.covariate {
                    names.insert(c.clone());
                }
            }
        }
        for e in &spec.influences {
            names.extend(e.modifiers.iter().cloned());
        }
        let covariates: Vec<String> = names.into_iter().collect();
        let slot_of = |n: &str| covariates.iter().position(|c| c == n).expect("slot");
        let exposure_slot = slot_of(&spec.exposure);

        let present: Vec<(Process, bool)> = Process::ALL
            .iter()
            .filter_map(|&p| spec.process(p).map(|ps| (p, ps.random_slope)))
            .collect();
        let re = RandomEffectsStructure::new(&present);

        let mut edges_sorted = spec.influences.clone();
        edges_sorted.sort_by_key(|e| (e.from, e.to));

        let mut lb = ParamLayout::builder();
        let mut beta: [Range<usize>; 3] = [0..0, 0..0, 0..0];
        let mut gamma: [Range<usize>; 3] = [0..0, 0..0, 0..0];
        let mut sigma = [None; 3];
        for &(p, _) in &present {
            let ps = spec.process(p).unwrap();
            beta[p.index()] = lb.block(ps.init.iter().map(|t| format!("beta.{p}.{t}")));
        }
        for &(p, _) in &present {
            let ps = spec.process(p).unwrap();
            gamma[p.index()] = lb.block(ps.slope.iter().map(|t| format!("gamma.{p}.{t}")));
        }
        let chol = lb.block(re.positions.iter().map(|k| format!("chol.{k}")));
        let mut alpha = Vec::new();
        for e in &edges_sorted {
            let tag = e.tag();
            let names = std::iter::once(format!("alpha.{tag}.0"))
                .chain(e.modifiers.iter().map(|m| format!("alpha.{tag}.{m}")));
            alpha.push(lb.block(names));
        }
        for &(p, _) in &present {
            sigma[p.index()] = Some(lb.push(format!("sigma.{p}")));
        }
        let layout = lb.finish(chol, sigma)?;

        let mut proc_slot = [None; 3];
        for (i, &(p, _)) in present.iter().enumerate() {
            proc_slot[p.index()] = Some(i);
        }
        let compile_terms = |terms: &[Term]| -> Vec<CompiledTerm> {
            terms
                .iter()
                .map(|t| CompiledTerm {
                    slot: t.covariate.as_deref().map(slot_of),
                    time: t.time,
                })
                .collect()
        };
        let edges: Vec<CompiledEdge> = edges_sorted
            .iter()
            .zip(&alpha)
            .map(|(e, a)| CompiledEdge {
                from: proc_slot[e.from.index()].unwrap(),
                to: proc_slot[e.to.index()].unwrap(),
                modifiers: e.modifiers.iter().map(|m| slot_of(m)).collect(),
                alpha: a.clone(),
            })
            .collect();
        let procs = present
            .iter()
            .enumerate()
            .map(|(i, &(p, _))| {
                let ps = spec.process(p).unwrap();
                CompiledProcess {
                    kind: p,
                    init: compile_terms(&ps.init),
                    slope: compile_terms(&ps.slope),
                    u: re.index_of(p, EffectKind::Level).unwrap(),
                    v: re.index_of(p, EffectKind::Slope),
                    beta: beta[p.index()].clone(),
                    gamma: gamma[p.index()].clone(),
                    sigma: sigma[p.index()].unwrap(),
                    incoming: edges
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.to == i)
                        .map(|(k, _)| k)
                        .collect(),
                    time_varying_drift: ps.slope.iter().any(|t| t.time != TimeFn::Const),
                }
            })
            .collect();

        Ok(Model {
            spec,
            covariates,
            exposure_slot,
            procs,
            proc_slot,
            edges,
            re,
            layout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub fn random_effects(&self) -> &RandomEffectsStructure {
        &self.re
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariates
    }

    pub fn exposure_slot(&self) -> usize {
        self.exposure_slot
    }

    pub fn has(&self, p: Process) -> bool {
        self.proc_slot[p.index()].is_some()
    }

    pub(crate) fn proc_index(&self, p: Process) -> Option<usize> {
        self.proc_slot[p.index()]
    }

    pub fn processes(&self) -> impl Iterator<Item = Process> + '_ {
        self.procs.iter().map(|p| p.kind)
    }

    pub fn grid(&self, last_time: f64) -> Result<TimeGrid> {
        TimeGrid::covering(self.spec.origin, self.spec.delta, last_time)
    }

    /// Slot vector for a named covariate map. A missing exposure is filled
    /// with 0 unless `require_exposure`; any other missing name is an error.
    pub fn profile(&self, covs: &Covariates, require_exposure: bool) -> Result<Vec<f64>> {
        self.covariates
            .iter()
            .enumerate()
            .map(|(i, name)| match covs.get(name) {
                Some(&v) => Ok(v),
                None if i == self.exposure_slot && !require_exposure => Ok(0.0),
                None => Err(Error::InvalidData(format!("missing covariate `{name}`"))),
            })
            .collect()
    }

    /// Copy of `profile` with the exposure slot set to `x`.
    pub fn with_exposure(&self, profile: &[f64], x: f64) -> Vec<f64> {
        let mut p = profile.to_vec();
        p[self.exposure_slot] = x;
        p
    }

    pub fn chol<'a>(&self, theta: &'a ThetaVector) -> &'a [f64] {
        &theta.as_slice()[self.layout.chol.clone()]
    }

    /// Random-effects covariance `D` implied by `theta`.
    pub fn re_covariance(&self, theta: &ThetaVector) -> DMatrix<f64> {
        self.re.covariance(self.chol(theta))
    }

    pub fn re_cholesky(&self, theta: &ThetaVector) -> DMatrix<f64> {
        self.re.cholesky_factor(self.chol(theta))
    }

    /// Measurement-error variance of process `p`.
    pub fn error_variance(&self, theta: &ThetaVector, p: Process) -> Option<f64> {
        self.layout.sigma[p.index()].map(|i| theta[i] * theta[i])
    }

    pub(crate) fn check_theta(&self, theta: &ThetaVector) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, model expects {}",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Propagates the affine latent basis for a subject up to its last
    /// observation.
    pub fn propagate_basis(
        &self,
        theta: &ThetaVector,
        subject: &SubjectRecord,
    ) -> Result<LatentAffineBasis> {
        let profile = self.profile(&subject.covariates, true)?;
        let last = subject.last_time().unwrap_or(self.spec.origin);
        let grid = self.grid(last)?;
        self.propagate(theta, [&profile, &profile, &profile], grid, true)
    }
}
