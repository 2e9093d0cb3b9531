//! Semi-structured random-effects covariance parameterised by a masked
//! Cholesky factor.
//!
//! Random effects are ordered `(u^L, u^M, u^Y, v^L, v^M, v^Y)`, dropping
//! absent blocks. Free entries of the lower-triangular factor are the full
//! diagonal, the whole `u` block, and each `(v^a, u^a)` pair. They are
//! enumerated column-major over the full lower triangle; the parameter
//! `chol.k` is the k-th position (1-based) of that enumeration, so with all
//! six effects the free set is {1,2,3,4,7,8,10,12,15,16,19,21}.

use nalgebra::DMatrix;

use super::spec::Process;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EffectKind {
    /// Random deviation of the initial level.
    Level,
    /// Random deviation of the drift.
    Slope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RandomEffect {
    pub process: Process,
    pub kind: EffectKind,
}

impl RandomEffect {
    pub fn label(&self) -> String {
        match self.kind {
            EffectKind::Level => format!("u.{}", self.process),
            EffectKind::Slope => format!("v.{}", self.process),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomEffectsStructure {
    pub effects: Vec<RandomEffect>,
    /// Free `(row, col)` positions of the Cholesky factor, column-major.
    pub allowed: Vec<(usize, usize)>,
    /// 1-based column-major position of each free entry.
    pub positions: Vec<usize>,
}

impl RandomEffectsStructure {
    /// `present` lists the processes in L, M, Y order with their random-slope flag.
    pub fn new(present: &[(Process, bool)]) -> Self {
        let mut effects: Vec<RandomEffect> = present
            .iter()
            .map(|&(process, _)| RandomEffect {
                process,
                kind: EffectKind::Level,
            })
            .collect();
        effects.extend(present.iter().filter(|(_, s)| *s).map(|&(process, _)| RandomEffect {
            process,
            kind: EffectKind::Slope,
        }));
        let q = effects.len();
        let mut allowed = Vec::new();
        let mut positions = Vec::new();
        let mut pos = 0;
        for col in 0..q {
            for row in col..q {
                pos += 1;
                if Self::is_free(&effects[row], &effects[col], row == col) {
                    allowed.push((row, col));
                    positions.push(pos);
                }
            }
        }
        RandomEffectsStructure {
            effects,
            allowed,
            positions,
        }
    }

    fn is_free(row: &RandomEffect, col: &RandomEffect, diagonal: bool) -> bool {
        if diagonal {
            return true;
        }
        match (row.kind, col.kind) {
            (EffectKind::Level, EffectKind::Level) => true,
            (EffectKind::Slope, EffectKind::Level) => row.process == col.process,
            _ => false,
        }
    }

    pub fn dim(&self) -> usize {
        self.effects.len()
    }

    pub fn n_free(&self) -> usize {
        self.allowed.len()
    }

    pub fn index_of(&self, process: Process, kind: EffectKind) -> Option<usize> {
        self.effects
            .iter()
            .position(|e| e.process == process && e.kind == kind)
    }

    /// Lower-triangular factor with `chol` placed at the free positions.
    pub fn cholesky_factor(&self, chol: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(chol.len(), self.allowed.len());
        let q = self.dim();
        let mut l = DMatrix::zeros(q, q);
        for (&(r, c), &v) in self.allowed.iter().zip(chol) {
            l[(r, c)] = v;
        }
        l
    }

    /// `D = L L'`.
    pub fn covariance(&self, chol: &[f64]) -> DMatrix<f64> {
        let l = self.cholesky_factor(chol);
        &l * l.transpose()
    }

    pub fn mask(&self) -> DMatrix<bool> {
        let q = self.dim();
        let mut m = DMatrix::from_element(q, q, false);
        for &(r, c) in &self.allowed {
            m[(r, c)] = true;
        }
        m
    }
}
