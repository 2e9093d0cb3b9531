//! Flat parameter vector and its name map.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat parameter vector of the working model. Block boundaries and names
/// live in [`ParamLayout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Self {
        ThetaVector(values)
    }

    pub fn zeros(n: usize) -> Self {
        ThetaVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for ThetaVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ThetaVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Bijection between parameter names and flat indices, plus block ranges.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    names: Vec<String>,
    index: HashMap<String, usize>,
    pub(crate) chol: Range<usize>,
    pub(crate) sigma: [Option<usize>; 3],
}

impl ParamLayout {
    pub(crate) fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn chol_range(&self) -> Range<usize> {
        self.chol.clone()
    }

    pub fn sigma_index(&self, p: crate::model::Process) -> Option<usize> {
        self.sigma[p.index()]
    }

    /// Named view of a parameter vector.
    pub fn to_named(&self, theta: &ThetaVector) -> BTreeMap<String, f64> {
        self.names
            .iter()
            .cloned()
            .zip(theta.as_slice().iter().copied())
            .collect()
    }

    /// Builds a vector from named values; names not listed default to 0.
    pub fn from_named(&self, values: &BTreeMap<String, f64>) -> Result<ThetaVector> {
        let mut theta = ThetaVector::zeros(self.len());
        self.apply_named(&mut theta, values)?;
        Ok(theta)
    }

    pub fn apply_named(&self, theta: &mut ThetaVector, values: &BTreeMap<String, f64>) -> Result<()> {
        for (name, &v) in values {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            theta[i] = v;
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    names: Vec<String>,
}

impl LayoutBuilder {
    pub fn push(&mut self, name: String) -> usize {
        self.names.push(name);
        self.names.len() - 1
    }

    pub fn block<I: IntoIterator<Item = String>>(&mut self, names: I) -> Range<usize> {
        let start = self.names.len();
        self.names.extend(names);
        start..self.names.len()
    }

    pub fn finish(
        self,
        chol: Range<usize>,
        sigma: [Option<usize>; 3],
    ) -> Result<ParamLayout> {
        let mut index = HashMap::with_capacity(self.names.len());
        for (i, n) in self.names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidSpec(format!("duplicate parameter name `{n}`")));
            }
        }
        Ok(ParamLayout {
            names: self.names,
            index,
            chol,
            sigma,
        })
    }
}
