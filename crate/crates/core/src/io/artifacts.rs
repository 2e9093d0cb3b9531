//! Output artifacts: fitted model JSON, contrast and replication tables,
//! oracle truth.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::dataset::finish;
use super::{num, read_to_string, write_atomic};
use crate::causal::ContrastSeries;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{Model, ModelSpec, ThetaVector};
use crate::simulation::{ReplicationReport, TruthHandle};

pub const EFFECTS_HEADER: [&str; 5] = ["effect", "time", "estimate", "lo", "hi"];
pub const REPORT_HEADER: [&str; 8] = [
    "effect",
    "time",
    "truth",
    "mean_estimate",
    "mean_rel_bias_pct",
    "coverage_pct",
    "replicates",
    "failures",
];

/// Everything needed to compute contrasts from a fit without the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArtifact {
    pub model: ModelSpec,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    #[serde(default)]
    pub std_errors: Option<Vec<f64>>,
    /// Row-major covariance of the estimates.
    #[serde(default)]
    pub vcov: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_max: f64,
    pub message: String,
}

impl FitArtifact {
    pub fn new(spec: &ModelSpec, fit: &FitResult) -> Self {
        FitArtifact {
            model: spec.clone(),
            param_names: fit.param_names.clone(),
            theta_hat: fit.theta_hat.as_slice().to_vec(),
            std_errors: fit.std_errors(),
            vcov: fit
                .vcov
                .as_ref()
                .map(|v| v.row_iter().map(|r| r.iter().copied().collect()).collect()),
            loglik: fit.loglik,
            converged: fit.converged,
            iterations: fit.iterations,
            grad_max: fit.grad_max,
            message: fit.message.clone(),
        }
    }

    /// Rebuilds the model and the fit, checking the stored names against the
    /// model's parameter layout.
    pub fn restore(&self) -> Result<(Model, FitResult)> {
        let model = Model::new(self.model.clone())?;
        if model.layout().names() != self.param_names.as_slice() {
            return Err(Error::InvalidData(
                "fit artifact parameter names do not match its model".into(),
            ));
        }
        let p = self.theta_hat.len();
        let vcov = match &self.vcov {
            None => None,
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::InvalidData(format!("vcov must be {p} x {p}")));
                }
                Some(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
            }
        };
        Ok((
            model,
            FitResult {
                param_names: self.param_names.clone(),
                theta_hat: ThetaVector::new(self.theta_hat.clone()),
                loglik: self.loglik,
                converged: self.converged,
                iterations: self.iterations,
                grad_max: self.grad_max,
                message: self.message.clone(),
                hessian: None,
                vcov,
            },
        ))
    }
}

pub fn write_fit(path: &Path, artifact: &FitArtifact) -> Result<()> {
    let mut text = serde_json::to_string_pretty(artifact)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_fit(path: &Path) -> Result<FitArtifact> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

/// `effect,time,estimate,lo,hi`; bands are empty when absent.
pub fn effects_to_csv(series: &[ContrastSeries]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EFFECTS_HEADER)?;
    for s in series {
        for (i, &t) in s.times.iter().enumerate() {
            let band = |b: &Option<Vec<f64>>| b.as_ref().map(|v| num(v[i])).unwrap_or_default();
            w.write_record([
                s.effect.label().to_string(),
                num(t),
                num(s.estimate[i]),
                band(&s.ci_lower),
                band(&s.ci_upper),
            ])?;
        }
    }
    finish(w)
}

pub fn write_effects(path: &Path, series: &[ContrastSeries]) -> Result<()> {
    write_atomic(path, &effects_to_csv(series)?)
}

pub fn report_to_csv(report: &ReplicationReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.effect.label().to_string(),
            num(r.time),
            num(r.truth),
            num(r.mean_estimate),
            num(r.mean_rel_bias_pct),
            num(r.coverage_pct),
            r.replicates.to_string(),
            r.failures.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_report(path: &Path, report: &ReplicationReport) -> Result<()> {
    write_atomic(path, &report_to_csv(report)?)
}

pub fn write_truth(path: &Path, truth: &TruthHandle) -> Result<()> {
    let mut text = serde_json::to_string_pretty(truth)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
