//! Declarative description of the three-process dynamic system.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three latent processes: time-varying confounder, mediator,
/// outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Process {
    L,
    M,
    Y,
}

impl Process {
    pub const ALL: [Process; 3] = [Process::L, Process::M, Process::Y];

    pub fn label(self) -> char {
        match self {
            Process::L => 'L',
            Process::M => 'M',
            Process::Y => 'Y',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(Process::L),
            "M" => Ok(Process::M),
            "Y" => Ok(Process::Y),
            other => Err(Error::InvalidData(format!("unknown marker label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timescale {
    TimeInStudy,
    Age,
}

/// Time multiplier attached to a design term, evaluated at `s = t - origin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeFn {
    Const,
    Linear,
    Quadratic,
}

impl TimeFn {
    #[inline]
    pub fn eval(self, s: f64) -> f64 {
        match self {
            TimeFn::Const => 1.0,
            TimeFn::Linear => s,
            TimeFn::Quadratic => s * s,
        }
    }
}

/// A design column: a covariate (or the intercept) optionally crossed with a
/// time function. Written as `X`, `intercept`, `X:time` or `C:time2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term {
    /// `None` is the intercept.
    pub covariate: Option<String>,
    pub time: TimeFn,
}

impl Term {
    pub fn intercept() -> Self {
        Term {
            covariate: None,
            time: TimeFn::Const,
        }
    }

    pub fn covariate(name: &str) -> Self {
        Term {
            covariate: Some(name.to_string()),
            time: TimeFn::Const,
        }
    }

    pub fn with_time(mut self, time: TimeFn) -> Self {
        self.time = time;
        self
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = self.covariate.as_deref().unwrap_or("intercept");
        match self.time {
            TimeFn::Const => write!(f, "{base}"),
            TimeFn::Linear => write!(f, "{base}:time"),
            TimeFn::Quadratic => write!(f, "{base}:time2"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, time) = match s.split_once(':') {
            None => (s, TimeFn::Const),
            Some((b, "time")) => (b, TimeFn::Linear),
            Some((b, "time2")) => (b, TimeFn::Quadratic),
            Some((_, other)) => {
                return Err(Error::InvalidSpec(format!(
                    "unknown time function `{other}` in term `{s}` (expected `time` or `time2`)"
                )))
            }
        };
        if base.is_empty() {
            return Err(Error::InvalidSpec(format!("empty covariate name in term `{s}`")));
        }
        let covariate = if base == "intercept" {
            None
        } else {
            Some(base.to_string())
        };
        Ok(Term { covariate, time })
    }
}

impl TryFrom<String> for Term {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    /// Design of the initial level, intercept included explicitly.
    pub init: Vec<Term>,
    /// Design of the drift, intercept included explicitly.
    pub slope: Vec<Term>,
    #[serde(default)]
    pub random_slope: bool,
}

impl ProcessSpec {
    /// `intercept + covariates` on both the initial level and the drift.
    pub fn simple(covariates: &[&str], random_slope: bool) -> Self {
        let design: Vec<Term> = std::iter::once(Term::intercept())
            .chain(covariates.iter().map(|c| Term::covariate(c)))
            .collect();
        ProcessSpec {
            init: design.clone(),
            slope: design,
            random_slope,
        }
    }
}

/// Directed influence `from -> to`: the current level of `from` enters the
/// drift of `to` with coefficient `alpha_0 + sum(alpha_j * modifier_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Influence {
    pub from: Process,
    pub to: Process,
    /// Modifier covariates; the intercept is implicit and always first.
    #[serde(default)]
    pub modifiers: Vec<String>,
}

impl Influence {
    pub fn new(from: Process, to: Process) -> Self {
        Influence {
            from,
            to,
            modifiers: Vec::new(),
        }
    }

    pub fn tag(&self) -> String {
        format!("{}{}", self.to.label(), self.from.label())
    }
}

fn default_origin() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Name of the time-fixed exposure covariate.
    pub exposure: String,
    pub has_confounder: bool,
    pub processes: BTreeMap<Process, ProcessSpec>,
    #[serde(default)]
    pub influences: Vec<Influence>,
    pub delta: f64,
    pub timescale: Timescale,
    /// Time at which every latent process is initialised (grid anchor).
    #[serde(default = "default_origin")]
    pub origin: f64,
}

impl ModelSpec {
    pub fn process(&self, p: Process) -> Option<&ProcessSpec> {
        self.processes.get(&p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "delta must be finite and > 0, got {}",
                self.delta
            )));
        }
        if !self.origin.is_finite() {
            return Err(Error::InvalidSpec("origin must be finite".into()));
        }
        if self.exposure.is_empty() || self.exposure == "intercept" {
            return Err(Error::InvalidSpec(format!(
                "invalid exposure name `{}`",
                self.exposure
            )));
        }
        for p in [Process::M, Process::Y] {
            if !self.processes.contains_key(&p) {
                return Err(Error::InvalidSpec(format!("process {p} is required")));
            }
        }
        if self.has_confounder != self.processes.contains_key(&Process::L) {
            return Err(Error::InvalidSpec(
                "has_confounder must match the presence of process L".into(),
            ));
        }
        for (p, ps) in &self.processes {
            check_unique(&ps.init, &format!("init design of {p}"))?;
            check_unique(&ps.slope, &format!("slope design of {p}"))?;
            if ps.init.is_empty() {
                return Err(Error::InvalidSpec(format!("init design of {p} is empty")));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.influences {
            let allowed = matches!(
                (e.from, e.to),
                (Process::L, Process::M) | (Process::L, Process::Y) | (Process::M, Process::Y)
            );
            if !allowed {
                return Err(Error::InvalidSpec(format!(
                    "influence {}->{} is not allowed (only L->M, L->Y, M->Y)",
                    e.from, e.to
                )));
            }
            if !self.has_confounder && e.from == Process::L {
                return Err(Error::InvalidSpec(format!(
                    "influence {}->{} needs the confounder process",
                    e.from, e.to
                )));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate influence {}->{}",
                    e.from, e.to
                )));
            }
            let mut mods = BTreeSet::new();
            for m in &e.modifiers {
                if m == "intercept" || m == "0" || m.is_empty() {
                    return Err(Error::InvalidSpec(format!(
                        "modifier `{m}` on {}->{} is reserved",
                        e.from, e.to
                    )));
                }
                if !mods.insert(m) {
                    return Err(Error::InvalidSpec(format!(
                        "duplicate modifier `{m}` on {}->{}",
                        e.from, e.to
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_unique(terms: &[Term], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for t in terms {
        if !seen.insert(t.to_string()) {
            return Err(Error::InvalidSpec(format!("duplicate covariate `{t}` in {what}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_round_trips_through_strings() {
        for s in ["intercept", "X", "X:time", "intercept:time2", "EL"] {
            let t: Term = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!("X:sqrt".parse::<Term>().is_err());
        assert!(":time".parse::<Term>().is_err());
    }

    fn base() -> ModelSpec {
        let mut processes = BTreeMap::new();
        processes.insert(Process::M, ProcessSpec::simple(&["X"], true));
        processes.insert(Process::Y, ProcessSpec::simple(&["X"], true));
        ModelSpec {
            exposure: "X".into(),
            has_confounder: false,
            processes,
            influences: vec![Influence::new(Process::M, Process::Y)],
            delta: 0.1,
            timescale: Timescale::TimeInStudy,
            origin: 0.0,
        }
    }

    #[test]
    fn rejects_reverse_edges() {
        let mut s = base();
        s.influences.push(Influence::new(Process::Y, Process::M));
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_l_edges_without_confounder() {
        let mut s = base();
        s.influences.push(Influence::new(Process::L, Process::Y));
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_bad_delta_and_duplicates() {
        let mut s = base();
        s.delta = 0.0;
        assert!(s.validate().is_err());
        let mut s = base();
        s.processes.get_mut(&Process::Y).unwrap().init.push(Term::covariate("X"));
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let json = r#"{"init":["intercept"],"slope":["intercept"],"random_slop":true}"#;
        let err = serde_json::from_str::<ProcessSpec>(json).unwrap_err();
        assert!(err.to_string().contains("random_slop"));
    }
}
