//! Two-table CSV layout: `baseline.csv` (one row per subject: `id`,
//! optional `entry`, covariates) and `long.csv` (`id,marker,time,value`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{num, write_atomic};
use crate::data::{Covariates, Dataset, Observation, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::Process;

pub const BASELINE_FILE: &str = "baseline.csv";
pub const LONG_FILE: &str = "long.csv";

fn field(file: &str, line: u64, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::InvalidData(format!("{file} line {line}: column `{column}` is not numeric: `{raw}`"))
    })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => super::io_err(path, source),
            kind => Error::InvalidData(format!("{}: {kind:?}", path.display())),
        })
}

/// Reads `baseline.csv` and `long.csv` from `dir`. Empty cells are treated
/// as missing. Without an `entry` column a subject enters at its first
/// observation.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut base = reader(&dir.join(BASELINE_FILE))?;
    let header = base.headers()?.clone();
    let id_col = header
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Error::InvalidData(format!("{BASELINE_FILE}: missing `id` column")))?;
    let entry_col = header.iter().position(|h| h == "entry");
    let mut seen = BTreeSet::new();
    for h in header.iter() {
        if h.is_empty() || !seen.insert(h) {
            return Err(Error::InvalidData(format!("{BASELINE_FILE}: empty or repeated column `{h}`")));
        }
    }

    let mut subjects: Vec<(SubjectRecord, Option<f64>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for rec in base.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::InvalidData(format!("{BASELINE_FILE} line {line}: empty id")));
        }
        let mut covs = Covariates::new();
        let mut entry = None;
        for (j, (name, raw)) in header.iter().zip(rec.iter()).enumerate() {
            if j == id_col || raw.is_empty() {
                continue;
            }
            let v = field(BASELINE_FILE, line, name, raw)?;
            if Some(j) == entry_col {
                entry = Some(v);
            } else {
                covs.insert(name.to_string(), v);
            }
        }
        if index.insert(id.clone(), subjects.len()).is_some() {
            return Err(Error::InvalidData(format!("{BASELINE_FILE} line {line}: duplicate id `{id}`")));
        }
        subjects.push((SubjectRecord::new(id, covs, 0.0), entry));
    }

    let mut long = reader(&dir.join(LONG_FILE))?;
    let lh = long.headers()?.clone();
    let col = |name: &str| {
        lh.iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("{LONG_FILE}: missing `{name}` column")))
    };
    let (ci, cm, ct, cv) = (col("id")?, col("marker")?, col("time")?, col("value")?);
    for rec in long.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |c: usize| rec.get(c).unwrap_or("");
        let id = get(ci);
        let &k = index.get(id).ok_or_else(|| {
            Error::InvalidData(format!("{LONG_FILE} line {line}: id `{id}` is not in {BASELINE_FILE}"))
        })?;
        let marker: Process = get(cm)
            .parse()
            .map_err(|_| Error::InvalidData(format!("{LONG_FILE} line {line}: unknown marker `{}`", get(cm))))?;
        if get(ct).is_empty() || get(cv).is_empty() {
            continue;
        }
        let time = field(LONG_FILE, line, "time", get(ct))?;
        let value = field(LONG_FILE, line, "value", get(cv))?;
        subjects[k].0.markers_mut(marker).push(Observation { time, value });
    }

    let mut out = Vec::with_capacity(subjects.len());
    for (mut s, entry) in subjects {
        for obs in &mut s.observations {
            obs.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
        s.entry = match entry {
            Some(e) => e,
            None => s
                .observations
                .iter()
                .flatten()
                .map(|o| o.time)
                .reduce(f64::min)
                .ok_or_else(|| {
                    Error::InvalidData(format!("subject `{}` has no entry time and no observations", s.id))
                })?,
        };
        out.push(s);
    }
    let data = Dataset::new(out);
    data.validate()?;
    Ok(data)
}

/// Writes the two tables into `dir` (which must exist).
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let names: BTreeSet<&str> = data
        .subjects
        .iter()
        .flat_map(|s| s.covariates.keys().map(String::as_str))
        .collect();
    if names.contains("id") || names.contains("entry") {
        return Err(Error::InvalidData("covariates cannot be named `id` or `entry`".into()));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id", "entry"];
    header.extend(names.iter().copied());
    w.write_record(&header)?;
    for s in &data.subjects {
        let mut row = vec![s.id.clone(), num(s.entry)];
        row.extend(names.iter().map(|n| s.covariates.get(*n).map(|&v| num(v)).unwrap_or_default()));
        w.write_record(&row)?;
    }
    write_atomic(&dir.join(BASELINE_FILE), &finish(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "marker", "time", "value"])?;
    for s in &data.subjects {
        for p in Process::ALL {
            let label = p.label().to_string();
            for o in s.markers(p) {
                w.write_record([s.id.as_str(), &label, &num(o.time), &num(o.value)])?;
            }
        }
    }
    write_atomic(&dir.join(LONG_FILE), &finish(w)?)
}

pub(crate) fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::InvalidData(format!("csv buffer: {}", e.error())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn toy() -> Dataset {
        let mut a = SubjectRecord::new("a", [("X".into(), 1.0), ("C".into(), 0.0)].into(), 0.0);
        a.markers_mut(Process::Y).push(Observation { time: 0.0, value: 0.1 + 0.2 });
        a.markers_mut(Process::Y).push(Observation { time: 1.05, value: -1.0 / 3.0 });
        a.markers_mut(Process::M).push(Observation { time: 0.0, value: 2.5 });
        let b = SubjectRecord::new("b,quoted", [("X".into(), 0.0)].into(), 66.25);
        Dataset::new(vec![a, b])
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy();
        write_dataset(&d, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn entry_defaults_to_first_observation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(BASELINE_FILE), "id,X\n1,1\n").unwrap();
        fs::write(dir.path().join(LONG_FILE), "id,marker,time,value\n1,Y,2.5,1\n1,M,1.5,0\n1,Y,,3\n").unwrap();
        let d = read_dataset(dir.path()).unwrap();
        assert_eq!(d.subjects[0].entry, 1.5);
        assert_eq!(d.subjects[0].n_obs(), 2);
    }

    #[test]
    fn header_only_long_table() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(BASELINE_FILE), "id,entry,X\n1,0,1\n").unwrap();
        fs::write(dir.path().join(LONG_FILE), "id,marker,time,value\n").unwrap();
        let d = read_dataset(dir.path()).unwrap();
        assert_eq!(d.subjects[0].n_obs(), 0);
    }

    #[test]
    fn malformed_rows_are_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(BASELINE_FILE), "id,entry,X\n1,0,1\n").unwrap();
        let cases = [
            ("id,marker,time,value\n1,Q,0,1\n", "unknown marker"),
            ("id,marker,time,value\n1,Y,zero,1\n", "line 2"),
            ("id,marker,time,value\n1,Y,0,1\n9,Y,0,1\n", "`9`"),
        ];
        for (long, needle) in cases {
            fs::write(dir.path().join(LONG_FILE), long).unwrap();
            let e = read_dataset(dir.path()).unwrap_err();
            assert!(matches!(e, Error::InvalidData(_)));
            assert!(e.to_string().contains(needle), "{e}");
        }
        fs::write(dir.path().join(BASELINE_FILE), "id,entry,X\n1,0,1\n1,0,0\n").unwrap();
        assert!(read_dataset(dir.path()).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Io { .. })));
    }
}
