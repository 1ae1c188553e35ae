//! Raw patient records and the three ingestion files.
//!
//! * `patients.csv`: `patient_id,ihm,los,<typed columns>` where each static
//!   column header carries a type prefix: `num:`, `cat:` or `bin:`. Empty
//!   cells are missing values.
//! * `diagnoses.csv`: `patient_id,code_path,hour` with `|`-separated paths.
//! * `timeseries.csv`: `patient_id,feature,hour,value`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PATIENTS_FILE: &str = "patients.csv";
pub const DIAGNOSES_FILE: &str = "diagnoses.csv";
pub const TIMESERIES_FILE: &str = "timeseries.csv";

/// Separator between hierarchy levels of a diagnosis code path.
pub const PATH_SEPARATOR: char = '|';

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Hours since ICU admission.
    pub hour: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Class levels from most general to most specific.
    pub path: Vec<String>,
    /// Hour at which the diagnosis was recorded.
    pub hour: f64,
}

impl Diagnosis {
    pub fn joined(&self) -> String {
        self.path.join("|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub ihm: bool,
    /// Days.
    pub los: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Missing values are absent keys.
    pub static_numeric: BTreeMap<String, f64>,
    pub static_categorical: BTreeMap<String, String>,
    pub static_binary: BTreeMap<String, bool>,
    pub diagnoses: Vec<Diagnosis>,
    pub series: BTreeMap<String, Vec<Observation>>,
    pub labels: Option<Labels>,
}

impl PatientRecord {
    /// Checks the cohort rules: LOS of at least one day, at least one
    /// observation, and strictly increasing timestamps per series.
    pub fn validate(&self) -> Result<()> {
        let id = &self.patient_id;
        if let Some(l) = &self.labels {
            if !(l.los >= 1.0) {
                return Err(Error::Data(format!(
                    "patient {id}: length of stay {} is below one day",
                    l.los
                )));
            }
        }
        if self.series.values().all(|s| s.is_empty()) {
            return Err(Error::Data(format!("patient {id}: no time-series observations")));
        }
        for (feature, obs) in &self.series {
            if obs.windows(2).any(|w| !(w[0].hour < w[1].hour)) {
                return Err(Error::Data(format!(
                    "patient {id}: timestamps of `{feature}` do not strictly increase"
                )));
            }
        }
        for d in &self.diagnoses {
            if d.path.is_empty() || d.path.iter().any(|p| p.trim().is_empty()) {
                return Err(Error::Data(format!(
                    "patient {id}: malformed diagnosis path `{}`",
                    d.joined()
                )));
            }
        }
        Ok(())
    }
}

/// Splits a `|`-joined code path, rejecting empty levels.
pub fn parse_code_path(raw: &str) -> Option<Vec<String>> {
    let parts: Vec<String> = raw.split(PATH_SEPARATOR).map(|s| s.trim().to_string()).collect();
    if parts.iter().any(|p| p.is_empty()) {
        None
    } else {
        Some(parts)
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))
}

fn parse_f64(path: &Path, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| Error::parse(path, format!("invalid number `{raw}` in `{field}`")))
}

/// Reads the three ingestion files from `dir`. Records come back sorted by
/// patient id and validated.
pub fn read_records(dir: &Path) -> Result<Vec<PatientRecord>> {
    let mut records: BTreeMap<String, PatientRecord> = BTreeMap::new();

    let path = dir.join(PATIENTS_FILE);
    let mut rdr = reader(&path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(&path, e.to_string()))?
        .clone();
    if headers.get(0) != Some("patient_id") {
        return Err(Error::parse(&path, "first column must be `patient_id`"));
    }
    for row in rdr.records() {
        let row = row.map_err(|e| Error::parse(&path, e.to_string()))?;
        let id = row.get(0).unwrap_or_default().to_string();
        let mut rec = PatientRecord {
            patient_id: id.clone(),
            ..Default::default()
        };
        let mut ihm = None;
        let mut los = None;
        for (header, cell) in headers.iter().zip(row.iter()).skip(1) {
            if cell.is_empty() {
                continue;
            }
            match header.split_once(':') {
                None if header == "ihm" => ihm = Some(parse_f64(&path, header, cell)? > 0.5),
                None if header == "los" => los = Some(parse_f64(&path, header, cell)?),
                Some(("num", name)) => {
                    rec.static_numeric
                        .insert(name.to_string(), parse_f64(&path, header, cell)?);
                }
                Some(("cat", name)) => {
                    rec.static_categorical
                        .insert(name.to_string(), cell.to_string());
                }
                Some(("bin", name)) => {
                    rec.static_binary
                        .insert(name.to_string(), parse_f64(&path, header, cell)? > 0.5);
                }
                _ => {
                    return Err(Error::parse(
                        &path,
                        format!("column `{header}` lacks a num:/cat:/bin: prefix"),
                    ))
                }
            }
        }
        if let (Some(ihm), Some(los)) = (ihm, los) {
            rec.labels = Some(Labels { ihm, los });
        }
        if records.insert(id.clone(), rec).is_some() {
            return Err(Error::parse(&path, format!("duplicate patient `{id}`")));
        }
    }

    let path = dir.join(DIAGNOSES_FILE);
    let mut rdr = reader(&path)?;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::parse(&path, e.to_string()))?;
        let (id, raw, hour) = (&row[0], &row[1], &row[2]);
        let rec = records
            .get_mut(id)
            .ok_or_else(|| Error::parse(&path, format!("unknown patient `{id}`")))?;
        let parts = parse_code_path(raw).ok_or_else(|| {
            Error::Data(format!("patient {id}: malformed diagnosis path `{raw}`"))
        })?;
        rec.diagnoses.push(Diagnosis {
            path: parts,
            hour: parse_f64(&path, "hour", hour)?,
        });
    }

    let path = dir.join(TIMESERIES_FILE);
    let mut rdr = reader(&path)?;
    for row in rdr.records() {
        let row = row.map_err(|e| Error::parse(&path, e.to_string()))?;
        let id = &row[0];
        let rec = records
            .get_mut(id)
            .ok_or_else(|| Error::parse(&path, format!("unknown patient `{id}`")))?;
        rec.series
            .entry(row[1].to_string())
            .or_default()
            .push(Observation {
                hour: parse_f64(&path, "hour", &row[2])?,
                value: parse_f64(&path, "value", &row[3])?,
            });
    }

    let mut out: Vec<PatientRecord> = records.into_values().collect();
    for rec in &mut out {
        for obs in rec.series.values_mut() {
            obs.sort_by(|a, b| a.hour.total_cmp(&b.hour));
        }
        rec.validate()?;
    }
    Ok(out)
}

/// Writes `records` in the ingestion format. Column order is sorted by name
/// within each type so output is reproducible.
pub fn write_records(dir: &Path, records: &[PatientRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_err = |p: &Path, e: csv::Error| Error::parse(p, e.to_string());

    let mut numeric = std::collections::BTreeSet::new();
    let mut categorical = std::collections::BTreeSet::new();
    let mut binary = std::collections::BTreeSet::new();
    for r in records {
        numeric.extend(r.static_numeric.keys().cloned());
        categorical.extend(r.static_categorical.keys().cloned());
        binary.extend(r.static_binary.keys().cloned());
    }

    let path = dir.join(PATIENTS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut header = vec!["patient_id".to_string(), "ihm".into(), "los".into()];
    header.extend(numeric.iter().map(|n| format!("num:{n}")));
    header.extend(categorical.iter().map(|n| format!("cat:{n}")));
    header.extend(binary.iter().map(|n| format!("bin:{n}")));
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for r in records {
        let mut row = vec![r.patient_id.clone()];
        match &r.labels {
            Some(l) => {
                row.push(if l.ihm { "1".into() } else { "0".into() });
                row.push(l.los.to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
        row.extend(
            numeric
                .iter()
                .map(|n| r.static_numeric.get(n).map_or(String::new(), |v| v.to_string())),
        );
        row.extend(
            categorical
                .iter()
                .map(|n| r.static_categorical.get(n).cloned().unwrap_or_default()),
        );
        row.extend(binary.iter().map(|n| match r.static_binary.get(n) {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => String::new(),
        }));
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(DIAGNOSES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["patient_id", "code_path", "hour"])
        .map_err(|e| csv_err(&path, e))?;
    for r in records {
        for d in &r.diagnoses {
            w.write_record([r.patient_id.as_str(), &d.joined(), &d.hour.to_string()])
                .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(TIMESERIES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["patient_id", "feature", "hour", "value"])
        .map_err(|e| csv_err(&path, e))?;
    for r in records {
        for (feature, obs) in &r.series {
            for o in obs {
                w.write_record([
                    r.patient_id.as_str(),
                    feature,
                    &o.hour.to_string(),
                    &o.value.to_string(),
                ])
                .map_err(|e| csv_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
