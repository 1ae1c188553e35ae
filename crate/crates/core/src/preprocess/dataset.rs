use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::diagnoses::{encode_diagnoses, DiagnosisMatrix, DiagnosisVocabulary};
use super::records::PatientRecord;
use super::resample::resample_hourly;
use super::scaler::{Scaler, ScalerParams};
use super::split::{split_cohort, Split, SplitTag};
use super::static_features::StaticEncoder;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, read_string, write_string};
use crate::metrics::Task;

pub const TIME_IN_ICU: &str = "time_in_icu";
pub const TIME_OF_DAY: &str = "time_of_day";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Minimum training prevalence (exclusive) for a diagnosis column.
    pub prevalence_threshold: f64,
    pub horizon: usize,
    pub split_ratios: [f64; 3],
    pub seed: u64,
    /// Static numeric feature holding the admission hour of day.
    pub admission_hour_feature: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            prevalence_threshold: 0.005,
            horizon: 24,
            split_ratios: [0.7, 0.15, 0.15],
            seed: 0,
            admission_hour_feature: "admission_hour".into(),
        }
    }
}

/// Model-ready cohort. Rows follow ascending patient id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: PreprocessConfig,
    pub patient_ids: Vec<String>,
    pub split: Vec<SplitTag>,
    pub ihm: Vec<f64>,
    pub los: Vec<f64>,
    pub static_names: Vec<String>,
    /// `N x S`, row-major.
    pub static_features: Vec<f64>,
    pub channel_names: Vec<String>,
    /// `N x T x F`, row-major.
    pub series: Vec<f64>,
    /// Same layout as `series`.
    pub masks: Vec<f64>,
    pub diagnoses: DiagnosisMatrix,
    pub vocabulary: DiagnosisVocabulary,
    /// Static numeric and time-series channel scalers.
    pub scalers: ScalerParams,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn n_static(&self) -> usize {
        self.static_names.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_diagnoses(&self) -> usize {
        self.diagnoses.n_cols()
    }

    pub fn static_row(&self, i: usize) -> &[f64] {
        let s = self.n_static();
        &self.static_features[i * s..(i + 1) * s]
    }

    /// `T x F` block of patient `i`.
    pub fn series_of(&self, i: usize) -> &[f64] {
        let w = self.horizon() * self.n_channels();
        &self.series[i * w..(i + 1) * w]
    }

    pub fn mask_of(&self, i: usize) -> &[f64] {
        let w = self.horizon() * self.n_channels();
        &self.masks[i * w..(i + 1) * w]
    }

    pub fn labels(&self, task: Task) -> &[f64] {
        match task {
            Task::Ihm => &self.ihm,
            Task::Los => &self.los,
        }
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn split_indices(&self) -> Split {
        Split::from_tags(&self.split)
    }

    /// Builds the dataset from validated records: split, fit everything on the
    /// training rows, then encode all rows.
    pub fn from_records(records: &[PatientRecord], config: &PreprocessConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let mut records: Vec<&PatientRecord> = records.iter().collect();
        records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        if records.windows(2).any(|w| w[0].patient_id == w[1].patient_id) {
            return Err(Error::Data("duplicate patient ids".into()));
        }
        let mut ihm = Vec::with_capacity(records.len());
        let mut los = Vec::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            let l = r
                .labels
                .ok_or_else(|| Error::Data(format!("patient {}: missing labels", r.patient_id)))?;
            ihm.push(if l.ihm { 1.0 } else { 0.0 });
            los.push(l.los);
        }
        let owned: Vec<PatientRecord> = records.iter().map(|r| (*r).clone()).collect();
        let n = owned.len();
        let split = split_cohort(n, config.split_ratios, config.seed)?;
        if split.train.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }

        let encoder = StaticEncoder::fit(&owned, &split.train)?;
        let mut scalers: ScalerParams = encoder
            .numeric
            .iter()
            .map(|s| (s.name.clone(), s.scaler))
            .collect();
        let static_features: Vec<f64> = owned.iter().flat_map(|r| encoder.encode(r)).collect();

        let horizon = config.horizon;
        let limit = horizon as f64;
        let measured: Vec<String> = split
            .train
            .iter()
            .flat_map(|&i| owned[i].series.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut channel_scalers = Vec::with_capacity(measured.len());
        for name in &measured {
            let values: Vec<f64> = split
                .train
                .iter()
                .filter_map(|&i| owned[i].series.get(name))
                .flatten()
                .filter(|o| o.hour <= limit)
                .map(|o| o.value)
                .collect();
            let scaler = Scaler::fit(name, &values)?;
            scalers.insert(format!("series:{name}"), scaler);
            channel_scalers.push(scaler);
        }
        let mut channel_names = measured.clone();
        channel_names.push(TIME_IN_ICU.into());
        channel_names.push(TIME_OF_DAY.into());
        let f = channel_names.len();

        let mut series = vec![0.0; n * horizon * f];
        let mut masks = vec![0.0; n * horizon * f];
        for (i, r) in owned.iter().enumerate() {
            let base = i * horizon * f;
            for (c, name) in measured.iter().enumerate() {
                let Some(obs) = r.series.get(name).filter(|o| !o.is_empty()) else {
                    continue;
                };
                let (values, mask) = resample_hourly(obs, horizon)?;
                for h in 0..horizon {
                    series[base + h * f + c] = channel_scalers[c].apply(values[h]);
                    masks[base + h * f + c] = mask[h];
                }
            }
            let admission = r
                .static_numeric
                .get(&config.admission_hour_feature)
                .copied()
                .filter(|v| v.is_finite())
                .unwrap_or(0.0);
            for h in 0..horizon {
                let hour = (h + 1) as f64;
                let clock = (admission + hour).rem_euclid(24.0);
                series[base + h * f + f - 2] = hour / 24.0;
                series[base + h * f + f - 1] = 2.0 * clock / 23.0 - 1.0;
                masks[base + h * f + f - 2] = 1.0;
                masks[base + h * f + f - 1] = 1.0;
            }
        }

        let (diagnoses, vocabulary) =
            encode_diagnoses(&owned, &split.train, config.prevalence_threshold, limit)?;

        Ok(Self {
            config: config.clone(),
            patient_ids: owned.iter().map(|r| r.patient_id.clone()).collect(),
            split: split.tags(n),
            ihm,
            los,
            static_names: encoder.feature_names(),
            static_features,
            channel_names,
            series,
            masks,
            diagnoses,
            vocabulary,
            scalers,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_string(
            &dir.join(files::CONFIG),
            &serde_json::to_string_pretty(&self.config).expect("config serializes"),
        )?;

        let mut cohort = String::from("row,patient_id,split,ihm,los\n");
        for i in 0..self.len() {
            cohort.push_str(&format!(
                "{i},{},{},{},{}\n",
                csv_field(&self.patient_ids[i]),
                self.split[i].as_str(),
                self.ihm[i],
                self.los[i]
            ));
        }
        write_string(&dir.join(files::COHORT), &cohort)?;

        let names: Vec<String> = self.static_names.iter().map(|n| csv_field(n)).collect();
        let mut stat = names.join(",");
        stat.push('\n');
        for i in 0..self.len() {
            stat.push_str(&join_row(self.static_row(i)));
        }
        write_string(&dir.join(files::STATIC), &stat)?;

        for (file, data) in [(files::SERIES, &self.series), (files::MASKS, &self.masks)] {
            let f = self.n_channels();
            let t = self.horizon();
            let mut out = format!("row,hour,{}\n", self.channel_names.join(","));
            for i in 0..self.len() {
                for h in 0..t {
                    let start = (i * t + h) * f;
                    out.push_str(&format!("{i},{h},"));
                    out.push_str(&join_row(&data[start..start + f]));
                }
            }
            write_string(&dir.join(file), &out)?;
        }

        write_string(&dir.join(files::DIAGNOSES), &self.diagnoses.to_coo())?;
        write_string(&dir.join(files::VOCABULARY), &self.vocabulary.to_csv())?;

        let mut sc = String::from("feature,p5,p95\n");
        for (name, s) in &self.scalers {
            sc.push_str(&format!("{},{},{}\n", csv_field(name), s.p5, s.p95));
        }
        write_string(&dir.join(files::SCALERS), &sc)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(files::CONFIG);
        let config: PreprocessConfig = serde_json::from_str(&read_string(&path)?)
            .map_err(|e| Error::parse(&path, e.to_string()))?;

        let path = dir.join(files::COHORT);
        let mut patient_ids = Vec::new();
        let mut split = Vec::new();
        let mut ihm = Vec::new();
        let mut los = Vec::new();
        for row in csv_rows(&path)?.1 {
            if row.len() != 5 {
                return Err(Error::parse(&path, "expected 5 columns"));
            }
            patient_ids.push(row[1].clone());
            split.push(
                SplitTag::parse(&row[2])
                    .ok_or_else(|| Error::parse(&path, format!("unknown split `{}`", row[2])))?,
            );
            ihm.push(parse_num(&path, &row[3])?);
            los.push(parse_num(&path, &row[4])?);
        }
        let n = patient_ids.len();

        let path = dir.join(files::STATIC);
        let (static_names, rows) = csv_rows(&path)?;
        if rows.len() != n {
            return Err(Error::parse(&path, format!("expected {n} rows, found {}", rows.len())));
        }
        let mut static_features = Vec::with_capacity(n * static_names.len());
        for row in rows {
            if row.len() != static_names.len() {
                return Err(Error::parse(&path, "ragged row"));
            }
            for v in &row {
                static_features.push(parse_num(&path, v)?);
            }
        }

        let mut channel_names = Vec::new();
        let mut tensors = Vec::new();
        for file in [files::SERIES, files::MASKS] {
            let path = dir.join(file);
            let (header, rows) = csv_rows(&path)?;
            let channels = header.get(2..).unwrap_or_default().to_vec();
            if rows.len() != n * config.horizon {
                return Err(Error::parse(&path, "row count does not match N x horizon"));
            }
            let mut data = Vec::with_capacity(rows.len() * channels.len());
            for row in rows {
                if row.len() != channels.len() + 2 {
                    return Err(Error::parse(&path, "ragged row"));
                }
                for v in &row[2..] {
                    data.push(parse_num(&path, v)?);
                }
            }
            channel_names = channels;
            tensors.push(data);
        }
        let masks = tensors.pop().expect("two tensors");
        let series = tensors.pop().expect("two tensors");

        let diagnoses = DiagnosisMatrix::from_coo(&read_string(&dir.join(files::DIAGNOSES))?)?;
        if diagnoses.n_rows() != n {
            return Err(Error::Data("diagnosis matrix row count does not match cohort".into()));
        }
        let vocabulary = DiagnosisVocabulary::from_csv(
            &read_string(&dir.join(files::VOCABULARY))?,
            config.prevalence_threshold,
        )?;
        if vocabulary.len() != diagnoses.n_cols() {
            return Err(Error::Data("vocabulary size does not match diagnosis matrix".into()));
        }

        let path = dir.join(files::SCALERS);
        let mut scalers = ScalerParams::new();
        for row in csv_rows(&path)?.1 {
            scalers.insert(
                row[0].clone(),
                Scaler {
                    p5: parse_num(&path, &row[1])?,
                    p95: parse_num(&path, &row[2])?,
                },
            );
        }

        Ok(Self {
            config,
            patient_ids,
            split,
            ihm,
            los,
            static_names,
            static_features,
            channel_names,
            series,
            masks,
            diagnoses,
            vocabulary,
            scalers,
        })
    }
}

/// File names inside a preprocessed dataset directory.
pub mod files {
    pub const CONFIG: &str = "preprocess.json";
    pub const COHORT: &str = "cohort.csv";
    pub const STATIC: &str = "static.csv";
    pub const SERIES: &str = "series.csv";
    pub const MASKS: &str = "masks.csv";
    pub const DIAGNOSES: &str = "diagnoses.coo";
    pub const VOCABULARY: &str = "vocabulary.csv";
    pub const SCALERS: &str = "scalers.csv";
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn join_row(values: &[f64]) -> String {
    let mut line = values.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn parse_num(path: &Path, raw: &str) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::parse(path, format!("invalid number `{raw}`")))
}

fn csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.map(|r| r.iter().map(String::from).collect())
                .map_err(|e| Error::parse(path, e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}
