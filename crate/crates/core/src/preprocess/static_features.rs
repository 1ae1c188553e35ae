use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::records::PatientRecord;
use super::scaler::Scaler;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSlot {
    pub name: String,
    pub scaler: Scaler,
    /// Training mean of the raw values, used for imputation.
    pub mean: f64,
    /// Whether a `null:<name>` indicator column is emitted.
    pub indicator: bool,
}

/// Fixed-order static vector layout:
/// scaled numerics, one-hot categoricals (categories sorted), binaries,
/// then missing-value indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticEncoder {
    pub numeric: Vec<NumericSlot>,
    pub categorical: Vec<(String, Vec<String>)>,
    pub binary: Vec<String>,
}

impl StaticEncoder {
    /// Fits scalers, means and category maps on the `train` rows only.
    pub fn fit(records: &[PatientRecord], train: &[usize]) -> Result<Self> {
        let train: Vec<&PatientRecord> = train.iter().map(|&i| &records[i]).collect();
        let mut numeric_names = BTreeSet::new();
        let mut categorical_names = BTreeSet::new();
        let mut binary = BTreeSet::new();
        for r in &train {
            numeric_names.extend(r.static_numeric.keys().cloned());
            categorical_names.extend(r.static_categorical.keys().cloned());
            binary.extend(r.static_binary.keys().cloned());
        }
        let mut numeric = Vec::new();
        for name in numeric_names {
            let values: Vec<f64> = train
                .iter()
                .filter_map(|r| r.static_numeric.get(&name).copied())
                .filter(|v| v.is_finite())
                .collect();
            let scaler = Scaler::fit(&name, &values)?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            numeric.push(NumericSlot {
                indicator: values.len() < train.len(),
                name,
                scaler,
                mean,
            });
        }
        let categorical = categorical_names
            .into_iter()
            .map(|name| {
                let cats: BTreeSet<String> = train
                    .iter()
                    .filter_map(|r| r.static_categorical.get(&name).cloned())
                    .collect();
                (name, cats.into_iter().collect())
            })
            .collect();
        Ok(Self {
            numeric,
            categorical,
            binary: binary.into_iter().collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.numeric.len()
            + self.categorical.iter().map(|(_, c)| c.len()).sum::<usize>()
            + self.binary.len()
            + self.numeric.iter().filter(|s| s.indicator).count()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.numeric.iter().map(|s| s.name.clone()).collect();
        for (name, cats) in &self.categorical {
            names.extend(cats.iter().map(|c| format!("{name}={c}")));
        }
        names.extend(self.binary.iter().cloned());
        names.extend(
            self.numeric
                .iter()
                .filter(|s| s.indicator)
                .map(|s| format!("null:{}", s.name)),
        );
        names
    }

    /// Unseen categories encode as an all-zero block; missing binaries as 0.
    pub fn encode(&self, record: &PatientRecord) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        let mut nulls = Vec::new();
        for slot in &self.numeric {
            let raw = record
                .static_numeric
                .get(&slot.name)
                .copied()
                .filter(|v| v.is_finite());
            out.push(slot.scaler.apply(raw.unwrap_or(slot.mean)));
            if slot.indicator {
                nulls.push(if raw.is_none() { 1.0 } else { 0.0 });
            }
        }
        for (name, cats) in &self.categorical {
            let value = record.static_categorical.get(name);
            out.extend(cats.iter().map(|c| if Some(c) == value { 1.0 } else { 0.0 }));
        }
        for name in &self.binary {
            out.push(if record.static_binary.get(name) == Some(&true) { 1.0 } else { 0.0 });
        }
        out.extend(nulls);
        out
    }
}
