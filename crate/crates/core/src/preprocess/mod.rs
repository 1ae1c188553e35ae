//! Raw records to model-ready tensors: scaling, hourly resampling,
//! hierarchical diagnosis multi-hot encoding, static vectors and the split.

pub mod dataset;
pub mod diagnoses;
pub mod records;
pub mod resample;
pub mod scaler;
pub mod split;
pub mod static_features;

pub use dataset::{Dataset, PreprocessConfig};
pub use diagnoses::{encode_diagnoses, DiagnosisMatrix, DiagnosisVocabulary, VocabularyEntry};
pub use records::{read_records, write_records, Diagnosis, Labels, Observation, PatientRecord};
pub use resample::resample_hourly;
pub use scaler::{fit_scalers, percentile_sorted, Scaler, ScalerParams};
pub use split::{split_cohort, Split, SplitTag};
pub use static_features::StaticEncoder;
