//! Diagnosis-similarity patient graphs: pairwise scores, exact k-NN, the
//! per-batch embedding k-NN, and summary statistics.

pub mod dynamic;
pub mod knn;
pub mod similarity;
pub mod stats;

pub use dynamic::dynamic_knn;
pub use knn::{build_knn_graph, Edge, PatientGraph};
pub use similarity::{similarity_score, SimilarityParams};
pub use stats::{graph_stats, shared_diagnosis_rate, GraphStats};
