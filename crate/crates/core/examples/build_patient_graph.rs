//! Diagnosis-similarity scores and the k-nearest-neighbour patient graph.

use lstm_gnn::graph::{build_knn_graph, graph_stats, shared_diagnosis_rate, similarity_score, SimilarityParams};
use lstm_gnn::preprocess::{Dataset, PreprocessConfig};
use lstm_gnn::synth::{generate, SynthConfig};

fn main() -> lstm_gnn::Result<()> {
    // Two patients sharing only a diagnosis seen twice.
    let counts = [5, 4, 2];
    let s = similarity_score(&[2], &[2], &counts, 5.0, 0.001)?;
    println!("shared rare diagnosis: {s:.3}");
    let s = similarity_score(&[0, 1], &[0], &counts, 5.0, 0.001)?;
    println!("shared common diagnosis plus one unshared: {s:.3}");

    let cohort = generate(&SynthConfig {
        n_patients: 600,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let data = Dataset::from_records(&cohort.records, &PreprocessConfig::default())?;
    let rows = data.diagnoses.rows();
    let graph = build_knn_graph(rows, &data.diagnoses.column_counts(), SimilarityParams::default())?;
    println!("{}", graph_stats(&graph));
    println!(
        "neighbors sharing a diagnosis with their target: {:.3}",
        shared_diagnosis_rate(&graph, rows)
    );

    let i = 0;
    println!("patient {} ({} codes):", data.patient_ids[i], rows[i].len());
    for e in graph.neighbors(i) {
        println!("  -> {} score {:.3} ({} codes)", data.patient_ids[e.dst], e.score, rows[e.dst].len());
    }

    let path = std::env::temp_dir().join("lstm-gnn-example.edges");
    graph.save(&path)?;
    println!("edge list written to {}", path.display());
    Ok(())
}
