//! Train a GAT model on a cohort with planted rare diagnosis pairs and list
//! the attention each planted patient pays to its neighbors.

use lstm_gnn::graph::{build_knn_graph, SimilarityParams};
use lstm_gnn::metrics::Task;
use lstm_gnn::model::{GnnKind, Model, ModelConfig};
use lstm_gnn::preprocess::{Dataset, PreprocessConfig};
use lstm_gnn::synth::{generate, SynthConfig};
use lstm_gnn::train::{init_output_bias, train, TrainConfig};

fn main() -> lstm_gnn::Result<()> {
    let cohort = generate(&SynthConfig {
        n_patients: 600,
        planted_pairs: 20,
        seed: 4,
        ..SynthConfig::default()
    })?;
    // Keep the planted codes, which occur only twice.
    let data = Dataset::from_records(
        &cohort.records,
        &PreprocessConfig {
            prevalence_threshold: 0.0,
            ..PreprocessConfig::default()
        },
    )?;
    let graph = build_knn_graph(
        data.diagnoses.rows(),
        &data.diagnoses.column_counts(),
        SimilarityParams::default(),
    )?;
    let config = ModelConfig {
        task: Task::Los,
        gnn_kind: GnnKind::Gat,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config.clone(), Model::dims_for(&data, &config), 4)?;
    init_output_bias(&mut model, &data)?;
    train(&mut model, &data, Some(&graph), &TrainConfig::default())?;
    let attention = model.export_attention(&data, &graph, 64)?;

    let planted: Vec<Option<&str>> = (0..data.len())
        .map(|i| {
            data.diagnoses.row(i).iter().find_map(|&c| {
                let code = data.vocabulary.entries()[c].code.as_str();
                code.contains(".p").then_some(code)
            })
        })
        .collect();
    for target in (0..data.len()).filter(|&i| planted[i].is_some()).take(4) {
        println!("{} ({})", data.patient_ids[target], planted[target].unwrap_or_default());
        for e in attention.iter().filter(|e| e.dst == target) {
            let tag = if e.src == target {
                "self"
            } else if planted[e.src] == planted[target] {
                "shares planted code"
            } else {
                ""
            };
            println!("  <- {} {:.3} {tag}", data.patient_ids[e.src], e.weight);
        }
    }
    Ok(())
}
