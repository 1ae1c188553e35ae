//! Train the LSTM baseline and an LSTM-GNN on the same synthetic cohort and
//! compare their test length-of-stay errors.

use lstm_gnn::graph::{build_knn_graph, SimilarityParams};
use lstm_gnn::metrics::{KappaBins, Task};
use lstm_gnn::model::{GnnKind, Model, ModelConfig};
use lstm_gnn::preprocess::{Dataset, PreprocessConfig, SplitTag};
use lstm_gnn::synth::{generate, SynthConfig};
use lstm_gnn::train::{evaluate_inductive, init_output_bias, train, TrainConfig};

fn main() -> lstm_gnn::Result<()> {
    let seed = 0;
    let cohort = generate(&SynthConfig {
        n_patients: 800,
        seed,
        ..SynthConfig::default()
    })?;
    let data = Dataset::from_records(&cohort.records, &PreprocessConfig::default())?;
    let graph = build_knn_graph(
        data.diagnoses.rows(),
        &data.diagnoses.column_counts(),
        SimilarityParams::default(),
    )?;
    let test = data.indices(SplitTag::Test);
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };

    for kind in [GnnKind::None, GnnKind::Sage] {
        let model_cfg = ModelConfig {
            task: Task::Los,
            gnn_kind: kind,
            ..ModelConfig::default()
        };
        let mut model = Model::new(model_cfg.clone(), Model::dims_for(&data, &model_cfg), seed)?;
        init_output_bias(&mut model, &data)?;
        let outcome = train(&mut model, &data, Some(&graph), &cfg)?;
        let eval = evaluate_inductive(&model, &data, Some(&graph), &test, &cfg, &KappaBins::default())?;
        println!(
            "{kind:>5}: {} epochs (best {}), test msle {:.4} mad {:.3} kappa {:.3}",
            outcome.log.rows.len(),
            outcome.best_epoch,
            eval.report.get("msle").unwrap_or(f64::NAN),
            eval.report.get("mad").unwrap_or(f64::NAN),
            eval.report.get("kappa").unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
