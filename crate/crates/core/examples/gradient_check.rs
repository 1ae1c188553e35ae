//! Finite-difference check of every model parameter for each graph encoder.

use lstm_gnn::metrics::Task;
use lstm_gnn::model::{BatchGraph, GnnKind, InputDims, LocalEdge, Model, ModelConfig, NodeInputs};
use lstm_gnn::tensor::gradcheck::{check_gradients, GradCheckOptions};
use lstm_gnn::tensor::Tensor;
use lstm_gnn::train::joint_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lstm_gnn::Result<()> {
    let dims = InputDims {
        series: 2,
        horizon: 4,
        static_width: 3,
    };
    let e = |src, dst, score| LocalEdge { src, dst, score };
    // Six nodes, the first four are prediction targets.
    let batch = BatchGraph {
        nodes: (0..6).collect(),
        n_targets: 4,
        edges: vec![e(1, 0, 0.5), e(4, 0, -1.0), e(0, 1, 0.5), e(5, 1, 2.0), e(3, 2, -0.3), e(4, 3, 1.1)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random = |r: usize, c: usize| Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
    let inputs = NodeInputs {
        steps: (0..dims.horizon).map(|_| random(6, dims.series)).collect::<Result<_, _>>()?,
        static_x: random(4, dims.static_width)?,
    };
    let labels = [2.0, 5.5, 1.2, 9.0];

    for kind in GnnKind::ALL {
        let config = ModelConfig {
            task: Task::Los,
            gnn_kind: kind,
            lstm_hidden: 3,
            gnn_hidden: 3,
            gnn_out: 3,
            static_hidden: 3,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let model = Model::new(config, dims, 2)?;
        let report = check_gradients(model.params.tensors(), &GradCheckOptions::default(), |tape, p| {
            let out = model.forward(tape, p, &batch, &inputs, None)?;
            joint_loss(Task::Los, &out.y, &out.y_lstm, &labels, 1.0)
        })?;
        println!(
            "{kind:>5}: {:>4} parameters checked, max relative error {:.2e} (worst in {})",
            report.checked,
            report.max_rel_error,
            model.params.names()[report.worst.0]
        );
    }
    Ok(())
}
