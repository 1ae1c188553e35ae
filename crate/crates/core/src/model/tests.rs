use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::LstmCell;
use super::*;
use crate::tensor::gradcheck::{check_gradients, GradCheckOptions};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_inputs(n: usize, n_targets: usize, dims: InputDims, seed: u64) -> NodeInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |r: usize, c: usize| {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    NodeInputs {
        steps: (0..dims.horizon).map(|_| m(n, dims.series)).collect(),
        static_x: m(n_targets, dims.static_width),
    }
}

fn tiny_config(kind: GnnKind, task: Task) -> ModelConfig {
    ModelConfig {
        task,
        gnn_kind: kind,
        lstm_hidden: 3,
        gnn_hidden: 3,
        gnn_out: 3,
        gat_heads: 2,
        gat_out_heads: 2,
        mpnn_steps: 2,
        static_hidden: 3,
        dropout: 0.0,
        ..Default::default()
    }
}

const DIMS: InputDims = InputDims {
    series: 2,
    horizon: 4,
    static_width: 3,
};

/// Six nodes: targets 0..4 with neighbors drawn from all six.
fn toy_batch() -> BatchGraph {
    let e = |src, dst, score| LocalEdge { src, dst, score };
    BatchGraph {
        nodes: vec![10, 11, 12, 13, 14, 15],
        n_targets: 4,
        edges: vec![
            e(1, 0, 0.5),
            e(4, 0, -1.0),
            e(0, 1, 0.5),
            e(5, 1, 2.0),
            e(5, 1, 2.0),
            e(3, 2, -0.3),
            e(4, 3, 1.1),
        ],
    }
}

fn run(model: &Model, batch: &BatchGraph, inputs: &NodeInputs) -> (Vec<f64>, Vec<f64>) {
    let tape = Tape::new();
    let p = model.params.register(&tape);
    let out = model.forward(&tape, &p, batch, inputs, None).unwrap();
    (out.y.value().into_data(), out.y_lstm.value().into_data())
}

#[test]
fn temporal_embedding_width_is_twice_hidden() {
    for t in [1, 4] {
        let dims = InputDims { horizon: t, ..DIMS };
        let model = Model::new(tiny_config(GnnKind::Sage, Task::Los), dims, 1).unwrap();
        let tape = Tape::new();
        let p = model.params.register(&tape);
        let batch = toy_batch();
        let inputs = random_inputs(6, 4, dims, 2);
        let out = model.forward(&tape, &p, &batch, &inputs, None).unwrap();
        assert_eq!(out.h_t.shape(), [6, 6]);
        assert_eq!(out.y.shape(), [4, 1]);
    }
}

#[test]
fn lstm_cell_matches_hand_unrolled_oracle() {
    // Scalar hidden state, scalar input, two steps.
    let (wi, wf, wg, wo) = (0.5, -0.3, 0.8, 0.1);
    let (ui, uf, ug, uo) = (0.2, 0.4, -0.6, 0.3);
    let (bi, bf, bg, bo) = (0.1, 0.2, 0.0, -0.1);
    let xs = [1.0, -2.0];
    let mut h = 0.0;
    let mut c = 0.0;
    for &x in &xs {
        let i = sigmoid(wi * x + ui * h + bi);
        let f = sigmoid(wf * x + uf * h + bf);
        let g = (wg * x + ug * h + bg).tanh();
        let o = sigmoid(wo * x + uo * h + bo);
        c = f * c + i * g;
        h = o * c.tanh();
    }

    let tape = Tape::new();
    let p = vec![
        tape.param(Tensor::matrix(1, 4, vec![wi, wf, wg, wo]).unwrap()),
        tape.param(Tensor::matrix(1, 4, vec![ui, uf, ug, uo]).unwrap()),
        tape.param(Tensor::vector(vec![bi, bf, bg, bo]).unwrap()),
    ];
    let cell = LstmCell { w_ih: 0, w_hh: 1, b: 2, hidden: 1 };
    let inputs: Vec<Var> = xs.iter().map(|&x| tape.constant(Tensor::matrix(1, 1, vec![x]).unwrap())).collect();
    let states = cell.run(&p, &inputs, false).unwrap();
    assert!((states[1].item() - h).abs() < 1e-15);
}

#[test]
fn zero_lstm_parameters_give_zero_state() {
    let tape = Tape::new();
    let p = vec![
        tape.param(Tensor::zeros(&[2, 4])),
        tape.param(Tensor::zeros(&[1, 4])),
        tape.param(Tensor::zeros(&[4])),
    ];
    let cell = LstmCell { w_ih: 0, w_hh: 1, b: 2, hidden: 1 };
    let xs: Vec<Var> = (0..2).map(|_| tape.constant(Tensor::zeros(&[1, 2]))).collect();
    // i = f = o = 0.5 and g = tanh(0) = 0, so c and h stay at 0.
    for h in cell.run(&p, &xs, true).unwrap() {
        assert_eq!(h.item(), 0.0);
    }
}

fn with_params(model: &mut Model, f: impl Fn(&str, &mut Tensor)) {
    let names = model.params.names().to_vec();
    for (name, t) in names.iter().zip(model.params.tensors_mut()) {
        f(name, t);
    }
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        t.data_mut()[i * n + i] = 1.0;
    }
    t
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

#[test]
fn gcn_two_node_hand_example() {
    let cfg = ModelConfig {
        lstm_hidden: 1,
        gnn_out: 2,
        ..tiny_config(GnnKind::Gcn, Task::Los)
    };
    let mut model = Model::new(cfg, DIMS, 0).unwrap();
    with_params(&mut model, |name, t| match name {
        "gnn.gcn.l0.w" => *t = identity(2),
        "gnn.gcn.l0.b" => *t = Tensor::zeros(&[2]),
        _ => {}
    });
    let e = LocalEdge { src: 1, dst: 0, score: 0.0 };
    let batch = BatchGraph { nodes: vec![0, 1], n_targets: 2, edges: vec![e] };
    let inputs = random_inputs(2, 2, DIMS, 5);
    let tape = Tape::new();
    let p = model.params.register(&tape);
    let xs: Vec<Var> = inputs.steps.iter().map(|x| tape.constant(x.clone())).collect();
    let h = model.layout.lstm.encode(&p, &xs).unwrap().value();
    let mut att = None;
    let out = model
        .layout
        .gnn
        .encode(&p, tape.constant(h.clone()), &[e], &mut att)
        .unwrap()
        .unwrap()
        .value();
    // Degrees with self loops: node 0 -> 2, node 1 -> 1.
    for j in 0..2 {
        let expect0 = elu(h.at(0, j) / 2.0 + h.at(1, j) / 2f64.sqrt());
        let expect1 = elu(h.at(1, j));
        assert!((out.at(0, j) - expect0).abs() < 1e-14);
        assert!((out.at(1, j) - expect1).abs() < 1e-14);
    }
    let _ = batch;
}

#[test]
fn gat_two_node_hand_softmax() {
    let cfg = ModelConfig {
        lstm_hidden: 1,
        gnn_out: 2,
        gat_out_heads: 1,
        ..tiny_config(GnnKind::Gat, Task::Los)
    };
    let model = Model::new(cfg, DIMS, 4).unwrap();
    let e = LocalEdge { src: 1, dst: 0, score: 0.0 };
    let inputs = random_inputs(2, 2, DIMS, 5);
    let tape = Tape::new();
    let p = model.params.register(&tape);
    let xs: Vec<Var> = inputs.steps.iter().map(|x| tape.constant(x.clone())).collect();
    let h = model.layout.lstm.encode(&p, &xs).unwrap();
    let mut att = None;
    model.layout.gnn.encode(&p, h, &[e], &mut att).unwrap();
    let att = att.unwrap();

    let w = model.params.get("gnn.gat.l0.w").unwrap();
    let a_src = model.params.get("gnn.gat.l0.a_src").unwrap();
    let a_dst = model.params.get("gnn.gat.l0.a_dst").unwrap();
    let hv = h.value();
    let z = |i: usize| -> Vec<f64> {
        (0..2).map(|c| (0..2).map(|k| hv.at(i, k) * w.at(k, c)).sum()).collect()
    };
    let dot = |v: &[f64], a: &Tensor| v[0] * a.at(0, 0) + v[1] * a.at(1, 0);
    let lrelu = |x: f64| if x > 0.0 { x } else { 0.2 * x };
    let logit_neigh = lrelu(dot(&z(1), a_src) + dot(&z(0), a_dst));
    let logit_self = lrelu(dot(&z(0), a_src) + dot(&z(0), a_dst));
    let expect = logit_neigh.exp() / (logit_neigh.exp() + logit_self.exp());
    // Edge order: the real edge, then self loops 0 and 1.
    assert_eq!((att.src.clone(), att.dst.clone()), (vec![1, 0, 1], vec![0, 0, 1]));
    assert!((att.weights.at(0, 0) - expect).abs() < 1e-14);
    assert!((att.weights.at(0, 0) + att.weights.at(1, 0) - 1.0).abs() < 1e-15);
    assert_eq!(att.weights.at(2, 0), 1.0);
}

#[test]
fn output_ranges() {
    for kind in GnnKind::ALL {
        let inputs = random_inputs(6, 4, DIMS, 9);
        let ihm = Model::new(tiny_config(kind, Task::Ihm), DIMS, 3).unwrap();
        let (y, yl) = run(&ihm, &toy_batch(), &inputs);
        assert!(y.iter().chain(&yl).all(|v| *v > 0.0 && *v < 1.0));
        let los = Model::new(tiny_config(kind, Task::Los), DIMS, 3).unwrap();
        let (y, yl) = run(&los, &toy_batch(), &inputs);
        assert!(y.iter().chain(&yl).all(|v| *v > 0.0));
    }
}

#[test]
fn baseline_ignores_neighbors() {
    let model = Model::new(tiny_config(GnnKind::None, Task::Los), DIMS, 3).unwrap();
    let inputs = random_inputs(6, 4, DIMS, 9);
    let (with_edges, _) = run(&model, &toy_batch(), &inputs);
    let mut isolated = toy_batch();
    isolated.edges.clear();
    assert_eq!(run(&model, &isolated, &inputs).0, with_edges);
    assert!(model.params.names().iter().all(|n| !n.starts_with("gnn.")));
}

#[test]
fn static_width_follows_config() {
    let model = Model::new(tiny_config(GnnKind::Gcn, Task::Los), DIMS, 0).unwrap();
    assert_eq!(model.params.get("static.w").unwrap().shape(), [3, 3]);
    let wide = InputDims { static_width: 3 + 7, ..DIMS };
    let model = Model::new(tiny_config(GnnKind::Gcn, Task::Los), wide, 0).unwrap();
    assert_eq!(model.params.get("static.w").unwrap().shape(), [10, 3]);
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for kind in GnnKind::ALL {
        for task in [Task::Ihm, Task::Los] {
            let model = Model::new(tiny_config(kind, task), DIMS, 11).unwrap();
            let batch = toy_batch();
            let inputs = random_inputs(6, 4, DIMS, 12);
            let report = check_gradients(model.params.tensors(), &GradCheckOptions::default(), |tape, p| {
                let out = model.forward(tape, p, &batch, &inputs, None)?;
                out.y.add(&out.y_lstm.scale(0.7))?.log1p()?.sum().ln()
            })
            .unwrap();
            assert!(
                report.max_rel_error <= 1e-4,
                "{kind} {task}: {} at {:?} ({})",
                report.max_rel_error,
                report.worst,
                model.params.names()[report.worst.0]
            );
        }
    }
}

fn permuted(batch: &BatchGraph, inputs: &NodeInputs, perm: &[usize]) -> (BatchGraph, NodeInputs) {
    // perm[new] = old; targets stay in front.
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let b = BatchGraph {
        nodes: perm.iter().map(|&o| batch.nodes[o]).collect(),
        n_targets: batch.n_targets,
        edges: batch
            .edges
            .iter()
            .map(|e| LocalEdge { src: inv[e.src], dst: inv[e.dst], score: e.score })
            .collect(),
    };
    let target_perm: Vec<usize> = perm[..batch.n_targets].to_vec();
    let x = NodeInputs {
        steps: inputs.steps.iter().map(|s| s.select_rows(perm).unwrap()).collect(),
        static_x: inputs.static_x.select_rows(&target_perm).unwrap(),
    };
    (b, x)
}

#[test]
fn permutation_equivariance() {
    let perm = [2, 0, 3, 1, 5, 4];
    for kind in GnnKind::ALL {
        let model = Model::new(tiny_config(kind, Task::Los), DIMS, 21).unwrap();
        let batch = toy_batch();
        let inputs = random_inputs(6, 4, DIMS, 22);
        let (y, _) = run(&model, &batch, &inputs);
        let (pb, px) = permuted(&batch, &inputs, &perm);
        let (py, _) = run(&model, &pb, &px);
        for (new, &old) in perm[..4].iter().enumerate() {
            assert_eq!(py[new].to_bits(), y[old].to_bits(), "{kind}");
        }
    }
}

#[test]
fn nodes_outside_the_receptive_field_do_not_matter() {
    for kind in GnnKind::ALL {
        // One round of message passing: a one-hop receptive field.
        let cfg = ModelConfig { mpnn_steps: 1, ..tiny_config(kind, Task::Los) };
        let model = Model::new(cfg, DIMS, 31).unwrap();
        let batch = toy_batch();
        let inputs = random_inputs(6, 4, DIMS, 32);
        let (y, _) = run(&model, &batch, &inputs);
        // Node 2 only receives from node 3; node 5 feeds node 1 alone.
        let mut changed = inputs.clone();
        for s in &mut changed.steps {
            for v in &mut s.data_mut()[5 * DIMS.series..6 * DIMS.series] {
                *v += 3.0;
            }
        }
        let (y2, _) = run(&model, &batch, &changed);
        assert_eq!(y[2].to_bits(), y2[2].to_bits(), "{kind}");
        assert_eq!(y[0].to_bits(), y2[0].to_bits(), "{kind}");
        if kind != GnnKind::None {
            assert_ne!(y[1], y2[1], "{kind}");
        }
    }
}

#[test]
fn isolated_target_depends_on_itself_only() {
    for kind in GnnKind::ALL {
        let model = Model::new(tiny_config(kind, Task::Los), DIMS, 41).unwrap();
        let inputs = random_inputs(6, 4, DIMS, 42);
        let mut batch = toy_batch();
        batch.edges.retain(|e| e.dst != 2);
        let (y, _) = run(&model, &batch, &inputs);
        let alone = BatchGraph { nodes: vec![12], n_targets: 1, edges: vec![] };
        let x = NodeInputs {
            steps: inputs.steps.iter().map(|s| s.select_rows(&[2]).unwrap()).collect(),
            static_x: inputs.static_x.select_rows(&[2]).unwrap(),
        };
        let (solo, _) = run(&model, &alone, &x);
        assert!((y[2] - solo[0]).abs() < 1e-12, "{kind}");
    }
}

#[test]
fn dropout_is_seeded_and_off_in_evaluation() {
    let cfg = ModelConfig { dropout: 0.5, ..tiny_config(GnnKind::Sage, Task::Los) };
    let model = Model::new(cfg, DIMS, 51).unwrap();
    let inputs = random_inputs(6, 4, DIMS, 52);
    let batch = toy_batch();
    let train = |seed| {
        let tape = Tape::new();
        let p = model.params.register(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.forward(&tape, &p, &batch, &inputs, Some(&mut rng)).unwrap().y.value()
    };
    assert_eq!(train(1), train(1));
    assert_ne!(train(1), train(2));
    assert_eq!(run(&model, &batch, &inputs), run(&model, &batch, &inputs));
}

#[test]
fn dynamic_graph_links_targets_by_embedding_distance() {
    let cfg = ModelConfig { dynamic: true, dynamic_k: 2, ..tiny_config(GnnKind::Gcn, Task::Los) };
    let model = Model::new(cfg, DIMS, 61).unwrap();
    let inputs = random_inputs(6, 4, DIMS, 62);
    let tape = Tape::new();
    let p = model.params.register(&tape);
    let out = model.forward(&tape, &p, &toy_batch(), &inputs, None).unwrap();
    assert_eq!(out.h_t.shape()[0], 4);
    assert_eq!(out.edges.len(), 8);
    assert!(out.edges.iter().all(|e| e.src < 4 && e.dst < 4 && e.src != e.dst));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = ModelConfig { dropout: 1.0, ..Default::default() };
    assert!(matches!(Model::new(bad, DIMS, 0), Err(Error::Config(_))));
    let bad = ModelConfig { alpha: -0.5, ..Default::default() };
    assert!(matches!(Model::new(bad, DIMS, 0), Err(Error::Config(_))));
    let bad = ModelConfig { dynamic: true, gnn_kind: GnnKind::None, ..Default::default() };
    assert!(Model::new(bad, DIMS, 0).is_err());
}
