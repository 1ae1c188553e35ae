use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{joint_loss, task_loss};
use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::sampling::{sample_neighborhood, Pool, SampleAudit};
use crate::error::{Error, Result};
use crate::graph::PatientGraph;
use crate::metrics::{KappaBins, MetricsReport, Task};
use crate::model::{BatchGraph, GnnKind, Model, NodeInputs};
use crate::preprocess::{Dataset, SplitTag};
use crate::tensor::{Tape, Tensor};

/// Stream offset separating evaluation sampling from the training stream.
const EVAL_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Neighbors drawn per node and hop.
    pub sample_size: usize,
    /// Hops of neighborhood sampling.
    pub sample_depth: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            adam: AdamConfig::default(),
            sample_size: 5,
            sample_depth: 1,
            max_epochs: 25,
            patience: 4,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let problems = [
            (self.batch_size == 0, "batch_size must be positive"),
            (self.max_epochs == 0, "max_epochs must be positive"),
            (self.patience == 0, "patience must be positive"),
            (!(a.lr >= 0.0 && a.lr.is_finite()), "lr must be finite and non-negative"),
            (!(0.0..1.0).contains(&a.beta1), "beta1 must be in [0, 1)"),
            (!(0.0..1.0).contains(&a.beta2), "beta2 must be in [0, 1)"),
            (!(a.eps > 0.0), "eps must be positive"),
            (!(a.weight_decay >= 0.0), "weight_decay must be non-negative"),
            (!(self.clip_norm > 0.0), "clip_norm must be positive"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

/// One epoch of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metrics: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochLog {
    pub rows: Vec<EpochRow>,
}

impl EpochLog {
    /// Comma-separated log with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss");
        if let Some(first) = self.rows.first() {
            for (name, _) in &first.val_metrics {
                out.push_str(&format!(",val_{name}"));
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.epoch, r.train_loss, r.val_loss));
            for (_, v) in &r.val_metrics {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: EpochLog,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Every id touched by training-phase sampling.
    pub audit: SampleAudit,
}

/// Predictions for a set of evaluated nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub ids: Vec<usize>,
    pub predictions: Vec<f64>,
    pub predictions_lstm: Vec<f64>,
    pub targets: Vec<f64>,
    pub audit: SampleAudit,
}

fn uses_graph(model: &Model) -> bool {
    model.config.gnn_kind != GnnKind::None && !model.config.dynamic
}

fn check_graph(model: &Model, data: &Dataset, graph: Option<&PatientGraph>) -> Result<()> {
    match graph {
        Some(g) if g.n_nodes() != data.len() => Err(Error::Graph(format!(
            "graph has {} nodes, dataset has {}",
            g.n_nodes(),
            data.len()
        ))),
        None if uses_graph(model) => Err(Error::Config(format!(
            "a {} model needs a patient graph",
            model.config.gnn_kind
        ))),
        _ => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn make_batch(
    model: &Model,
    graph: Option<&PatientGraph>,
    targets: &[usize],
    pool: &Pool,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    audit: &mut SampleAudit,
) -> Result<BatchGraph> {
    match graph {
        Some(g) if uses_graph(model) => {
            sample_neighborhood(g, targets, cfg.sample_size, cfg.sample_depth, pool, rng, Some(audit))
        }
        _ => {
            audit.targets.extend_from_slice(targets);
            audit.outside_pool += targets.iter().filter(|&&t| !pool.contains(t)).count();
            Ok(BatchGraph::isolated(targets))
        }
    }
}

/// Evaluation-mode predictions `(y, y_lstm)` for `ids`.
fn predict_ids(
    model: &Model,
    data: &Dataset,
    graph: Option<&PatientGraph>,
    ids: &[usize],
    cfg: &TrainConfig,
    audit: &mut SampleAudit,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pool = Pool::all(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM);
    let mut y = Vec::with_capacity(ids.len());
    let mut y_lstm = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(cfg.batch_size) {
        let batch = make_batch(model, graph, chunk, &pool, cfg, &mut rng, audit)?;
        let (a, b) = model.predict(data, &batch)?;
        y.extend(a);
        y_lstm.extend(b);
    }
    Ok((y, y_lstm))
}

fn loss_value(task: Task, predictions: &[f64], targets: &[f64]) -> Result<f64> {
    let tape = Tape::new();
    let y_hat = tape.constant(Tensor::matrix(predictions.len(), 1, predictions.to_vec())?);
    Ok(task_loss(task, &y_hat, targets)?.item())
}

/// Output bias whose prediction matches the training labels on average in the
/// space the loss compares them.
fn mean_bias(task: Task, labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    match task {
        Task::Ihm => {
            let p = (labels.iter().sum::<f64>() / n).clamp(1e-3, 1.0 - 1e-3);
            (p / (1.0 - p)).ln()
        }
        Task::Los => {
            let mean_log = labels.iter().map(|y| y.ln_1p()).sum::<f64>() / n;
            mean_log.exp_m1().max(1e-3).ln()
        }
    }
}

fn gather_labels(all: &[f64], ids: &[usize]) -> Vec<f64> {
    ids.iter().map(|&i| all[i]).collect()
}

/// Sets both output biases so the untrained model predicts the average
/// training label. Call once on a fresh model, before [`train`].
pub fn init_output_bias(model: &mut Model, data: &Dataset) -> Result<()> {
    let ids = data.indices(SplitTag::Train);
    if ids.is_empty() {
        return Err(Error::Contract("no training nodes to initialize the output bias".into()));
    }
    let bias = mean_bias(model.task(), &gather_labels(data.labels(model.task()), &ids));
    model.set_output_bias(bias);
    Ok(())
}

/// Trains `model` on the training split with neighbors sampled from training
/// nodes only, stopping early on validation loss and restoring the best
/// parameters.
pub fn train(model: &mut Model, data: &Dataset, graph: Option<&PatientGraph>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_graph(model, data, graph)?;
    let task = model.task();
    let alpha = model.config.alpha;
    let labels = data.labels(task);
    let train_ids = data.indices(SplitTag::Train);
    let val_ids = data.indices(SplitTag::Val);
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::Contract(format!(
            "training needs train and validation nodes, got {} and {}",
            train_ids.len(),
            val_ids.len()
        )));
    }
    let val_labels = gather_labels(labels, &val_ids);

    let pool = Pool::from_indices(data.len(), &train_ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, model.params.tensors());
    let mut audit = SampleAudit::default();
    let mut log = EpochLog::default();
    let mut best = (f64::INFINITY, 0, model.params.tensors().to_vec());
    let mut waited = 0;
    let mut stopped_early = false;
    let bins = KappaBins::default();
    let mut order = train_ids.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let non_finite = |model: &Model| Error::NonFinite {
                epoch,
                batch: b + 1,
                param_norm: model.params.global_norm(),
            };
            let batch = make_batch(model, graph, chunk, &pool, cfg, &mut rng, &mut audit)?;
            let inputs = NodeInputs::gather(data, &batch, model.config.diag_static)?;
            let targets = gather_labels(labels, chunk);
            let tape = Tape::new();
            let p = model.params.register(&tape);
            let out = model.forward(&tape, &p, &batch, &inputs, Some(&mut rng))?;
            if !out.y.value().is_finite() || !out.y_lstm.value().is_finite() {
                return Err(non_finite(model));
            }
            let loss = joint_loss(task, &out.y, &out.y_lstm, &targets, alpha)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(non_finite(model));
            }
            tape.backward(loss)?;
            let mut grads: Vec<Tensor> = p
                .iter()
                .zip(model.params.tensors())
                .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect();
            if !clip_global_norm(&mut grads, cfg.clip_norm).is_finite() {
                return Err(non_finite(model));
            }
            adam.step(model.params.tensors_mut(), &grads)?;
            loss_sum += value * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_ids.len() as f64;

        let (val_pred, _) = predict_ids(model, data, graph, &val_ids, cfg, &mut SampleAudit::default())?;
        if val_pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                batch: 0,
                param_norm: model.params.global_norm(),
            });
        }
        let val_loss = loss_value(task, &val_pred, &val_labels)?;
        let report = MetricsReport::compute(task, &val_pred, &val_labels, &bins)?;
        log.rows.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            val_metrics: report.values,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.params.tensors().to_vec());
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    let (best_val_loss, best_epoch, tensors) = best;
    model.params.tensors_mut().clone_from_slice(&tensors);
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val_loss,
        stopped_early,
        audit,
    })
}

/// Scores `test_ids` with dropout off and neighbors drawn from every node.
pub fn evaluate_inductive(
    model: &Model,
    data: &Dataset,
    graph: Option<&PatientGraph>,
    test_ids: &[usize],
    cfg: &TrainConfig,
    bins: &KappaBins,
) -> Result<Evaluation> {
    if test_ids.is_empty() {
        return Err(Error::Contract("evaluation needs at least one test node".into()));
    }
    if let Some(&bad) = test_ids.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Index {
            what: "test id",
            index: bad,
            len: data.len(),
        });
    }
    check_graph(model, data, graph)?;
    let mut audit = SampleAudit::default();
    let (predictions, predictions_lstm) = predict_ids(model, data, graph, test_ids, cfg, &mut audit)?;
    let targets = gather_labels(data.labels(model.task()), test_ids);
    let report = MetricsReport::compute(model.task(), &predictions, &targets, bins)?;
    Ok(Evaluation {
        report,
        ids: test_ids.to_vec(),
        predictions,
        predictions_lstm,
        targets,
        audit,
    })
}
