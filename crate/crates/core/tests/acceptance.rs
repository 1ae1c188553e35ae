//! End-to-end acceptance suite. Every criterion writes one `PASS`/`FAIL` line
//! straight to stderr (visible without `--nocapture`) and fails its test on
//! `FAIL`.
//!
//! Criteria 5 to 7 share one set of length-of-stay runs: five seeds of the
//! default 2,000-patient synthetic cohort, trained once per model variant.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lstm_gnn::graph::{build_knn_graph, similarity_score, PatientGraph, SimilarityParams};
use lstm_gnn::metrics::{auprc, auroc, linear_weighted_kappa, paired_t_test, regression_metrics, KappaBins, Task};
use lstm_gnn::model::{BatchGraph, GnnKind, InputDims, LocalEdge, Model, ModelConfig, NodeInputs};
use lstm_gnn::preprocess::{Dataset, PreprocessConfig, SplitTag};
use lstm_gnn::synth::{generate, SynthConfig};
use lstm_gnn::tensor::gradcheck::{check_gradients, GradCheckOptions};
use lstm_gnn::tensor::Tensor;
use lstm_gnn::train::{evaluate_inductive, init_output_bias, joint_loss, task_loss, train, TrainConfig};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const GRAPH_KINDS: [GnnKind; 3] = [GnnKind::Sage, GnnKind::Gat, GnnKind::Mpnn];

fn report(id: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    // The raw handle bypasses the test harness's output capture.
    let _ = writeln!(std::io::stderr(), "criterion {id:>2}: {tag}  {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

fn dataset(cfg: &SynthConfig, preprocess: PreprocessConfig) -> (Dataset, PatientGraph) {
    let records = generate(cfg).unwrap().records;
    let data = Dataset::from_records(&records, &preprocess).unwrap();
    let graph = build_knn_graph(
        data.diagnoses.rows(),
        &data.diagnoses.column_counts(),
        SimilarityParams::default(),
    )
    .unwrap();
    (data, graph)
}

fn small_cohort(seed: u64) -> (Dataset, PatientGraph) {
    let cfg = SynthConfig {
        n_patients: 240,
        m_leaf: 12,
        depth: 2,
        common_leaves: 3,
        channels: 2,
        horizon: 8,
        seed,
        ..SynthConfig::default()
    };
    dataset(
        &cfg,
        PreprocessConfig {
            horizon: 8,
            seed,
            ..PreprocessConfig::default()
        },
    )
}

fn small_model(data: &Dataset, kind: GnnKind, dynamic: bool, seed: u64) -> Model {
    let cfg = ModelConfig {
        gnn_kind: kind,
        dynamic,
        lstm_hidden: 6,
        gnn_hidden: 6,
        gnn_out: 6,
        static_hidden: 6,
        ..ModelConfig::default()
    };
    let mut model = Model::new(cfg.clone(), Model::dims_for(data, &cfg), seed).unwrap();
    init_output_bias(&mut model, data).unwrap();
    model
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let start = Instant::now();
    let dims = InputDims {
        series: 2,
        horizon: 4,
        static_width: 3,
    };
    let e = |src, dst, score| LocalEdge { src, dst, score };
    let batch = BatchGraph {
        nodes: vec![0, 1, 2, 3, 4, 5],
        n_targets: 4,
        edges: vec![e(1, 0, 0.5), e(4, 0, -1.0), e(0, 1, 0.5), e(5, 1, 2.0), e(3, 2, -0.3), e(4, 3, 1.1), e(2, 3, 0.2)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = |r: usize, c: usize| Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let inputs = NodeInputs {
        steps: (0..dims.horizon).map(|_| m(6, dims.series)).collect(),
        static_x: m(4, dims.static_width),
    };

    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for kind in GnnKind::ALL {
        for (task, targets) in [(Task::Los, [1.5, 3.0, 7.2, 2.1]), (Task::Ihm, [0.0, 1.0, 1.0, 0.0])] {
            let cfg = ModelConfig {
                task,
                gnn_kind: kind,
                lstm_hidden: 3,
                gnn_hidden: 3,
                gnn_out: 3,
                static_hidden: 3,
                gat_heads: 2,
                gat_out_heads: 2,
                dropout: 0.0,
                ..ModelConfig::default()
            };
            let model = Model::new(cfg, dims, 7).unwrap();
            let r = check_gradients(model.params.tensors(), &GradCheckOptions::default(), |tape, p| {
                let out = model.forward(tape, p, &batch, &inputs, None)?;
                joint_loss(task, &out.y, &out.y_lstm, &targets, 1.0)
            })
            .unwrap();
            checked += r.checked;
            if r.max_rel_error > worst.0 || worst.1.is_empty() {
                worst = (r.max_rel_error, format!("{kind}/{task} {}", model.params.names()[r.worst.0]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst.0 <= 1e-4 && secs < 60.0,
        &format!("{checked} entries, max rel error {:.2e} ({}), {secs:.1}s", worst.0, worst.1),
    );
}

/// Dense all-pairs construction straight from the score definition.
fn naive_knn(rows: &[Vec<usize>], counts: &[usize], p: SimilarityParams) -> Vec<Vec<(usize, f64)>> {
    let m = counts.len();
    let dense: Vec<Vec<bool>> = rows
        .iter()
        .map(|r| {
            let mut d = vec![false; m];
            r.iter().for_each(|&c| d[c] = true);
            d
        })
        .collect();
    let n = rows.len();
    (0..n)
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let mut shared = 0.0;
                    let mut total = 0usize;
                    for mu in 0..m {
                        if dense[i][mu] && dense[j][mu] {
                            shared += 1.0 / counts[mu] as f64 + p.c;
                        }
                        total += dense[i][mu] as usize + dense[j][mu] as usize;
                    }
                    (j, p.a * shared - total as f64)
                })
                .collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            all.truncate(p.k);
            all
        })
        .collect()
}

#[test]
fn criterion_02_knn_graph_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut largest = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=500);
        let m = rng.random_range(1..=30);
        let density = rng.random_range(0.02..0.3);
        let rows: Vec<Vec<usize>> = (0..n).map(|_| (0..m).filter(|_| rng.random_bool(density)).collect()).collect();
        let mut counts = vec![0usize; m];
        rows.iter().flatten().for_each(|&c| counts[c] += 1);
        // Unused columns still need a positive count.
        counts.iter_mut().filter(|c| **c == 0).for_each(|c| *c = rng.random_range(1..5));
        let params = SimilarityParams {
            a: rng.random_range(0.5..8.0),
            c: rng.random_range(0.0..0.01),
            k: rng.random_range(1..=6),
        };
        let g = build_knn_graph(&rows, &counts, params).unwrap();
        let got: Vec<Vec<(usize, f64)>> = (0..n).map(|i| g.neighbors(i).iter().map(|e| (e.dst, e.score)).collect()).collect();
        if got != naive_knn(&rows, &counts, params) {
            mismatches += 1;
        }
        largest = largest.max(n);
    }

    let (a, c) = (5.0, 0.001);
    let hand = [
        (similarity_score(&[], &[0], &[1, 1, 1], a, c).unwrap(), -1.0),
        (similarity_score(&[2], &[2], &[1, 1, 2], a, c).unwrap(), 0.505),
        (similarity_score(&[0, 1], &[0], &[2, 4, 3], a, c).unwrap(), -0.495),
    ];
    let hand_ok = hand.iter().all(|(got, want)| (got - want).abs() <= 1e-12);
    report(
        2,
        mismatches == 0 && hand_ok,
        &format!("100 cohorts (N <= {largest}), {mismatches} mismatching graphs, hand cases {hand:?}"),
    );
}

fn brute_auroc(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

/// Precision-recall steps from an exhaustive scan of every distinct threshold.
fn brute_auprc(s: &[f64], l: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pos = l.iter().filter(|&&x| x).count() as f64;
    let mut prev = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = (0..s.len()).filter(|&i| s[i] >= t && l[i]).count() as f64;
        let flagged = (0..s.len()).filter(|&i| s[i] >= t).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev) * tp / flagged;
        prev = recall;
    }
    ap
}

/// Pairwise form: observed mean disagreement over the mean disagreement of
/// all prediction/target cross pairs.
fn brute_kappa(p: &[f64], y: &[f64], bins: &KappaBins) -> Option<f64> {
    let w = |a: f64, b: f64| bins.bin(a).abs_diff(bins.bin(b)) as f64 / (bins.count() - 1) as f64;
    let n = p.len() as f64;
    let observed: f64 = p.iter().zip(y).map(|(&a, &b)| w(a, b)).sum::<f64>() / n;
    let mut chance = 0.0;
    for &a in p {
        for &b in y {
            chance += w(a, b);
        }
    }
    chance /= n * n;
    (chance > 0.0).then(|| 1.0 - observed / chance)
}

#[test]
fn criterion_03_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bins = KappaBins::default();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        // Coarse scores so that ties are common.
        let levels = rng.random_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        worst = worst.max((auroc(&scores, &labels).unwrap() - brute_auroc(&scores, &labels)).abs());
        worst = worst.max((auprc(&scores, &labels).unwrap() - brute_auprc(&scores, &labels)).abs());

        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0f64..30.0).round()).collect();
        let p: Vec<f64> = y.iter().map(|v| (v + rng.random_range(-4.0..4.0)).max(0.5)).collect();
        if let Some(k) = brute_kappa(&p, &y, &bins) {
            worst = worst.max((linear_weighted_kappa(&p, &y, &bins).unwrap() - k).abs());
            compared += 1;
        }
    }
    let r = regression_metrics(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
    let hand_ok = r.mad == 1.5 && r.mape == 100.0 && r.mse == 2.5;
    let ident = regression_metrics(&[1.0, 3.0, 5.0], &[1.0, 3.0, 5.0]).unwrap();
    let ident_ok = ident.mad == 0.0 && ident.mape == 0.0 && ident.mse == 0.0 && ident.msle == 0.0 && ident.r2 == 1.0;
    let mean = regression_metrics(&[3.0, 3.0, 3.0], &[1.0, 3.0, 5.0]).unwrap();
    report(
        3,
        worst <= 1e-9 && compared > 900 && hand_ok && ident_ok && mean.r2 == 0.0,
        &format!("1000 inputs, max deviation {worst:.2e}, kappa compared on {compared}, regression hand cases exact: {}", hand_ok && ident_ok && mean.r2 == 0.0),
    );
}

#[test]
fn criterion_04_inductive_protocol() {
    let (data, graph) = small_cohort(4);
    let train_ids = data.indices(SplitTag::Train);
    let test_ids = data.indices(SplitTag::Test);
    let mut failures = Vec::new();
    let mut draws = 0;
    for (kind, dynamic) in [(GnnKind::Gcn, false), (GnnKind::Gat, false), (GnnKind::Sage, false), (GnnKind::Mpnn, false), (GnnKind::Gcn, true)] {
        let mut model = small_model(&data, kind, dynamic, 5);
        let cfg = TrainConfig {
            max_epochs: 1,
            seed: 6,
            ..TrainConfig::default()
        };
        let out = train(&mut model, &data, Some(&graph), &cfg).unwrap();
        let mut seen = out.audit.targets.clone();
        seen.sort_unstable();
        let leaked = out.audit.neighbors.iter().filter(|n| train_ids.binary_search(n).is_err()).count();
        draws += out.audit.draws;
        if out.audit.outside_pool != 0 || leaked != 0 || seen != train_ids {
            failures.push(format!("{kind} train: outside {} leaked {leaked}", out.audit.outside_pool));
        }
        let ev = evaluate_inductive(&model, &data, Some(&graph), &test_ids, &cfg, &KappaBins::default()).unwrap();
        if ev.ids != test_ids || ev.audit.targets != test_ids || ev.audit.outside_pool != 0 {
            failures.push(format!("{kind} eval ids differ from the test split"));
        }
    }
    report(
        4,
        failures.is_empty() && draws > 0,
        &format!("{draws} training draws audited, train {} / test {} ids, failures {failures:?}", train_ids.len(), test_ids.len()),
    );
}

/// Test MSLE of one length-of-stay run on the default cohort.
fn los_run(data: &Dataset, graph: &PatientGraph, seed: u64, kind: GnnKind, diag_static: bool, dynamic: bool) -> (f64, usize) {
    let cfg = ModelConfig {
        task: Task::Los,
        gnn_kind: kind,
        diag_static,
        dynamic,
        ..ModelConfig::default()
    };
    let mut model = Model::new(cfg.clone(), Model::dims_for(data, &cfg), seed).unwrap();
    init_output_bias(&mut model, data).unwrap();
    let tc = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let out = train(&mut model, data, Some(graph), &tc).unwrap();
    let test = data.indices(SplitTag::Test);
    let ev = evaluate_inductive(&model, data, Some(graph), &test, &tc, &KappaBins::default()).unwrap();
    (ev.report.get("msle").unwrap(), out.log.rows.len())
}

/// Variant label -> per-seed test MSLE, plus the most epochs any run used.
struct LosTable {
    msle: BTreeMap<String, Vec<f64>>,
    max_epochs: usize,
}

fn los_table() -> &'static LosTable {
    static TABLE: OnceLock<LosTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut msle: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut max_epochs = 0;
        for seed in SEEDS {
            let (data, graph) = dataset(
                &SynthConfig {
                    seed,
                    ..SynthConfig::default()
                },
                PreprocessConfig {
                    seed,
                    ..PreprocessConfig::default()
                },
            );
            let mut variants = vec![];
            for diag_static in [true, false] {
                let star = if diag_static { "" } else { "*" };
                variants.push((format!("lstm{star}"), GnnKind::None, diag_static, false));
                for kind in GRAPH_KINDS {
                    variants.push((format!("{kind}{star}"), kind, diag_static, false));
                }
            }
            variants.push(("dyn-gcn*".into(), GnnKind::Gcn, false, true));
            for (label, kind, diag_static, dynamic) in variants {
                let (v, epochs) = los_run(&data, &graph, seed, kind, diag_static, dynamic);
                println!("  seed {seed} {label:<9} test msle {v:.5} ({epochs} epochs)");
                msle.entry(label).or_default().push(v);
                max_epochs = max_epochs.max(epochs);
            }
        }
        LosTable { msle, max_epochs }
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Relative MSLE reduction of `model` against `baseline` and the paired p-value.
fn gain(table: &LosTable, model: &str, baseline: &str) -> (f64, f64) {
    let m = &table.msle[model];
    let b = &table.msle[baseline];
    (1.0 - mean(m) / mean(b), paired_t_test(m, b).unwrap().p)
}

#[test]
fn criterion_05_graph_models_beat_lstm_on_los() {
    let start = Instant::now();
    let table = los_table();
    let mut pass = true;
    let mut parts = vec![format!("lstm {:.5}", mean(&table.msle["lstm"]))];
    for kind in GRAPH_KINDS {
        let label = kind.to_string();
        let (g, p) = gain(table, &label, "lstm");
        pass &= g >= 0.05 && p < 0.05;
        parts.push(format!("{label} {:.5} ({:+.1}%, p={p:.3})", mean(&table.msle[&label]), -100.0 * g));
    }
    report(5, pass, &format!("{} [{:.0}s]", parts.join(", "), start.elapsed().as_secs_f64()));
}

#[test]
fn criterion_06_graph_models_beat_lstm_without_diagnosis_statics() {
    let table = los_table();
    let mut pass = true;
    let mut parts = vec![format!("lstm* {:.5}", mean(&table.msle["lstm*"]))];
    for kind in GRAPH_KINDS {
        let label = format!("{kind}*");
        let (g, p) = gain(table, &label, "lstm*");
        pass &= g >= 0.05;
        parts.push(format!("{label} {:.5} ({:+.1}%, p={p:.3})", mean(&table.msle[&label]), -100.0 * g));
    }
    report(6, pass, &parts.join(", "));
}

#[test]
fn criterion_07_dynamic_gcn_is_not_worse_than_lstm() {
    let table = los_table();
    let dynamic = mean(&table.msle["dyn-gcn*"]);
    let lstm = mean(&table.msle["lstm*"]);
    report(
        7,
        dynamic <= lstm * 1.01,
        &format!("dyn-gcn* {dynamic:.5} vs lstm* {lstm:.5} (limit {:.5})", lstm * 1.01),
    );
}

#[test]
fn criterion_08_attention_is_normalized_and_finds_the_planted_partner() {
    let mut worst_sum = 0.0f64;
    let mut rates = Vec::new();
    for seed in [0, 1, 2] {
        let cfg = SynthConfig {
            planted_pairs: 100,
            planted_effect: 2.0,
            seed,
            ..SynthConfig::default()
        };
        // A zero threshold keeps the two-patient planted leaves.
        let (data, graph) = dataset(
            &cfg,
            PreprocessConfig {
                seed,
                prevalence_threshold: 0.0,
                ..PreprocessConfig::default()
            },
        );
        let planted: Vec<Option<usize>> = (0..data.len())
            .map(|i| {
                data.diagnoses
                    .row(i)
                    .iter()
                    .copied()
                    .find(|&c| data.vocabulary.entries()[c].code.contains(".p"))
            })
            .collect();
        let mcfg = ModelConfig {
            task: Task::Los,
            gnn_kind: GnnKind::Gat,
            ..ModelConfig::default()
        };
        let mut model = Model::new(mcfg.clone(), Model::dims_for(&data, &mcfg), seed).unwrap();
        init_output_bias(&mut model, &data).unwrap();
        train(&mut model, &data, Some(&graph), &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        let att = model.export_attention(&data, &graph, 64).unwrap();

        let heads = mcfg.gat_out_heads;
        let mut sums = vec![0.0; data.len() * heads];
        let mut by_target: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for e in &att {
            sums[e.dst * heads + e.head] += e.weight;
            if e.src != e.dst {
                by_target.entry((e.dst, e.head)).or_default().push((e.src, e.weight));
            }
        }
        worst_sum = sums.iter().map(|s| (s - 1.0).abs()).fold(worst_sum, f64::max);

        let (mut hits, mut total) = (0, 0);
        for ((dst, _), nbrs) in &by_target {
            let Some(code) = planted[*dst] else { continue };
            let sharing: Vec<f64> = nbrs.iter().filter(|(s, _)| planted[*s] == Some(code)).map(|n| n.1).collect();
            if sharing.len() != 1 {
                continue;
            }
            total += 1;
            if nbrs.iter().all(|n| n.1 <= sharing[0]) {
                hits += 1;
            }
        }
        rates.push(hits as f64 / total.max(1) as f64);
        println!("  seed {seed}: partner has max attention in {hits}/{total} targets");
    }
    let rate = mean(&rates);
    report(
        8,
        worst_sum <= 1e-9 && rate >= 0.7,
        &format!("max |sum - 1| {worst_sum:.1e}, planted-partner hit rate {rate:.3} over 3 seeds"),
    );
}

#[test]
fn criterion_09_identical_seeds_give_identical_artifacts() {
    let (data, graph) = small_cohort(9);
    let test = data.indices(SplitTag::Test);
    let mut differing = Vec::new();
    for kind in GnnKind::ALL {
        let run = || {
            let mut model = small_model(&data, kind, false, 10);
            let cfg = TrainConfig {
                max_epochs: 3,
                seed: 11,
                ..TrainConfig::default()
            };
            let out = train(&mut model, &data, Some(&graph), &cfg).unwrap();
            let mut ckpt = Vec::new();
            model.params.save(&mut ckpt).unwrap();
            let ev = evaluate_inductive(&model, &data, Some(&graph), &test, &cfg, &KappaBins::default()).unwrap();
            (out.log.to_csv(), ckpt, ev.report.to_csv())
        };
        if run() != run() {
            differing.push(kind.to_string());
        }
    }
    report(9, differing.is_empty(), &format!("5 model kinds trained twice, differing: {differing:?}"));
}

#[test]
fn criterion_10_budget_and_best_restore() {
    let (data, graph) = small_cohort(12);
    let default_budget = TrainConfig::default().max_epochs;
    let mut model = small_model(&data, GnnKind::Sage, false, 13);
    let cfg = TrainConfig {
        seed: 14,
        patience: 1000,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &data, Some(&graph), &cfg).unwrap();
    let val = data.indices(SplitTag::Val);
    let ev = evaluate_inductive(&model, &data, Some(&graph), &val, &cfg, &KappaBins::default()).unwrap();
    let tape = lstm_gnn::tensor::Tape::new();
    let y = tape.constant(Tensor::matrix(ev.predictions.len(), 1, ev.predictions.clone()).unwrap());
    let restored = task_loss(Task::Los, &y, &ev.targets).unwrap().item();
    let best = out.log.rows.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    let pass = default_budget == 25 && out.log.rows.len() <= 25 && restored == best && out.best_val_loss == best;
    report(
        10,
        pass,
        &format!(
            "default budget {default_budget}, {} epochs run with unbounded patience, best epoch {} val loss {best:.6}, restored {restored:.6}",
            out.log.rows.len(),
            out.best_epoch
        ),
    );
}

#[test]
fn criterion_10_default_runs_stay_within_budget() {
    let table = los_table();
    report(
        10,
        table.max_epochs <= 25,
        &format!("longest of {} default LOS runs used {} epochs", SEEDS.len() * 9, table.max_epochs),
    );
}
