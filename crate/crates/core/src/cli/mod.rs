//! Command-line surface. Every stage reads and writes plain files and leaves
//! a `manifest.json` with hashes of what it consumed and produced.

mod compare;
mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use compare::{compare_sets, Cell, CompareRow, Comparison, RunSet, BETTER, CONFIG_FILE, METRICS_FILE, SIGNIFICANCE, WORSE};
pub use manifest::{hash_path, sha256_hex, FileHash, RunManifest, MANIFEST_FILE};

use crate::config::{parse_struct, struct_to_text, RunConfig};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, read_string, write_string};
use crate::graph::{build_knn_graph, graph_stats, PatientGraph, SimilarityParams};
use crate::metrics::Task;
use crate::model::{GnnKind, Model};
use crate::preprocess::{read_records, Dataset, PreprocessConfig, SplitTag};
use crate::synth::{generate, SynthConfig};
use crate::train::{evaluate_inductive, init_output_bias, train, Evaluation};

pub const EPOCH_LOG_FILE: &str = "epoch_log.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Debug, Parser)]
#[command(name = "lstm-gnn", version, about = "LSTM-GNN patient outcome pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort in the raw ingestion format.
    Generate(GenerateArgs),
    /// Scale, resample and encode raw records into a dataset directory.
    Preprocess(PreprocessArgs),
    /// Build the diagnosis k-NN patient graph.
    BuildGraph(BuildGraphArgs),
    /// Train a model and score the test split.
    Train(TrainArgs),
    /// Re-score a trained run from its checkpoint.
    Evaluate(EvaluateArgs),
    /// Mean ± 95% CI table over run sets with significance markers.
    Compare(CompareArgs),
    /// Dump GAT attention coefficients.
    ExportAttention(ExportAttentionArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, env = "LSTM_GNN_RAW")]
    pub out: PathBuf,
    /// `key = value` generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, env = "LSTM_GNN_RAW")]
    pub input: PathBuf,
    #[arg(long, env = "LSTM_GNN_DATA")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the train/validation/test split.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Dataset directory.
    #[arg(long, env = "LSTM_GNN_DATA")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.001)]
    pub c: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, env = "LSTM_GNN_GRAPH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "LSTM_GNN_DATA")]
    pub data: PathBuf,
    /// Needed unless `--gnn none` or `--dynamic`.
    #[arg(long, env = "LSTM_GNN_GRAPH")]
    pub graph: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub gnn: Option<GnnKind>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Leave the diagnosis vector out of the static input.
    #[arg(long)]
    pub no_diag_static: bool,
    /// Per-batch k-NN over LSTM states instead of the diagnosis graph.
    #[arg(long)]
    pub dynamic: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, env = "LSTM_GNN_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "LSTM_GNN_GRAPH")]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Output directory; defaults to `<run>/eval-<split>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories or directories of runs; the first is the baseline.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportAttentionArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, env = "LSTM_GNN_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "LSTM_GNN_GRAPH")]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

fn parse_kind(s: &str) -> std::result::Result<GnnKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, args: &[String]) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a, args),
        Command::Preprocess(a) => cmd_preprocess(a, args),
        Command::BuildGraph(a) => cmd_build_graph(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Evaluate(a) => cmd_evaluate(a, args),
        Command::Compare(a) => cmd_compare(a),
        Command::ExportAttention(a) => cmd_export_attention(a, args),
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found")))
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".");
    name.push(MANIFEST_FILE);
    path.with_file_name(name)
}

fn cmd_generate(a: GenerateArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => parse_struct(&read_string(p)?)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = a.patients {
        cfg.n_patients = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut manifest = RunManifest::new("generate", args);
    if let Some(p) = &a.config {
        manifest.add_inputs(p)?;
    }
    let cohort = generate(&cfg)?;
    cohort.save(&a.out)?;
    manifest.config = struct_to_text(&cfg)?;
    manifest.seeds.insert("root".into(), cfg.seed);
    manifest.add_outputs(&a.out)?;
    manifest.timings.push(("generate".into(), t0.elapsed().as_secs_f64()));
    manifest.save(&a.out.join(MANIFEST_FILE))?;
    println!("generated {} patients in {}", cohort.records.len(), a.out.display());
    Ok(())
}

fn cmd_preprocess(a: PreprocessArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    require_dir(&a.input)?;
    let mut cfg: PreprocessConfig = match &a.config {
        Some(p) => parse_struct(&read_string(p)?)?,
        None => PreprocessConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut manifest = RunManifest::new("preprocess", args);
    manifest.add_inputs(&a.input)?;
    if let Some(p) = &a.config {
        manifest.add_inputs(p)?;
    }
    let records = read_records(&a.input)?;
    let data = Dataset::from_records(&records, &cfg)?;
    data.save(&a.out)?;
    manifest.config = struct_to_text(&cfg)?;
    manifest.seeds.insert("root".into(), cfg.seed);
    manifest.add_outputs(&a.out)?;
    manifest.timings.push(("preprocess".into(), t0.elapsed().as_secs_f64()));
    manifest.save(&a.out.join(MANIFEST_FILE))?;
    println!(
        "{} patients, {} channels, {} diagnosis columns -> {}",
        data.len(),
        data.n_channels(),
        data.n_diagnoses(),
        a.out.display()
    );
    Ok(())
}

/// The diagnosis k-NN graph of a dataset.
pub fn diagnosis_graph(data: &Dataset, params: SimilarityParams) -> Result<PatientGraph> {
    build_knn_graph(data.diagnoses.rows(), &data.diagnoses.column_counts(), params)
}

fn cmd_build_graph(a: BuildGraphArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    require_dir(&a.input)?;
    let params = SimilarityParams { a: a.a, c: a.c, k: a.k };
    params.validate()?;
    let mut manifest = RunManifest::new("build-graph", args);
    manifest.add_inputs(&a.input)?;
    let data = Dataset::load(&a.input)?;
    let graph = diagnosis_graph(&data, params)?;
    graph.save(&a.out)?;
    manifest.config = struct_to_text(&params)?;
    manifest.add_outputs(&a.out)?;
    manifest.timings.push(("build-graph".into(), t0.elapsed().as_secs_f64()));
    manifest.save(&sidecar(&a.out))?;
    println!("{}", graph_stats(&graph));
    Ok(())
}

fn load_graph(model: &Model, path: Option<&Path>, manifest: &mut RunManifest) -> Result<Option<PatientGraph>> {
    let needed = model.config.gnn_kind != GnnKind::None && !model.config.dynamic;
    match path {
        Some(p) if needed => {
            manifest.add_inputs(p)?;
            Ok(Some(PatientGraph::load(p)?))
        }
        None if needed => Err(Error::Config(format!(
            "a {} model needs --graph",
            model.config.gnn_kind
        ))),
        _ => Ok(None),
    }
}

fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    model.params.save(BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Rebuilds a trained model from a run directory.
pub fn load_model(run: &Path, data: &Dataset) -> Result<(Model, RunConfig)> {
    let cfg = RunConfig::load(&run.join(CONFIG_FILE))?;
    let dims = Model::dims_for(data, &cfg.model);
    let mut model = Model::new(cfg.model.clone(), dims, cfg.train.seed)?;
    let path = run.join(CHECKPOINT_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    model.params.load_values(std::io::BufReader::new(file))?;
    Ok((model, cfg))
}

fn predictions_csv(data: &Dataset, ev: &Evaluation) -> String {
    let mut out = String::from("patient_id,target,prediction,prediction_lstm\n");
    for (k, &i) in ev.ids.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            data.patient_ids[i], ev.targets[k], ev.predictions[k], ev.predictions_lstm[k]
        ));
    }
    out
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    require_dir(&a.data)?;
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = a.gnn {
        cfg.model.gnn_kind = k;
    }
    if let Some(t) = a.task {
        cfg.model.task = t;
    }
    if a.no_diag_static {
        cfg.model.diag_static = false;
    }
    if a.dynamic {
        cfg.model.dynamic = true;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("train", args);
    manifest.add_inputs(&a.data)?;
    if let Some(p) = &a.config {
        manifest.add_inputs(p)?;
    }
    let data = Dataset::load(&a.data)?;
    let dims = Model::dims_for(&data, &cfg.model);
    let mut model = Model::new(cfg.model.clone(), dims, cfg.train.seed)?;
    init_output_bias(&mut model, &data)?;
    let graph = load_graph(&model, a.graph.as_deref(), &mut manifest)?;
    let loaded = t0.elapsed().as_secs_f64();

    let outcome = train(&mut model, &data, graph.as_ref(), &cfg.train)?;
    let trained = t0.elapsed().as_secs_f64();
    let test_ids = data.indices(SplitTag::Test);
    let ev = evaluate_inductive(&model, &data, graph.as_ref(), &test_ids, &cfg.train, &cfg.kappa_bins()?)?;

    create_dir(&a.out)?;
    cfg.save(&a.out.join(CONFIG_FILE))?;
    write_string(&a.out.join(EPOCH_LOG_FILE), &outcome.log.to_csv())?;
    save_checkpoint(&model, &a.out.join(CHECKPOINT_FILE))?;
    write_string(&a.out.join(METRICS_FILE), &ev.report.to_csv())?;
    write_string(&a.out.join(PREDICTIONS_FILE), &predictions_csv(&data, &ev))?;

    manifest.config = cfg.to_text()?;
    manifest.seeds.insert("root".into(), cfg.train.seed);
    manifest.add_outputs(&a.out)?;
    manifest.timings = vec![
        ("load".into(), loaded),
        ("train".into(), trained - loaded),
        ("evaluate".into(), t0.elapsed().as_secs_f64() - trained),
    ];
    manifest.save(&a.out.join(MANIFEST_FILE))?;
    println!(
        "{} {}: {} epochs, best epoch {} (val loss {:.5})",
        cfg.model.gnn_kind,
        cfg.model.task,
        outcome.log.rows.len(),
        outcome.best_epoch,
        outcome.best_val_loss
    );
    for (name, v) in &ev.report.values {
        println!("test {name} {v:.5}");
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    require_dir(&a.data)?;
    require_dir(&a.run)?;
    let mut manifest = RunManifest::new("evaluate", args);
    manifest.add_inputs(&a.data)?;
    manifest.add_inputs(&a.run.join(CONFIG_FILE))?;
    manifest.add_inputs(&a.run.join(CHECKPOINT_FILE))?;
    let data = Dataset::load(&a.data)?;
    let (model, cfg) = load_model(&a.run, &data)?;
    let graph = load_graph(&model, a.graph.as_deref(), &mut manifest)?;
    let tag = match a.split.as_str() {
        "train" => SplitTag::Train,
        "val" => SplitTag::Val,
        _ => SplitTag::Test,
    };
    let ids = data.indices(tag);
    let ev = evaluate_inductive(&model, &data, graph.as_ref(), &ids, &cfg.train, &cfg.kappa_bins()?)?;
    let out = a.out.unwrap_or_else(|| a.run.join(format!("eval-{}", a.split)));
    write_string(&out.join(METRICS_FILE), &ev.report.to_csv())?;
    write_string(&out.join(PREDICTIONS_FILE), &predictions_csv(&data, &ev))?;
    manifest.config = cfg.to_text()?;
    manifest.seeds.insert("root".into(), cfg.train.seed);
    manifest.add_outputs(&out)?;
    manifest.timings.push(("evaluate".into(), t0.elapsed().as_secs_f64()));
    manifest.save(&out.join(MANIFEST_FILE))?;
    for (name, v) in &ev.report.values {
        println!("{} {name} {v:.5}", a.split);
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let sets = a.runs.iter().map(|d| RunSet::load(d)).collect::<Result<Vec<_>>>()?;
    let table = compare_sets(&sets)?;
    print!("{}", table.to_table());
    if let Some(out) = &a.out {
        write_string(out, &table.to_csv())?;
    }
    Ok(())
}

fn cmd_export_attention(a: ExportAttentionArgs, args: &[String]) -> Result<()> {
    let t0 = Instant::now();
    require_dir(&a.data)?;
    require_dir(&a.run)?;
    let mut manifest = RunManifest::new("export-attention", args);
    manifest.add_inputs(&a.data)?;
    manifest.add_inputs(&a.run.join(CHECKPOINT_FILE))?;
    manifest.add_inputs(&a.graph)?;
    let data = Dataset::load(&a.data)?;
    let (model, cfg) = load_model(&a.run, &data)?;
    let graph = PatientGraph::load(&a.graph)?;
    let edges = model.export_attention(&data, &graph, a.batch_size)?;
    let mut text = String::from("src_id,dst_id,head,weight\n");
    for e in &edges {
        text.push_str(&format!(
            "{},{},{},{}\n",
            data.patient_ids[e.src], data.patient_ids[e.dst], e.head, e.weight
        ));
    }
    write_string(&a.out, &text)?;
    manifest.config = cfg.to_text()?;
    manifest.seeds.insert("root".into(), cfg.train.seed);
    manifest.add_outputs(&a.out)?;
    manifest.timings.push(("export-attention".into(), t0.elapsed().as_secs_f64()));
    manifest.save(&sidecar(&a.out))?;
    println!("{} attention coefficients -> {}", edges.len(), a.out.display());
    Ok(())
}
