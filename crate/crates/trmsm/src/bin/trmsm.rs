//! Command-line interface: training, evaluation, probing, synthetic data
//! generation, and multi-seed sweeps.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use trmsm::checkpoint;
use trmsm::config::RunConfig;
use trmsm::data::{
    generate_synthetic, load_jsonl, save_jsonl, split_train_dev, synthetic_label_map,
    Conversation, DatasetSplit, LabelMap, SyntheticConfig, SyntheticRule,
};
use trmsm::encoder::{PrecomputedVectors, ProviderKind};
use trmsm::metrics::MetricsReport;
use trmsm::model::Model;
use trmsm::probe::probe;
use trmsm::trainer::{self, TrainReport};
use trmsm::{Error, Result};

#[derive(Parser)]
#[command(name = "trmsm", about = "Speaker-masked transformer for emotion recognition in conversation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a JSONL dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Dump attention, fusion-weight, mask and prediction CSVs for one
    /// conversation.
    Probe(ProbeArgs),
    /// Generate a synthetic rule-labeled corpus.
    GenSynth(GenSynthArgs),
    /// Train the same configuration across several seeds, optionally
    /// varying one hyperparameter axis.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in hyperparameter preset (iemocap or meld).
    #[arg(long)]
    preset: Option<String>,
    /// Extra key=value overrides, applied after --config/--preset.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Enabled stacks, e.g. "conventional,intra,inter".
    #[arg(long)]
    blocks: Option<String>,
    /// Fusion mode: add, cat or att.
    #[arg(long)]
    fusion: Option<String>,
    /// Context window "x,y" (prior, posterior) or "none".
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    /// Layers per stack.
    #[arg(long)]
    layers: Option<usize>,
    /// Precomputed utterance-vector file (for provider=precomputed).
    #[arg(long)]
    vectors: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(preset) = &self.preset {
            cfg.apply_preset(preset)?;
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.apply_kv(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(blocks) = &self.blocks {
            cfg.apply_kv("blocks", blocks)?;
        }
        if let Some(fusion) = &self.fusion {
            cfg.apply_kv("fusion", fusion)?;
        }
        if let Some(window) = &self.window {
            cfg.apply_kv("window", window)?;
        }
        if let Some(layers) = self.layers {
            cfg.apply_kv("layers", &layers.to_string())?;
        }
        if self.vectors.is_some() {
            cfg.model.encoder.provider = ProviderKind::Precomputed;
        }
        Ok(cfg)
    }

    fn load_vectors(&self) -> Result<Option<PrecomputedVectors>> {
        match &self.vectors {
            Some(path) => Ok(Some(PrecomputedVectors::load(path)?)),
            None => Ok(None),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (train.jsonl, optional dev.jsonl/test.jsonl,
    /// labels.json).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, logs and metrics.
    #[arg(long)]
    out: PathBuf,
    /// Resume from a periodic checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Which split to evaluate: train, dev or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Optional metrics JSON output path (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Precomputed utterance-vector file (for provider=precomputed).
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Which split the conversation lives in.
    #[arg(long, default_value = "test")]
    split: String,
    /// Conversation id (defaults to the first conversation).
    #[arg(long)]
    conv: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-head attention maps.
    #[arg(long)]
    per_head: bool,
    #[arg(long)]
    vectors: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 80)]
    train_convs: usize,
    #[arg(long, default_value_t = 10)]
    dev_convs: usize,
    #[arg(long, default_value_t = 10)]
    test_convs: usize,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    #[arg(long, default_value_t = 12)]
    utterances: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// same-speaker-previous, other-speaker-majority or content-only.
    #[arg(long, default_value = "same-speaker-previous")]
    rule: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated training seeds.
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// Hyperparameter axis to vary: window, layers or blocks.
    #[arg(long)]
    axis: Option<String>,
    /// Semicolon-separated axis values, e.g. "1;2;4" or "none;-5,5".
    #[arg(long, allow_hyphen_values = true)]
    values: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Load a dataset directory: train.jsonl + labels.json are required,
/// dev.jsonl and test.jsonl are optional; a missing dev split is carved
/// out of train.
fn load_dataset(dir: &Path, cfg: &mut RunConfig) -> Result<(DatasetSplit, LabelMap)> {
    let labels = LabelMap::load(&dir.join("labels.json"))?;
    cfg.model.num_classes = labels.num_classes();
    let train = load_jsonl(&dir.join("train.jsonl"), &labels)?;
    let dev_path = dir.join("dev.jsonl");
    let (train, dev) = if dev_path.exists() {
        (train, load_jsonl(&dev_path, &labels)?)
    } else {
        split_train_dev(&train, cfg.split_ratio, cfg.split_seed)?
    };
    let test_path = dir.join("test.jsonl");
    let test = if test_path.exists() {
        load_jsonl(&test_path, &labels)?
    } else {
        Vec::new()
    };
    Ok((DatasetSplit { train, dev, test }, labels))
}

fn pick_split<'a>(split: &'a DatasetSplit, name: &str) -> Result<&'a [Conversation]> {
    match name {
        "train" => Ok(&split.train),
        "dev" => Ok(&split.dev),
        "test" => Ok(&split.test),
        other => Err(Error::Config(format!("unknown split {other:?}"))),
    }
}

fn write_metrics(report: &MetricsReport, path: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(&report)?;
    match path {
        Some(p) => std::fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn model_from_checkpoint(
    path: &Path,
    vectors: Option<PrecomputedVectors>,
) -> Result<Model> {
    let ckpt = checkpoint::load(path)?;
    let model = Model::new(ckpt.config.clone(), vectors, 0)?;
    ckpt.apply_to_model(&model)?;
    Ok(model)
}

fn write_train_outputs(
    out: &Path,
    cfg: &RunConfig,
    report: &TrainReport,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_flat())?;
    let mut log = String::new();
    for entry in &report.log {
        log.push_str(&serde_json::to_string(entry)?);
        log.push('\n');
    }
    std::fs::write(out.join("train_log.jsonl"), log)?;
    checkpoint::save(&out.join("best.ckpt"), &report.best_checkpoint)?;
    checkpoint::save(&out.join("final.ckpt"), &report.final_checkpoint)?;
    for (step, bytes) in &report.periodic_checkpoints {
        checkpoint::save(&out.join(format!("checkpoint-{step}.ckpt")), bytes)?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.config.build()?;
    let (split, _labels) = load_dataset(&args.data, &mut cfg)?;
    let vectors = args.config.load_vectors()?;
    eprintln!(
        "training: {} train / {} dev / {} test conversations, {} classes",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        cfg.model.num_classes
    );
    let report = match &args.resume {
        None => {
            let model = Model::new(cfg.model.clone(), vectors, cfg.train.seed)?;
            trainer::train(&model, &split.train, &split.dev, &cfg.train)?
        }
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            let model = Model::new(ckpt.config.clone(), vectors, cfg.train.seed)?;
            eprintln!("resuming from step {}", ckpt.step);
            trainer::resume(&model, &ckpt, &split.train, &split.dev, &cfg.train)?
        }
    };
    write_train_outputs(&args.out, &cfg, &report)?;
    if report.best_metric.is_nan() {
        eprintln!("no dev evaluations; kept the final checkpoint as best");
    } else {
        eprintln!(
            "best {} = {:.4} at step {}",
            cfg.train.select_metric, report.best_metric, report.best_step
        );
    }
    if !split.test.is_empty() {
        let best = model_from_checkpoint(&args.out.join("best.ckpt"), args.config.load_vectors()?)?;
        let test_report = best.evaluate(&split.test)?;
        write_metrics(&test_report, Some(&args.out.join("metrics.json")))?;
        eprintln!(
            "test: wF1 {:.4}  macro {:.4}  micro {:.4}  mF1 {:.4}  acc {:.4}",
            test_report.scores.weighted_f1,
            test_report.scores.macro_f1,
            test_report.scores.micro_f1,
            test_report.scores.m_f1,
            test_report.scores.accuracy
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let vectors = match &args.vectors {
        Some(p) => Some(PrecomputedVectors::load(p)?),
        None => None,
    };
    let model = Model::new(ckpt.config.clone(), vectors, 0)?;
    ckpt.apply_to_model(&model)?;
    let mut cfg = RunConfig::default();
    cfg.model = ckpt.config.clone();
    let (split, _labels) = load_dataset(&args.data, &mut cfg)?;
    let convs = pick_split(&split, &args.split)?;
    if convs.is_empty() {
        return Err(Error::Data(format!("split {:?} is empty", args.split)));
    }
    let report = model.evaluate(convs)?;
    write_metrics(&report, args.out.as_deref())?;
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let vectors = match &args.vectors {
        Some(p) => Some(PrecomputedVectors::load(p)?),
        None => None,
    };
    let model = Model::new(ckpt.config.clone(), vectors, 0)?;
    ckpt.apply_to_model(&model)?;
    let mut cfg = RunConfig::default();
    cfg.model = ckpt.config.clone();
    let (split, _labels) = load_dataset(&args.data, &mut cfg)?;
    let convs = pick_split(&split, &args.split)?;
    let conv = match &args.conv {
        Some(id) => convs
            .iter()
            .find(|c| &c.id == id)
            .ok_or_else(|| Error::Data(format!("no conversation with id {id:?}")))?,
        None => convs
            .first()
            .ok_or_else(|| Error::Data(format!("split {:?} is empty", args.split)))?,
    };
    let bundle = probe(&model, conv)?;
    bundle.write_to(&args.out, args.per_head)?;
    eprintln!("probe artifacts for {:?} written to {}", conv.id, args.out.display());
    Ok(())
}

fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let rule: SyntheticRule = args.rule.parse()?;
    let split = generate_synthetic(&SyntheticConfig {
        train_convs: args.train_convs,
        dev_convs: args.dev_convs,
        test_convs: args.test_convs,
        speakers_per_conv: args.speakers,
        utterances_per_conv: args.utterances,
        num_classes: args.classes,
        rule,
        seed: args.seed,
    });
    let labels = synthetic_label_map(args.classes);
    std::fs::create_dir_all(&args.out)?;
    labels.save(&args.out.join("labels.json"))?;
    save_jsonl(&args.out.join("train.jsonl"), &split.train, &labels)?;
    save_jsonl(&args.out.join("dev.jsonl"), &split.dev, &labels)?;
    save_jsonl(&args.out.join("test.jsonl"), &split.test, &labels)?;
    eprintln!(
        "wrote {} train / {} dev / {} test conversations to {}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct SweepRun {
    axis_value: String,
    seed: u64,
    best_step: usize,
    dev_metric: f64,
    test: Option<trmsm::metrics::Scores>,
}

#[derive(serde::Serialize)]
struct SweepSummary {
    axis: Option<String>,
    select_metric: String,
    runs: Vec<SweepRun>,
    /// Mean of the dev selection metric per axis value.
    mean_dev_metric: Vec<(String, f64)>,
    /// Mean test selection metric per axis value (when a test split exists).
    mean_test_metric: Vec<(String, f64)>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.config.build()?;
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed {s:?}")))
        })
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let axis_values: Vec<String> = match (&args.axis, &args.values) {
        (Some(_), Some(values)) => values.split(';').map(|v| v.trim().to_string()).collect(),
        (None, None) => vec![String::new()],
        _ => {
            return Err(Error::Config(
                "--axis and --values must be given together".into(),
            ))
        }
    };
    if let Some(axis) = &args.axis {
        if !matches!(axis.as_str(), "window" | "layers" | "blocks") {
            return Err(Error::Config(format!(
                "unknown sweep axis {axis:?}; expected window, layers or blocks"
            )));
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let mut runs = Vec::new();
    for value in &axis_values {
        for &seed in &seeds {
            let mut cfg = base.clone();
            if let Some(axis) = &args.axis {
                cfg.apply_kv(axis, value)?;
            }
            cfg.train.seed = seed;
            let (split, _labels) = load_dataset(&args.data, &mut cfg)?;
            let vectors = args.config.load_vectors()?;
            let model = Model::new(cfg.model.clone(), vectors, seed)?;
            let report = trainer::train(&model, &split.train, &split.dev, &cfg.train)?;
            let tag = if value.is_empty() {
                format!("seed{seed}")
            } else {
                format!("{}-{}-seed{seed}", args.axis.as_deref().unwrap(), value.replace(',', "_"))
            };
            let run_dir = args.out.join(&tag);
            write_train_outputs(&run_dir, &cfg, &report)?;
            let test = if split.test.is_empty() {
                None
            } else {
                let best = model_from_checkpoint(
                    &run_dir.join("best.ckpt"),
                    args.config.load_vectors()?,
                )?;
                let test_report = best.evaluate(&split.test)?;
                write_metrics(&test_report, Some(&run_dir.join("metrics.json")))?;
                Some(test_report.scores)
            };
            eprintln!(
                "{tag}: best dev {} = {:.4} at step {}",
                cfg.train.select_metric, report.best_metric, report.best_step
            );
            runs.push(SweepRun {
                axis_value: value.clone(),
                seed,
                best_step: report.best_step,
                dev_metric: report.best_metric,
                test,
            });
        }
    }

    let metric = base.train.select_metric.clone();
    let mut mean_dev = Vec::new();
    let mut mean_test = Vec::new();
    for value in &axis_values {
        let group: Vec<&SweepRun> = runs.iter().filter(|r| &r.axis_value == value).collect();
        let dev = group.iter().map(|r| r.dev_metric).sum::<f64>() / group.len() as f64;
        mean_dev.push((value.clone(), dev));
        let tests: Vec<f64> = group
            .iter()
            .filter_map(|r| r.test.as_ref().and_then(|s| s.get(&metric)))
            .collect();
        if tests.len() == group.len() {
            mean_test.push((value.clone(), tests.iter().sum::<f64>() / tests.len() as f64));
        }
    }
    let summary = SweepSummary {
        axis: args.axis.clone(),
        select_metric: metric,
        runs,
        mean_dev_metric: mean_dev,
        mean_test_metric: mean_test,
    };
    std::fs::write(
        args.out.join("sweep.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    for (value, mean) in &summary.mean_test_metric {
        let label = if value.is_empty() { "(base)" } else { value };
        eprintln!("mean test {} for {label}: {mean:.4}", summary.select_metric);
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Probe(args) => cmd_probe(args),
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
