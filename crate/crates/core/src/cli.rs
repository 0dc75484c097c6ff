//! Command implementations behind the `fusedrive` binary.
//!
//! Every command reads a JSON config, takes a seed that drives all of its
//! randomness, writes into an output directory and finishes with a
//! `run_manifest.json` naming the config hash, dataset hash and code version.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::encoders::{init_params, FusionMode, ModalityMask, ModelConfig};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, explain_sample, ordering_report, run_variant, AblationResult, AblationTable, AblationVariant,
    ConfusionMatrix, ExplainOptions, MetricsReport, OrderingCheck, Verdict, PGM_CELL,
};
use crate::fingerprint::{fingerprint, read_json, write_sorted_json};
use crate::model::{prepare_sample, PreparedSample};
use crate::parallel::Parallelism;
use crate::pipeline::{prepare_splits, PreparedSplits};
use crate::preprocess::{split_dataset, SplitAssignment, MAX_LEN, RESERVED};
use crate::synthdata::{
    generate_dataset, generate_samples, generate_scenario, load_dataset, mix, open_dataset, ActionLabel,
    ClassDistribution, RenderConfig, Sample, ScenarioKind, ScenarioSpec,
};
use crate::training::{
    grad_check, load_checkpoint, save_checkpoint, train, GradCheckConfig, GradCheckReport, TrainConfig, TrainContext,
    TrainLog,
};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    Split,
    Train,
    Eval,
    Ablate,
    Explain,
    GradCheck,
    Report,
}

#[derive(Clone, Debug)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub par: Parallelism,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub code_version: String,
    /// Hash of the config after defaults are filled in.
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub seed: u64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Headline numbers for the command, e.g. accuracy.
    pub summary: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Toy,
    Paper,
    Tiny,
}

/// Model architecture as written in configs; the vocabulary size is only
/// known once the training split has been fitted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default)]
    pub preset: Preset,
    pub image_size: Option<usize>,
    pub fusion_mode: Option<FusionMode>,
    pub modalities: Option<ModalityMask>,
    pub explanation_head: Option<bool>,
    pub beams: Option<usize>,
}

impl ModelSettings {
    pub fn build(&self, vocab_size: usize, seed: u64) -> Result<ModelConfig> {
        let mut cfg = match self.preset {
            Preset::Toy => ModelConfig::toy(vocab_size),
            Preset::Paper => ModelConfig::paper_preset(vocab_size),
            Preset::Tiny => ModelConfig::tiny(vocab_size),
        };
        if let Some(s) = self.image_size {
            cfg.video.image_size = s;
        }
        if let Some(m) = self.fusion_mode {
            cfg.fusion_mode = m;
        }
        if let Some(m) = self.modalities {
            cfg.modalities = m;
        }
        if let Some(e) = self.explanation_head {
            cfg.explanation_head = e;
        }
        if let Some(b) = self.beams {
            cfg.beams = b;
        }
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub n: usize,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub distribution: ClassDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub dataset: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub dataset: PathBuf,
    /// A `split.json`; when absent the split is drawn from `--seed`.
    pub split: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSettings,
    /// `shuffle_seed` is replaced by `--seed`.
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Val,
    #[default]
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub split: Option<PathBuf>,
    #[serde(default)]
    pub subset: Subset,
}

fn default_tie_points() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub dataset: PathBuf,
    pub split: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    /// Defaults to all five rows.
    pub variants: Option<Vec<AblationVariant>>,
    /// Accuracy gaps below this many points are reported as ties.
    #[serde(default = "default_tie_points")]
    pub tie_points: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainConfig {
    pub checkpoint: PathBuf,
    /// Explain `sample_id` from this dataset...
    pub dataset: Option<PathBuf>,
    pub sample_id: Option<String>,
    /// ...or render a fresh scenario of this kind from `--seed`.
    pub scenario: Option<ScenarioKind>,
    pub render_size: Option<usize>,
    pub vocab_fingerprint: Option<String>,
    pub sensor_stats_fingerprint: Option<String>,
    #[serde(default = "default_true")]
    pub attention: bool,
}

fn default_probe_samples() -> usize {
    2
}

fn default_tolerance() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckRunConfig {
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
    /// Rendered frame size; defaults to the model's input size.
    pub render_size: Option<usize>,
    #[serde(default)]
    pub check: GradCheckConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Only check arrays whose name starts with this.
    pub only_prefix: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub dataset: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub train_log: Option<PathBuf>,
    pub ablation: Option<PathBuf>,
}

/// Contents of `ablation.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub table: AblationTable,
    pub ordering: Vec<OrderingCheck>,
    pub tie_points: f64,
}

/// Collects written files and headline numbers for the run manifest.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
    summary: BTreeMap<String, serde_json::Value>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
            summary: BTreeMap::new(),
        })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_sorted_json(&self.dir.join(name), value)?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn bytes(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.files.push(name.to_owned());
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.to_owned(), serde_json::to_value(value)?);
        Ok(())
    }

    fn metrics(&mut self, prefix: &str, report: &MetricsReport) -> Result<()> {
        let dir = self.dir.join(prefix);
        report.write(&dir)?;
        for f in ["metrics.json", "confusion.csv", "confusion.pgm", "distribution.csv"] {
            self.files.push(join_rel(prefix, f));
        }
        Ok(())
    }

    fn finish(
        mut self,
        command: Command,
        config_hash: String,
        dataset_hash: Option<String>,
        seed: u64,
    ) -> Result<RunManifest> {
        self.files.sort();
        self.files.dedup();
        let m = RunManifest {
            command,
            code_version: CODE_VERSION.to_owned(),
            config_hash,
            dataset_hash,
            seed,
            outputs: self.files,
            summary: self.summary,
        };
        write_sorted_json(&self.dir.join(RUN_MANIFEST), &m)?;
        Ok(m)
    }
}

fn join_rel(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}/{name}")
    }
}

fn read_config<T: DeserializeOwned + Serialize>(path: &Path) -> Result<(T, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: T = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let hash = fingerprint(&cfg)?;
    Ok((cfg, hash))
}

/// Runs one command end to end.
pub fn run(command: Command, args: &RunArgs) -> Result<RunManifest> {
    match command {
        Command::GenData => gen_data(args),
        Command::Split => split(args),
        Command::Train => train_cmd(args),
        Command::Eval => eval_cmd(args),
        Command::Ablate => ablate(args),
        Command::Explain => explain(args),
        Command::GradCheck => grad_check_cmd(args),
        Command::Report => report(args),
    }
}

fn gen_data(args: &RunArgs) -> Result<RunManifest> {
    let (cfg, hash): (GenDataConfig, _) = read_config(&args.config)?;
    let mut out = Outputs::new(&args.out)?;
    let manifest = generate_dataset(cfg.n, args.seed, &cfg.distribution, &cfg.render, &args.out, args.par)?;
    out.files.push("manifest.json".into());
    for r in &manifest.samples {
        out.files.push(r.frames_path.clone());
        out.files.push(r.meta_path.clone());
    }
    out.note("n", cfg.n)?;
    out.note("class_counts", &manifest.class_counts)?;
    out.finish(Command::GenData, hash, Some(manifest.fingerprint()?), args.seed)
}

fn split(args: &RunArgs) -> Result<RunManifest> {
    let (cfg, hash): (SplitConfig, _) = read_config(&args.config)?;
    let reader = open_dataset(&cfg.dataset)?;
    let split = split_dataset(&reader.manifest().ids(), args.seed)?;
    let mut out = Outputs::new(&args.out)?;
    out.json("split.json", &split)?;
    out.note("sizes", [split.train.len(), split.val.len(), split.test.len()])?;
    out.finish(Command::Split, hash, Some(reader.manifest().fingerprint()?), args.seed)
}

/// Loads a dataset and its split, drawing the split from `seed` when no
/// split file is given.
fn load_with_split(dataset: &Path, split: Option<&Path>, seed: u64) -> Result<(Vec<Sample>, SplitAssignment, String)> {
    let reader = open_dataset(dataset)?;
    let ds_hash = reader.manifest().fingerprint()?;
    let split = match split {
        Some(p) => read_json(p)?,
        None => split_dataset(&reader.manifest().ids(), seed)?,
    };
    let samples = load_dataset(dataset)?;
    Ok((samples, split, ds_hash))
}

fn train_cmd(args: &RunArgs) -> Result<RunManifest> {
    let (mut cfg, _): (TrainRunConfig, String) = read_config(&args.config)?;
    cfg.train.shuffle_seed = args.seed;
    let hash = fingerprint(&cfg)?;
    let (samples, split, ds_hash) = load_with_split(&cfg.dataset, cfg.split.as_deref(), args.seed)?;
    let data = prepare_splits(&samples, &split, MAX_LEN)?;
    drop(samples);
    let model_cfg = cfg.model.build(data.vocab.len(), args.seed)?;
    let params = init_params(&model_cfg, args.seed)?;
    let ctx = TrainContext {
        vocab: &data.vocab,
        sensor_stats: &data.sensor_stats,
    };
    let outcome = train(&model_cfg, &cfg.train, params, &data.train, &data.val, ctx, args.par)?;

    let mut out = Outputs::new(&args.out)?;
    out.json("split.json", &split)?;
    save_checkpoint(&outcome.best, &args.out.join("checkpoint"))?;
    save_checkpoint(&outcome.last, &args.out.join("last_checkpoint"))?;
    for d in ["checkpoint", "last_checkpoint"] {
        out.files.push(format!("{d}/checkpoint.json"));
        out.files.push(format!("{d}/tensors.bin"));
    }
    out.bytes("train_log.jsonl", outcome.log.to_jsonl(true)?)?;
    let val = evaluate(&outcome.best.params, &model_cfg, &data.val, &data.vocab, args.par)?;
    let report = MetricsReport::new(&val, fingerprint(&model_cfg)?, ds_hash.clone())?;
    out.metrics("val", &report)?;
    out.note("best_epoch", outcome.best.epoch)?;
    out.note("stopped_early", outcome.stopped_early)?;
    out.note("val_accuracy", val.accuracy)?;
    out.note("val_bleu4", val.bleu.as_ref().map(|b| b.corpus))?;
    out.finish(Command::Train, hash, Some(ds_hash), args.seed)
}

fn eval_cmd(args: &RunArgs) -> Result<RunManifest> {
    let (cfg, hash): (EvalConfig, _) = read_config(&args.config)?;
    let ckpt = load_checkpoint(&cfg.checkpoint)?;
    let (samples, split, ds_hash) = load_with_split(&cfg.dataset, cfg.split.as_deref(), args.seed)?;
    let ids: Vec<&String> = match cfg.subset {
        Subset::Train => split.train.iter().collect(),
        Subset::Val => split.val.iter().collect(),
        Subset::Test => split.test.iter().collect(),
        Subset::All => split.train.iter().chain(&split.val).chain(&split.test).collect(),
    };
    let by_id: BTreeMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let model_cfg = &ckpt.model_config;
    let prepared = ids
        .iter()
        .map(|id| {
            let s = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::invalid(format!("split refers to unknown sample `{id}`")))?;
            prepare_sample(s, &ckpt.vocab, &ckpt.sensor_stats, model_cfg.max_len)
        })
        .collect::<Result<Vec<PreparedSample>>>()?;
    drop(samples);
    let evaluation = evaluate(&ckpt.params, model_cfg, &prepared, &ckpt.vocab, args.par)?;
    let report = MetricsReport::new(&evaluation, fingerprint(model_cfg)?, ds_hash.clone())?;

    let mut out = Outputs::new(&args.out)?;
    out.metrics("", &report)?;
    let mut lines = String::new();
    for r in &evaluation.results {
        lines.push_str(&serde_json::to_string(&serde_json::to_value(r)?)?);
        lines.push('\n');
    }
    out.bytes("predictions.jsonl", lines)?;
    out.note("accuracy", evaluation.accuracy)?;
    out.note("bleu4", evaluation.bleu.as_ref().map(|b| b.corpus))?;
    out.note("n_samples", evaluation.results.len())?;
    out.finish(Command::Eval, hash, Some(ds_hash), args.seed)
}

fn ablate(args: &RunArgs) -> Result<RunManifest> {
    let (mut cfg, _): (AblateConfig, String) = read_config(&args.config)?;
    cfg.train.shuffle_seed = args.seed;
    let hash = fingerprint(&cfg)?;
    let (samples, split, ds_hash) = load_with_split(&cfg.dataset, cfg.split.as_deref(), args.seed)?;
    let data: PreparedSplits = prepare_splits(&samples, &split, MAX_LEN)?;
    drop(samples);
    let base = cfg.model.build(data.vocab.len(), args.seed)?;
    let variants = cfg.variants.clone().unwrap_or_else(|| AblationVariant::ALL.to_vec());

    let mut out = Outputs::new(&args.out)?;
    let mut rows = Vec::new();
    for v in variants {
        log::info!("ablation: training {}", v.name());
        match run_variant(v, &base, &cfg.train, &data, args.seed, args.par) {
            Ok(run) => {
                let report = MetricsReport::new(&run.evaluation, fingerprint(&v.apply(&base))?, ds_hash.clone())?;
                out.metrics(v.name(), &report)?;
                out.bytes(
                    &format!("{}/train_log.jsonl", v.name()),
                    run.outcome.log.to_jsonl(true)?,
                )?;
                rows.push(run.result);
            }
            Err(e) => {
                log::warn!("ablation row {} failed: {e}", v.name());
                rows.push(AblationResult {
                    variant: v,
                    accuracy: None,
                    bleu4: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let table = AblationTable { rows };
    let ordering = ordering_report(&table, cfg.tie_points);
    out.bytes("ablation.csv", table.to_csv())?;
    for r in &table.rows {
        out.note(&format!("accuracy_{}", r.variant.name()), r.accuracy)?;
    }
    out.note(
        "ordering_violations",
        ordering.iter().filter(|c| c.verdict == Verdict::Violated).count(),
    )?;
    out.json(
        "ablation.json",
        &AblationReport {
            table,
            ordering,
            tie_points: cfg.tie_points,
        },
    )?;
    out.finish(Command::Ablate, hash, Some(ds_hash), args.seed)
}

fn explain(args: &RunArgs) -> Result<RunManifest> {
    let (cfg, hash): (ExplainConfig, _) = read_config(&args.config)?;
    let ckpt = load_checkpoint(&cfg.checkpoint)?;
    let (sample, ds_hash) = match (&cfg.dataset, &cfg.sample_id, cfg.scenario) {
        (Some(ds), Some(id), None) => {
            let reader = open_dataset(ds)?;
            let record = reader
                .manifest()
                .samples
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::invalid(format!("sample `{id}` not in dataset")))?;
            (reader.read_record(record)?, Some(reader.manifest().fingerprint()?))
        }
        (None, None, Some(kind)) => {
            let size = cfg.render_size.unwrap_or(ckpt.model_config.video.image_size);
            let spec = ScenarioSpec::sample(kind, args.seed);
            let mut s = generate_scenario(&spec, &RenderConfig::with_size(size))?;
            s.id = format!("{}-{}", kind.name(), args.seed);
            (s, None)
        }
        _ => {
            return Err(Error::config(
                "explain needs either `dataset` with `sample_id`, or `scenario`",
            ))
        }
    };
    let mut out = Outputs::new(&args.out)?;
    let opts = ExplainOptions {
        vocab_fingerprint: cfg.vocab_fingerprint.as_deref(),
        sensor_stats_fingerprint: cfg.sensor_stats_fingerprint.as_deref(),
        attention_dir: cfg.attention.then_some(args.out.as_path()),
    };
    let record = explain_sample(&ckpt, &sample, &opts)?;
    out.files.extend(record.attention_files.iter().cloned());
    out.json("explanation.json", &record)?;
    out.note("action", record.action)?;
    out.note("label", sample.action)?;
    out.note("explanation", &record.explanation)?;
    out.finish(Command::Explain, hash, ds_hash, args.seed)
}

fn grad_check_cmd(args: &RunArgs) -> Result<RunManifest> {
    let (mut cfg, _): (GradCheckRunConfig, String) = read_config(&args.config)?;
    cfg.check.seed = args.seed;
    let hash = fingerprint(&cfg)?;
    if cfg.probe_samples == 0 {
        return Err(Error::config("probe_samples must be at least 1"));
    }
    // Draw enough samples that the training split can hold the probe.
    let n = (cfg.probe_samples * 2).max(12);
    let image = cfg.model.build(RESERVED.len() + 1, args.seed)?.video.image_size;
    let render = RenderConfig::with_size(cfg.render_size.unwrap_or(image));
    let samples = generate_samples(n, args.seed, &ClassDistribution::default(), &render, args.par)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let split = split_dataset(&ids, mix(args.seed, 1))?;
    let data = prepare_splits(&samples, &split, MAX_LEN)?;
    let probe: Vec<PreparedSample> = data.train.into_iter().take(cfg.probe_samples).collect();
    let model_cfg = cfg.model.build(data.vocab.len(), args.seed)?;
    let params = init_params(&model_cfg, args.seed)?;
    let prefix = cfg.only_prefix.clone().unwrap_or_default();
    let report: GradCheckReport = grad_check(&params, &model_cfg, &probe, |n| n.starts_with(&prefix), &cfg.check)?;

    let mut out = Outputs::new(&args.out)?;
    out.json("grad_check.json", &report)?;
    let passed = report.passes(cfg.tolerance);
    out.note("passed", passed)?;
    out.note("max_relative_error", report.max_relative_error)?;
    out.note("worst_array", &report.worst_array)?;
    let manifest = out.finish(Command::GradCheck, hash, None, args.seed)?;
    if !passed {
        let names: Vec<&str> = report.failing(cfg.tolerance).iter().map(|a| a.name.as_str()).collect();
        return Err(Error::invalid(format!(
            "gradient check failed (tolerance {:e}): {}",
            cfg.tolerance,
            names.join(", ")
        )));
    }
    Ok(manifest)
}

fn report(args: &RunArgs) -> Result<RunManifest> {
    let (cfg, hash): (ReportConfig, _) = read_config(&args.config)?;
    let mut out = Outputs::new(&args.out)?;
    let mut md = String::from("# Run report\n");
    let mut ds_hash = None;

    if let Some(ds) = &cfg.dataset {
        let reader = open_dataset(ds)?;
        let labels: Vec<ActionLabel> = reader.manifest().samples.iter().map(|r| r.action).collect();
        let dist = crate::eval::action_distribution(&labels)?;
        out.bytes("distribution.csv", dist.to_csv())?;
        ds_hash = Some(reader.manifest().fingerprint()?);
        let _ = writeln!(
            md,
            "\n## Dataset\n\n{} samples\n\n| action | count | share |\n|---|---|---|",
            labels.len()
        );
        for a in ActionLabel::ALL {
            let _ = writeln!(
                md,
                "| {} | {} | {:.1}% |",
                a.name(),
                dist.counts[a.code()],
                100.0 * dist.fractions[a.code()]
            );
        }
    }
    if let Some(p) = &cfg.metrics {
        let m: MetricsReport = read_json(p)?;
        let cm: &ConfusionMatrix = &m.confusion_counts;
        out.bytes("confusion.csv", cm.to_csv())?;
        out.bytes("confusion.pgm", cm.to_pgm(PGM_CELL))?;
        let _ = writeln!(
            md,
            "\n## Evaluation\n\naccuracy {:.2}% over {} samples",
            100.0 * m.accuracy,
            m.n_samples
        );
        match m.bleu4_corpus {
            Some(b) => {
                let _ = writeln!(md, "\nBLEU-4 {:.2}", 100.0 * b);
            }
            None => {
                let _ = writeln!(md, "\nBLEU-4 N/A");
            }
        }
        out.note("accuracy", m.accuracy)?;
    }
    if let Some(p) = &cfg.train_log {
        let log = TrainLog::read(p)?;
        let mut csv = String::from("epoch,train_loss,train_accuracy,val_accuracy,val_bleu4\n");
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.9}"));
        for e in log.epochs() {
            let _ = writeln!(
                csv,
                "{},{:.9},{:.9},{},{}",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_accuracy),
                opt(e.val_bleu4)
            );
        }
        let _ = writeln!(
            md,
            "\n## Training\n\n{} epochs, see loss_curve.csv",
            log.epochs().count()
        );
        out.bytes("loss_curve.csv", csv)?;
    }
    if let Some(p) = &cfg.ablation {
        let a: AblationReport = read_json(p)?;
        out.bytes("ablation.csv", a.table.to_csv())?;
        let _ = writeln!(
            md,
            "\n## Ablation\n\n| configuration | accuracy | BLEU-4 |\n|---|---|---|"
        );
        let fmt = |v: Option<f64>| v.map_or_else(|| "N/A".to_owned(), |v| format!("{:.2}", 100.0 * v));
        for r in &a.table.rows {
            let _ = writeln!(md, "| {} | {} | {} |", r.variant.name(), fmt(r.accuracy), fmt(r.bleu4));
        }
        md.push('\n');
        for c in &a.ordering {
            let gap = c.gap_points.map_or_else(|| "N/A".to_owned(), |g| format!("{g:+.2}"));
            let _ = writeln!(md, "- {}: {:?} ({gap} points)", c.claim, c.verdict);
        }
    }
    out.bytes("report.md", md)?;
    out.finish(Command::Report, hash, ds_hash, args.seed)
}
