//! Pipeline CLI: synth -> harmonise -> chains -> train -> eval/transfer.
//!
//! Every subcommand reads an optional flat JSON config (dotted keys,
//! unknown keys rejected), applies flag overrides, and echoes the fully
//! resolved configuration next to its outputs so any run can be
//! reproduced byte-for-byte.

use clap::{Args, Parser, Subcommand};
use qtflight_core::chains::{build_chains, split, ChainConfig, ChainDataset, SplitMode};
use qtflight_core::data::{
    fit_vocabulary, harmonise_csv, DataError, HarmonisedTable, Region, SchemaProfile, Vocabulary,
};
use qtflight_core::model::{Model, ModelConfig, ModelKind};
use qtflight_core::synth::{generate_csv, identity_profile, Difficulty, SynthConfig};
use qtflight_core::train::{evaluate, train, transfer_evaluate, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "qtflight", version, about = "Flight-chain delay prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a deterministic synthetic raw-flight CSV
    Synth(SynthArgs),
    /// Align a raw feed to the shared schema and fit a vocabulary
    Harmonise(HarmoniseArgs),
    /// Extract feasible flight chains and split into partitions
    Chains(ChainsArgs),
    /// Train a model on chain partitions
    Train(TrainArgs),
    /// Evaluate a checkpoint on a chain set
    Eval(EvalArgs),
    /// Evaluate a checkpoint on another region's chain set
    Transfer(TransferArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat JSON config file with dotted keys (e.g. {"train.lr": 1e-4})
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set train.lr=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    aircraft: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long = "violation-rate")]
    violation_rate: Option<f64>,
    /// Also write the matching identity schema profile here
    #[arg(long = "profile-out")]
    profile_out: Option<PathBuf>,
}

#[derive(Args)]
struct HarmoniseArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    region: String,
    /// Raw-header -> shared-name profile; defaults to identity mapping
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep the auxiliary weather column in the output
    #[arg(long = "keep-weather")]
    keep_weather: bool,
    /// Vocabulary output path (default: <out>.vocab.json)
    #[arg(long = "vocab-out")]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
struct ChainsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "in")]
    input: PathBuf,
    /// Base output path; partitions land in <base>.train/.val/.test.qtc
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary used to encode categoricals (from harmonise)
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long = "tau-min")]
    tau_min: Option<i64>,
    #[arg(long = "tau-max")]
    tau_max: Option<i64>,
    #[arg(long)]
    window: Option<usize>,
    /// stratified | tail-day-disjoint | none
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// cbam_cnn | simam_cnn_lstm | qtsim | qtsim_bidir
    #[arg(long)]
    model: String,
    /// Chain base path from the chains subcommand
    #[arg(long)]
    chains: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// A .qtc file, or a chains base path (its .test.qtc is used)
    #[arg(long)]
    chains: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target-region chain set (a .qtc file or a chains base path)
    #[arg(long)]
    chains: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Feature-set tag; defaults to with/no_weather by inspection
    #[arg(long)]
    variant: Option<String>,
}

// ---------------------------------------------------------------------------
// Flat config
// ---------------------------------------------------------------------------

struct FlatConfig {
    values: BTreeMap<String, Value>,
}

impl FlatConfig {
    fn defaults() -> Self {
        let chain = ChainConfig::default();
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        let model = ModelConfig::new(ModelKind::Qtsim, 0, Vec::new());
        let mut values = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            values.insert(k.to_string(), v);
        };
        put("chain.window", json!(chain.window));
        put("chain.tau_min", json!(chain.tau_min));
        put("chain.tau_max", json!(chain.tau_max));
        put("chain.ratio_train", json!(chain.ratios.0));
        put("chain.ratio_val", json!(chain.ratios.1));
        put("chain.ratio_test", json!(chain.ratios.2));
        put("chain.split", json!("stratified"));
        put("chain.seed", json!(chain.seed));
        put("queue.k_s", json!(model.queue.k_s));
        put("queue.k_a", json!(model.queue.k_a));
        put("queue.eps", json!(model.queue.eps));
        put("queue.rho_cap", json!(model.queue.rho_cap));
        put("attention.cbam_reduction", json!(model.attention.cbam_reduction));
        put("attention.cbam_spatial_kernel", json!(model.attention.cbam_spatial_kernel));
        put("attention.simam_lambda", json!(model.attention.simam_lambda));
        put("attention.qt_eps", json!(model.attention.qt_eps));
        put("attention.qt_lq_weight", json!(model.attention.qt_lq_weight));
        put("lstm.hidden", json!(model.lstm.hidden));
        put("lstm.layers", json!(model.lstm.layers));
        put("lstm.dropout", json!(model.lstm.dropout));
        put("model.conv_channels", json!(model.conv_channels));
        put("model.conv_kernel", json!(model.conv_kernel));
        put("model.use_softmp", json!(model.use_softmp));
        put("model.softmp_tau", json!(model.softmp_tau));
        put("model.aux_delay_head", json!(model.aux_delay_head));
        put("model.mogrify", json!(model.mogrify));
        put("train.lr", json!(train.lr));
        put("train.weight_decay", json!(train.weight_decay));
        put("train.batch_size", json!(train.batch_size));
        put("train.max_epochs", json!(train.max_epochs));
        put("train.checkpoint_every", Value::Null);
        put("train.patience", Value::Null);
        put("train.aux_weight", json!(train.aux_weight));
        put("synth.aircraft", json!(synth.n_aircraft));
        put("synth.days", json!(synth.days));
        put("synth.seed", json!(synth.seed));
        put("synth.difficulty", json!("separable"));
        put("synth.region", json!("us"));
        put("synth.violation_rate", json!(synth.violation_rate));
        put("eval.batch_size", json!(train.batch_size));
        FlatConfig { values }
    }

    fn from_common(common: &CommonArgs) -> Result<Self, DataError> {
        let mut flat = FlatConfig::defaults();
        if let Some(path) = &common.config {
            flat.apply_file(path)?;
        }
        for kv in &common.sets {
            flat.apply_set(kv)?;
        }
        Ok(flat)
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), DataError> {
        let text = std::fs::read_to_string(path)?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| DataError::Config(format!("config {path:?}: {e}")))?;
        let Value::Object(map) = parsed else {
            return Err(DataError::Config(format!(
                "config {path:?} must be a flat JSON object"
            )));
        };
        for (k, v) in map {
            self.set(&k, v)?;
        }
        Ok(())
    }

    fn apply_set(&mut self, kv: &str) -> Result<(), DataError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| DataError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.set(k, value)
    }

    fn set(&mut self, key: &str, value: Value) -> Result<(), DataError> {
        if !self.values.contains_key(key) {
            return Err(DataError::Config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    fn f64(&self, key: &str) -> Result<f64, DataError> {
        self.values[key]
            .as_f64()
            .ok_or_else(|| DataError::Config(format!("{key} must be a number")))
    }

    fn u64(&self, key: &str) -> Result<u64, DataError> {
        self.values[key]
            .as_u64()
            .ok_or_else(|| DataError::Config(format!("{key} must be a nonnegative integer")))
    }

    fn usize(&self, key: &str) -> Result<usize, DataError> {
        Ok(self.u64(key)? as usize)
    }

    fn i64(&self, key: &str) -> Result<i64, DataError> {
        self.values[key]
            .as_i64()
            .ok_or_else(|| DataError::Config(format!("{key} must be an integer")))
    }

    fn bool(&self, key: &str) -> Result<bool, DataError> {
        self.values[key]
            .as_bool()
            .ok_or_else(|| DataError::Config(format!("{key} must be a boolean")))
    }

    fn string(&self, key: &str) -> Result<String, DataError> {
        self.values[key]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| DataError::Config(format!("{key} must be a string")))
    }

    fn opt_usize(&self, key: &str) -> Result<Option<usize>, DataError> {
        match &self.values[key] {
            Value::Null => Ok(None),
            v => v
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| DataError::Config(format!("{key} must be null or an integer"))),
        }
    }

    fn usize_list(&self, key: &str) -> Result<Vec<usize>, DataError> {
        let arr = self.values[key]
            .as_array()
            .ok_or_else(|| DataError::Config(format!("{key} must be an integer array")))?;
        arr.iter()
            .map(|v| {
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| DataError::Config(format!("{key} must be an integer array")))
            })
            .collect()
    }

    /// Echo the resolved configuration for reproducibility.
    fn echo(&self, path: &Path) -> Result<(), DataError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let text = serde_json::to_string_pretty(&self.values)
            .map_err(|e| DataError::Config(format!("config echo: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    fn chain_config(&self) -> Result<ChainConfig, DataError> {
        let cfg = ChainConfig {
            window: self.usize("chain.window")?,
            tau_min: self.i64("chain.tau_min")?,
            tau_max: self.i64("chain.tau_max")?,
            ratios: (
                self.u64("chain.ratio_train")? as u32,
                self.u64("chain.ratio_val")? as u32,
                self.u64("chain.ratio_test")? as u32,
            ),
            split: SplitMode::from_str(&self.string("chain.split")?)?,
            seed: self.u64("chain.seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn model_config(
        &self,
        kind: ModelKind,
        feature_names: Vec<String>,
    ) -> Result<ModelConfig, DataError> {
        let mut cfg = ModelConfig::new(kind, feature_names.len(), feature_names);
        cfg.conv_channels = self.usize_list("model.conv_channels")?;
        cfg.conv_kernel = self.usize("model.conv_kernel")?;
        cfg.use_softmp = self.bool("model.use_softmp")?;
        cfg.softmp_tau = self.f64("model.softmp_tau")?;
        cfg.aux_delay_head = self.bool("model.aux_delay_head")?;
        cfg.mogrify = self.bool("model.mogrify")?;
        cfg.lstm.hidden = self.usize("lstm.hidden")?;
        cfg.lstm.layers = self.usize("lstm.layers")?;
        cfg.lstm.dropout = self.f64("lstm.dropout")?;
        cfg.attention.cbam_reduction = self.usize("attention.cbam_reduction")?;
        cfg.attention.cbam_spatial_kernel = self.usize("attention.cbam_spatial_kernel")?;
        cfg.attention.simam_lambda = self.f64("attention.simam_lambda")?;
        cfg.attention.qt_eps = self.f64("attention.qt_eps")?;
        cfg.attention.qt_lq_weight = self.f64("attention.qt_lq_weight")?;
        cfg.queue.k_s = self.f64("queue.k_s")?;
        cfg.queue.k_a = self.f64("queue.k_a")?;
        cfg.queue.eps = self.f64("queue.eps")?;
        cfg.queue.rho_cap = self.f64("queue.rho_cap")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self, seed: u64) -> Result<TrainConfig, DataError> {
        let cfg = TrainConfig {
            lr: self.f64("train.lr")?,
            weight_decay: self.f64("train.weight_decay")?,
            batch_size: self.usize("train.batch_size")?,
            max_epochs: self.usize("train.max_epochs")?,
            seed,
            checkpoint_every: self.opt_usize("train.checkpoint_every")?,
            patience: self.opt_usize("train.patience")?,
            aux_weight: self.f64("train.aux_weight")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn synth_config(&self) -> Result<SynthConfig, DataError> {
        let cfg = SynthConfig {
            n_aircraft: self.usize("synth.aircraft")?,
            days: self.usize("synth.days")?,
            seed: self.u64("synth.seed")?,
            difficulty: Difficulty::from_str(&self.string("synth.difficulty")?)?,
            region: Region::from_str(&self.string("synth.region")?)?,
            violation_rate: self.f64("synth.violation_rate")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

/// `<base>.qtc` -> `<base>.<part>.qtc`
fn partition_path(base: &Path, part: &str) -> PathBuf {
    let s = base.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".qtc") {
        PathBuf::from(format!("{stem}.{part}.qtc"))
    } else {
        PathBuf::from(format!("{s}.{part}.qtc"))
    }
}

/// Accept either an explicit .qtc data file or a chains base path.
fn resolve_dataset(path: &Path, part: &str) -> Result<ChainDataset, DataError> {
    if path.exists() {
        return ChainDataset::read(path);
    }
    let candidate = partition_path(path, part);
    if candidate.exists() {
        return ChainDataset::read(&candidate);
    }
    Err(DataError::Data(format!("no chain set at {path:?} or {candidate:?}")))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.to_string_lossy()))
}

fn cmd_synth(args: SynthArgs) -> Result<(), DataError> {
    let mut flat = FlatConfig::from_common(&args.common)?;
    if let Some(v) = args.seed {
        flat.set("synth.seed", json!(v))?;
    }
    if let Some(v) = args.aircraft {
        flat.set("synth.aircraft", json!(v))?;
    }
    if let Some(v) = args.days {
        flat.set("synth.days", json!(v))?;
    }
    if let Some(v) = &args.region {
        flat.set("synth.region", json!(v))?;
    }
    if let Some(v) = &args.difficulty {
        flat.set("synth.difficulty", json!(v))?;
    }
    if let Some(v) = args.violation_rate {
        flat.set("synth.violation_rate", json!(v))?;
    }
    let cfg = flat.synth_config()?;
    generate_csv(&cfg, &args.out)?;
    if let Some(profile_out) = &args.profile_out {
        identity_profile(cfg.region).save(profile_out)?;
    }
    flat.echo(&sidecar(&args.out, ".resolved_config.json"))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_harmonise(args: HarmoniseArgs) -> Result<(), DataError> {
    let flat = FlatConfig::from_common(&args.common)?;
    let region = Region::from_str(&args.region)?;
    let profile = match &args.schema {
        Some(path) => {
            let p = SchemaProfile::load(path)?;
            if p.region != region {
                return Err(DataError::Config(format!(
                    "profile region {:?} does not match --region {}",
                    p.region, args.region
                )));
            }
            p
        }
        None => {
            // Identity mapping over the feed's own headers.
            let mut r = csv::Reader::from_path(&args.input)?;
            let headers: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
            let refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
            SchemaProfile::identity(region, &refs)
        }
    };
    let table = harmonise_csv(&args.input, &profile, args.keep_weather)?;
    table.write_csv(&args.out)?;
    let vocab = fit_vocabulary(&table);
    let vocab_path =
        args.vocab_out.clone().unwrap_or_else(|| sidecar(&args.out, ".vocab.json"));
    vocab.save(&vocab_path)?;
    flat.echo(&sidecar(&args.out, ".resolved_config.json"))?;
    println!(
        "wrote {} ({} rows, {} columns) and {}",
        args.out.display(),
        table.rows.len(),
        table.columns.len(),
        vocab_path.display()
    );
    Ok(())
}

fn cmd_chains(args: ChainsArgs) -> Result<(), DataError> {
    let mut flat = FlatConfig::from_common(&args.common)?;
    if let Some(v) = args.tau_min {
        flat.set("chain.tau_min", json!(v))?;
    }
    if let Some(v) = args.tau_max {
        flat.set("chain.tau_max", json!(v))?;
    }
    if let Some(v) = args.window {
        flat.set("chain.window", json!(v))?;
    }
    if let Some(v) = &args.split {
        flat.set("chain.split", json!(v))?;
    }
    if let Some(v) = args.seed {
        flat.set("chain.seed", json!(v))?;
    }
    let cfg = flat.chain_config()?;
    let table = HarmonisedTable::read_csv(&args.input)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let (chains, feature_names) = build_chains(&table, &vocab, &cfg)?;
    if chains.is_empty() {
        return Err(DataError::Data("no feasible chains were extracted".into()));
    }
    match cfg.split {
        SplitMode::None => {
            let ds = ChainDataset::from_chains(&chains, cfg.window, feature_names);
            ds.write(&args.out)?;
            println!("wrote {} ({} chains)", args.out.display(), ds.len());
        }
        _ => {
            let (tr, va, te, warnings) = split(chains, &cfg)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            for (part, chunk) in [("train", &tr), ("val", &va), ("test", &te)] {
                let ds = ChainDataset::from_chains(chunk, cfg.window, feature_names.clone());
                let path = partition_path(&args.out, part);
                ds.write(&path)?;
                println!("wrote {} ({} chains)", path.display(), ds.len());
            }
        }
    }
    flat.echo(&sidecar(&args.out, ".resolved_config.json"))?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), DataError> {
    let mut flat = FlatConfig::from_common(&args.common)?;
    if let Some(v) = args.lr {
        flat.set("train.lr", json!(v))?;
    }
    if let Some(v) = args.epochs {
        flat.set("train.max_epochs", json!(v))?;
    }
    if let Some(v) = args.batch_size {
        flat.set("train.batch_size", json!(v))?;
    }
    let kind = ModelKind::from_str(&args.model)?;
    let train_set = resolve_dataset(&args.chains, "train")?;
    let val_set = resolve_dataset(&args.chains, "val")?;
    if train_set.feature_names != val_set.feature_names {
        return Err(DataError::Schema(
            "train and validation sets disagree on feature names".into(),
        ));
    }
    let model_cfg = flat.model_config(kind, train_set.feature_names.clone())?;
    let train_cfg = flat.train_config(args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut model = Model::<f32>::init(model_cfg, &mut rng)?;
    std::fs::create_dir_all(&args.out)?;
    flat.echo(&args.out.join("resolved_config.json"))?;
    let outcome = train(&mut model, &train_set, &val_set, &train_cfg, &args.out)?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "trained {} for {} epochs; best val loss {:.6} at epoch {}; final train acc {:.4}",
        args.model,
        outcome.history.len(),
        outcome.best_val_loss,
        outcome.best_epoch,
        last.train_acc
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), DataError> {
    let flat = FlatConfig::from_common(&args.common)?;
    let batch_size = flat.usize("eval.batch_size")?;
    let ds = resolve_dataset(&args.chains, "test")?;
    let model = Model::<f32>::load(&args.checkpoint)?;
    let report = evaluate(&model, &ds, batch_size)?;
    std::fs::create_dir_all(&args.out)?;
    report.write_json(&args.out.join("metrics.json"))?;
    report.write_confusion_csv(&args.out.join("confusion.csv"))?;
    flat.echo(&args.out.join("resolved_config.json"))?;
    println!(
        "evaluated {} chains: accuracy {:.4}, macro F1 {:.4}, weighted F1 {:.4}",
        report.n, report.accuracy, report.macro_f1, report.weighted_f1
    );
    Ok(())
}

fn cmd_transfer(args: TransferArgs) -> Result<(), DataError> {
    let flat = FlatConfig::from_common(&args.common)?;
    let batch_size = flat.usize("eval.batch_size")?;
    let ds = resolve_dataset(&args.chains, "test")?;
    let variant = args.variant.clone().unwrap_or_else(|| {
        if ds.feature_names.iter().any(|n| n == "weather_delay") {
            "with_weather".to_string()
        } else {
            "no_weather".to_string()
        }
    });
    let report = transfer_evaluate::<f32>(&args.checkpoint, &ds, batch_size, &variant)?;
    std::fs::create_dir_all(&args.out)?;
    report.write_json(&args.out.join("transfer_report.json"))?;
    report.metrics.write_confusion_csv(&args.out.join("confusion.csv"))?;
    flat.echo(&args.out.join("resolved_config.json"))?;
    println!(
        "transfer ({variant}) over {} chains: accuracy {:.4}, weighted F1 {:.4}",
        report.metrics.n, report.metrics.accuracy, report.metrics.weighted_f1
    );
    Ok(())
}

fn exit_code(err: &DataError) -> i32 {
    match err {
        DataError::Config(_) => 2,
        DataError::Schema(_) => 3,
        DataError::Data(_) | DataError::Io(_) | DataError::Csv(_) => 4,
        DataError::Numeric(_) => 5,
    }
}

fn check_thread_cap() -> Result<(), DataError> {
    // Compute is serial for bit-identical outputs; the cap only needs
    // to be a well-formed positive integer.
    if let Ok(v) = std::env::var("QTSIM_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {}
            _ => {
                return Err(DataError::Config(format!(
                    "QTSIM_THREADS must be a positive integer, got {v:?}"
                )))
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = check_thread_cap().and_then(|()| match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Harmonise(a) => cmd_harmonise(a),
        Cmd::Chains(a) => cmd_chains(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Transfer(a) => cmd_transfer(a),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
