//! Command-line entry point: synthesize, validate, report stats, train,
//! forecast, evaluate, gradient-check, and emit plot-ready CSVs.
//!
//! Exit codes: 0 success, 1 runtime failure (missing files, diverged
//! training, failed tolerance), 2 usage or config error. A flat
//! `key = value` config file (with `#` comments) can seed any run; flags
//! take precedence over file values and unknown keys are rejected.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::annotation::{
    dataset_stats, derive_velocities, load_dataset, parse_clip_with, validate_clip,
    AnnotationError, ClipAnnotation, Split, Strictness,
};
use crate::eval::{baseline_mean_predictor, evaluate, evaluate_model, MatchConfig, ModelPredictor, OccurrencePredictor};
use crate::model::{forecast_occurrence, GiftModel, ModelConfig, DEFAULT_THRESHOLD};
use crate::nn::ResidualMode;
use crate::synth::{generate_dataset, Difficulty, SynthConfig, SynthError};
use crate::train::{train, gradcheck_suite, TrainConfig, TrainError, TrainHistory};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(m) => CliError::Usage(m),
            SynthError::Io(m) => CliError::Runtime(m),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::model::ModelError> for CliError {
    fn from(e: crate::model::ModelError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::eval::EvalError> for CliError {
    fn from(e: crate::eval::EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "gift",
    version,
    about = "Group intention forecasting on multi-player annotation clips"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic clip dataset with a manifest
    Synth(SynthArgs),
    /// Check every clip in a dataset directory against the schema rules
    Validate(ValidateArgs),
    /// Aggregate annotation statistics over a dataset
    Stats(StatsArgs),
    /// Train a forecaster and write checkpoint plus history
    Train(TrainArgs),
    /// Forecast the occurrence frame for a single clip
    Forecast(ForecastArgs),
    /// Evaluate a checkpoint on a dataset's test split
    Eval(EvalArgs),
    /// Verify reverse-mode gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Emit per-epoch loss and per-clip deviation CSVs for plotting
    PlotData(PlotDataArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for clip files and the manifest
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_clips: Option<u32>,
    /// Frames per clip
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    occ_min: Option<u32>,
    #[arg(long)]
    occ_max: Option<u32>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// easy or hard
    #[arg(long)]
    difficulty: Option<String>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Dataset directory (manifest.json optional; falls back to *.json)
    #[arg(long)]
    data: PathBuf,
    /// Write the findings report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory with a manifest carrying train/val splits
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.json, history.csv, history.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// One clip JSON file
    #[arg(long)]
    clip: PathBuf,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tau: Option<usize>,
    /// Matching tolerance in frames
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory for eval_report.json and eval_report.csv
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also report the mean-frame baseline fitted on the train split
    #[arg(long, default_value_t = false)]
    baseline: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Include the full desk-size model loss check
    #[arg(long, default_value_t = false)]
    full: bool,
}

#[derive(Args, Debug)]
struct PlotDataArgs {
    /// Output directory for the CSVs
    #[arg(long)]
    out: PathBuf,
    /// history.json from a training run (emits loss_curve.csv)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Checkpoint plus dataset (emits deviations.csv over the test split)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Train(args) => cmd_train(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::PlotData(args) => cmd_plot_data(args),
    }
}

// ---------------------------------------------------------------------------
// Config file handling
// ---------------------------------------------------------------------------

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "n_clips",
    "frames",
    "fps",
    "occ_min",
    "occ_max",
    "court_width",
    "court_height",
    "noise_scale",
    "difficulty",
    "lr",
    "weight_decay",
    "epochs",
    "dropout",
    "tau",
    "lambda_recon",
    "lambda_fore",
    "lambda_const",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "lambda5",
    "lambda6",
    "batch_size",
    "consistency",
    "embed_dim",
    "residual",
    "keep_k",
    "delta",
    "threshold",
];

#[derive(Debug, Default)]
struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown config key `{key}`",
                    path.display(),
                    lineno + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { map })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("config key `{key}` has unparseable value `{raw}`"))
            }),
        }
    }
}

fn resolve_difficulty(s: &str) -> Result<Difficulty, CliError> {
    match s {
        "easy" => Ok(Difficulty::Easy),
        "hard" => Ok(Difficulty::Hard),
        other => Err(CliError::Usage(format!(
            "difficulty must be `easy` or `hard`, got `{other}`"
        ))),
    }
}

fn resolve_residual(s: &str) -> Result<ResidualMode, CliError> {
    match s {
        "self_projection" => Ok(ResidualMode::SelfProjection),
        "input_skip" => Ok(ResidualMode::InputSkip),
        other => Err(CliError::Usage(format!(
            "residual must be `self_projection` or `input_skip`, got `{other}`"
        ))),
    }
}

fn build_train_config(file: &FileConfig, args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let mut lambda_feat = d.lambda_feat;
    for (i, key) in ["lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6"]
        .iter()
        .enumerate()
    {
        if let Some(v) = file.get::<f64>(key)? {
            lambda_feat[i] = v;
        }
    }
    Ok(TrainConfig {
        learning_rate: args.lr.or(file.get("lr")?).unwrap_or(d.learning_rate),
        weight_decay: args
            .weight_decay
            .or(file.get("weight_decay")?)
            .unwrap_or(d.weight_decay),
        epochs: args.epochs.or(file.get("epochs")?).unwrap_or(d.epochs),
        dropout: args.dropout.or(file.get("dropout")?).unwrap_or(d.dropout),
        tau: args.tau.or(file.get("tau")?).unwrap_or(d.tau),
        lambda_recon: file.get("lambda_recon")?.unwrap_or(d.lambda_recon),
        lambda_fore: file.get("lambda_fore")?.unwrap_or(d.lambda_fore),
        lambda_const: file.get("lambda_const")?.unwrap_or(d.lambda_const),
        lambda_feat,
        batch_size: args
            .batch_size
            .or(file.get("batch_size")?)
            .unwrap_or(d.batch_size),
        seed: args.seed.or(file.get("seed")?).unwrap_or(d.seed),
        consistency: file.get("consistency")?.unwrap_or(d.consistency),
    })
}

fn build_model_config(file: &FileConfig, embed_flag: Option<usize>, dropout: f64) -> Result<ModelConfig, CliError> {
    let d = ModelConfig::default();
    let residual = match file.map.get("residual") {
        Some(s) => resolve_residual(s)?,
        None => d.residual,
    };
    Ok(ModelConfig {
        embed_dim: embed_flag.or(file.get("embed_dim")?).unwrap_or(d.embed_dim),
        n_blocks: d.n_blocks,
        n_players: d.n_players,
        residual,
        dropout,
        keep_k: file.get("keep_k")?,
    })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let d = SynthConfig::default();
    let difficulty = match args.difficulty.as_deref().or(file.map.get("difficulty").map(|s| s.as_str())) {
        Some(s) => resolve_difficulty(s)?,
        None => d.difficulty,
    };
    let cfg = SynthConfig {
        seed: args.seed.or(file.get("seed")?).unwrap_or(d.seed),
        n_clips: args.n_clips.or(file.get("n_clips")?).unwrap_or(d.n_clips),
        num_frames: args.frames.or(file.get("frames")?).unwrap_or(d.num_frames),
        fps: args.fps.or(file.get("fps")?).unwrap_or(d.fps),
        occurrence_min: args.occ_min.or(file.get("occ_min")?).unwrap_or(d.occurrence_min),
        occurrence_max: args.occ_max.or(file.get("occ_max")?).unwrap_or(d.occurrence_max),
        court_width: file.get("court_width")?.unwrap_or(d.court_width),
        court_height: file.get("court_height")?.unwrap_or(d.court_height),
        noise_scale: args
            .noise_scale
            .or(file.get("noise_scale")?)
            .unwrap_or(d.noise_scale),
        difficulty,
    };
    let manifest = generate_dataset(&cfg, &args.out)?;
    let count = |s: Split| manifest.clips.iter().filter(|c| c.split == s).count();
    println!(
        "wrote {} clips to {} (train {}, val {}, test {})",
        manifest.clips.len(),
        args.out.display(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
    );
    Ok(())
}

fn clip_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join("manifest.json").exists() {
        let manifest = crate::annotation::load_manifest(dir)?;
        return Ok(manifest.clips.iter().map(|e| dir.join(&e.file)).collect());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    #[derive(serde::Serialize)]
    struct FileReport {
        file: String,
        findings: Vec<crate::annotation::Finding>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    }
    let files = clip_files(&args.data)?;
    if files.is_empty() {
        return Err(CliError::Runtime(format!(
            "no clip files found under {}",
            args.data.display()
        )));
    }
    let mut reports = Vec::new();
    let mut total = 0usize;
    for path in &files {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        // Deserialize leniently so invariant findings are reported even when
        // strict parsing would refuse the document.
        match serde_json::from_slice::<ClipAnnotation>(&bytes) {
            Ok(clip) => {
                let report = validate_clip(&clip);
                total += report.findings.len();
                reports.push(FileReport {
                    file: name,
                    findings: report.findings,
                    error: None,
                });
            }
            Err(e) => {
                total += 1;
                reports.push(FileReport {
                    file: name,
                    findings: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    eprintln!("{} file(s), {} finding(s)", files.len(), total);
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let clips = load_clips(&args.data)?;
    let stats = dataset_stats(clips.iter().map(|(c, _)| c));
    let json = serde_json::to_string_pretty(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, json.as_bytes())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn load_clips(dir: &Path) -> Result<Vec<(ClipAnnotation, Split)>, CliError> {
    Ok(load_dataset(dir)?)
}

fn split_clips(
    clips: Vec<(ClipAnnotation, Split)>,
) -> (Vec<ClipAnnotation>, Vec<ClipAnnotation>, Vec<ClipAnnotation>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (clip, split) in clips {
        let clip = derive_velocities(&clip);
        match split {
            Split::Train => train.push(clip),
            Split::Val => val.push(clip),
            Split::Test => test.push(clip),
        }
    }
    (train, val, test)
}

/// Train artifacts written into the output directory.
pub fn write_train_outputs(
    out: &Path,
    model: &GiftModel,
    history: &TrainHistory,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let ckpt = out.join("checkpoint.json");
    std::fs::write(&ckpt, model.checkpoint_bytes())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", ckpt.display())))?;
    let csv = out.join("history.csv");
    std::fs::write(&csv, history.to_csv())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    let json = out.join("history.json");
    std::fs::write(&json, history.to_json_bytes())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", json.display())))?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let train_cfg = build_train_config(&file, &args)?;
    let model_cfg = build_model_config(&file, args.embed_dim, train_cfg.dropout)?;
    let (train_clips, val_clips, _) = split_clips(load_clips(&args.data)?);
    if train_clips.is_empty() {
        return Err(CliError::Runtime("dataset has no train split".into()));
    }
    if val_clips.is_empty() {
        return Err(CliError::Runtime("dataset has no validation split".into()));
    }
    let (model, history) = train(&train_clips, &val_clips, &model_cfg, &train_cfg)?;
    write_train_outputs(&args.out, &model, &history)?;
    println!(
        "trained {} epochs on {} clips; best val total {:.6} at epoch {}; artifacts in {}",
        train_cfg.epochs,
        train_clips.len(),
        history.best_val_total,
        history.best_epoch,
        args.out.display(),
    );
    Ok(())
}

fn cmd_forecast(args: ForecastArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let tau = args.tau.or(file.get("tau")?).unwrap_or(10);
    let threshold = args
        .threshold
        .or(file.get("threshold")?)
        .unwrap_or(DEFAULT_THRESHOLD);
    let model = GiftModel::load(&args.checkpoint)?;
    let bytes = std::fs::read(&args.clip)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.clip.display())))?;
    let clip = derive_velocities(&parse_clip_with(&bytes, Strictness::Strict)?);
    let prediction = forecast_occurrence(&model, &clip, tau, threshold)?;
    let json = serde_json::to_string_pretty(&prediction)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let tau = args.tau.or(file.get("tau")?).unwrap_or(10);
    let threshold = args
        .threshold
        .or(file.get("threshold")?)
        .unwrap_or(DEFAULT_THRESHOLD);
    let delta = args.delta.or(file.get("delta")?).unwrap_or(0);
    let match_cfg = MatchConfig { delta };
    let model = GiftModel::load(&args.checkpoint)?;
    let (train_clips, _, test_clips) = split_clips(load_clips(&args.data)?);
    if test_clips.is_empty() {
        return Err(CliError::Runtime("dataset has no test split".into()));
    }
    let report = evaluate_model(&model, &test_clips, tau, threshold, &match_cfg)?;
    let json = String::from_utf8(report.to_json_bytes()).expect("utf8");
    println!("{json}");
    if args.baseline {
        let baseline = baseline_mean_predictor(&train_clips)?;
        let base_report = evaluate(&baseline, &test_clips, &match_cfg)?;
        eprintln!(
            "mean-frame baseline (frame {}): mae {:.4}",
            baseline.frame, base_report.mae
        );
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
        let jpath = out.join("eval_report.json");
        std::fs::write(&jpath, report.to_json_bytes())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", jpath.display())))?;
        let cpath = out.join("eval_report.csv");
        std::fs::write(&cpath, report.to_csv())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", cpath.display())))?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let entries = gradcheck_suite(args.full).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut worst: f64 = 0.0;
    for entry in &entries {
        println!("{:<28} max rel err {:.3e}", entry.name, entry.max_rel_err);
        worst = worst.max(entry.max_rel_err);
    }
    println!("worst case: {worst:.3e}");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE:.0e}"
        )))
    }
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<(), CliError> {
    if args.history.is_none() && args.checkpoint.is_none() {
        return Err(CliError::Usage(
            "plot-data needs --history and/or --checkpoint with --data".into(),
        ));
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;

    if let Some(history_path) = &args.history {
        let bytes = std::fs::read(history_path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", history_path.display())))?;
        let history: TrainHistory = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", history_path.display())))?;
        let path = args.out.join("loss_curve.csv");
        std::fs::write(&path, history.to_csv())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }

    if let Some(checkpoint) = &args.checkpoint {
        let data = args.data.as_ref().ok_or_else(|| {
            CliError::Usage("--checkpoint requires --data for deviations.csv".into())
        })?;
        let tau = args.tau.unwrap_or(10);
        let threshold = args.threshold.unwrap_or(DEFAULT_THRESHOLD);
        let model = GiftModel::load(checkpoint)?;
        let (_, _, test_clips) = split_clips(load_clips(data)?);
        if test_clips.is_empty() {
            return Err(CliError::Runtime("dataset has no test split".into()));
        }
        let predictor = ModelPredictor {
            model: &model,
            tau,
            threshold,
        };
        let mut csv = String::from("clip_id,ground_truth,prediction,abs_error,crossed\n");
        for clip in &test_clips {
            let p = predictor
                .forecast_clip(clip)
                .map_err(|e| CliError::Runtime(e))?;
            let err = (p.point_estimate as i64 - clip.occurrence_frame as i64).abs();
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                clip.clip_id, clip.occurrence_frame, p.point_estimate, err, p.crossed_threshold
            ));
        }
        let path = args.out.join("deviations.csv");
        std::fs::write(&path, csv)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
