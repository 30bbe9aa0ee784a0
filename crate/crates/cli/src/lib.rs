//! Batch workflows over the `dynexp` library: dataset generation, run
//! summaries, mask training and evaluation.
//!
//! Settings resolve in three layers: built-in defaults, then an optional
//! JSON file (`--config`, same layout as `--dump-config` prints), then
//! command-line flags. Every command writes into an output directory and
//! refuses to touch a non-empty one unless `--force` is given.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dynexp::dataset::{
    generate_dataset, load_dataset, render_run, save_dataset, BackgroundMode, BallCount, DatasetError, Family,
    ScenarioConfig,
};
use dynexp::eval::{evaluate_baseline, EvalError};
use dynexp::experience::{summarize_run, ExperienceError};
use dynexp::mask_learn::{
    evaluate_mask_error, load_checkpoint, prepare_samples, save_checkpoint, train_prepared, write_loss_csv, Ablation,
    LearnError, TrainConfig,
};
use dynexp::render::{codec::write_ppm, RenderError};

pub const CHECKPOINT_FILE: &str = "mask.dxck";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MASK_METRICS_FILE: &str = "mask_metrics.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, inputs or environment; exit code 1.
    #[error("{0}")]
    User(String),
    /// A library invariant failed; exit code 2.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Physics(_) | DatasetError::Render(_) => CliError::Internal(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Io(_) => CliError::User(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<ExperienceError> for CliError {
    fn from(e: ExperienceError) -> Self {
        match e {
            ExperienceError::Render(r) => r.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Dataset(d) => d.into(),
            LearnError::Experience(x) => x.into(),
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::HorizonTooLong { .. } | EvalError::EmptyInput | EvalError::Io(_) => CliError::User(e.to_string()),
            EvalError::Dataset(d) => d.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// Everything `--config` may set. Missing keys take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub scenario: ScenarioConfig,
    pub dataset: DatasetParams,
    pub train: TrainConfig,
    pub eval: EvalParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub count: usize,
    pub experience_runs: usize,
    pub prediction_frames: usize,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            count: 200,
            experience_runs: 7,
            prediction_frames: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub horizons: Vec<usize>,
    /// Experience runs fed to the mask model when a checkpoint is scored.
    pub n_used: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            horizons: vec![20, 60, 100],
            n_used: 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dynexp", version, about = "Ball-physics datasets, run summaries and obstacle-mask learning")]
#[command(subcommand_required = false, arg_required_else_help = true)]
pub struct Cli {
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective settings as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of meta-samples.
    Gen(GenArgs),
    /// Write 6-channel summaries and previews for every experience run.
    Summarize(SummarizeArgs),
    /// Train the obstacle-mask regressor.
    TrainMask(TrainArgs),
    /// Score the obstacle-free simulator and optionally a mask checkpoint.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    R2,
    R4,
    C,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::R2 => Family::R2,
            FamilyArg::R4 => Family::R4,
            FamilyArg::C => Family::C,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackgroundArg {
    Solid,
    Texture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateArg {
    None,
    Dynamic,
    Median,
}

impl From<AblateArg> for Ablation {
    fn from(a: AblateArg) -> Self {
        match a {
            AblateArg::None => Ablation::None,
            AblateArg::Dynamic => Ablation::ZeroDynamic,
            AblateArg::Median => Ablation::ZeroMedian,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Master seed; sample `i` derives its own seed from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Start from the 32x32 desk-scale settings instead of 64x64.
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub count: Option<usize>,
    /// Balls per run, for prediction and experience runs alike.
    #[arg(long)]
    pub balls: Option<usize>,
    #[arg(long, value_enum)]
    pub background: Option<BackgroundArg>,
    /// Experience runs per sample.
    #[arg(long)]
    pub experience: Option<usize>,
    /// Frames in each prediction run.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also write every rendered frame as PPM.
    #[arg(long)]
    pub with_frames: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Held-out dataset scored after every epoch.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Experience runs per sample; 0 uses the first prediction frame alone.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub ablate: Option<AblateArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Mask checkpoint to score as well; the baseline needs none.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated horizons, e.g. `20,60,100`.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Experience runs fed to the checkpoint.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn user<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::User(msg.into()))
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::User(format!("--{flag} is required")))
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::User(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", p.display())))
        }
        None => Ok(FileConfig::default()),
    }
}

/// Defaults, then the `--config` file, then the subcommand's flags. `--desk`
/// swaps in the desk-scale scenario settings for the chosen family.
pub fn effective_config(cli: &Cli) -> Result<FileConfig, CliError> {
    let mut cfg = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Some(Command::Gen(a)) => {
            let family = a.family.map(Family::from).unwrap_or(cfg.scenario.family);
            if a.desk {
                cfg.scenario = ScenarioConfig::desk(family);
            } else if cli.config.is_none() {
                cfg.scenario = ScenarioConfig::new(family);
            } else {
                cfg.scenario.family = family;
            }
            if let Some(b) = a.balls {
                cfg.scenario.prediction_balls = BallCount::Fixed(b);
                cfg.scenario.experience_balls = BallCount::Fixed(b);
            }
            if let Some(b) = a.background {
                cfg.scenario.background = match b {
                    BackgroundArg::Solid => BackgroundMode::Solid,
                    BackgroundArg::Texture => BackgroundMode::Texture,
                };
            }
            cfg.dataset.count = a.count.unwrap_or(cfg.dataset.count);
            cfg.dataset.experience_runs = a.experience.unwrap_or(cfg.dataset.experience_runs);
            cfg.dataset.prediction_frames = a.frames.unwrap_or(cfg.dataset.prediction_frames);
        }
        Some(Command::TrainMask(a)) => {
            if let Some(x) = a.ablate {
                cfg.train.channel_ablation = x.into();
            }
            cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
            cfg.train.epochs = a.epochs.unwrap_or(cfg.train.epochs);
            cfg.train.learning_rate = a.lr.unwrap_or(cfg.train.learning_rate);
            cfg.train.batch_size = a.batch_size.unwrap_or(cfg.train.batch_size);
        }
        Some(Command::Eval(a)) => {
            if let Some(h) = &a.horizons {
                cfg.eval.horizons = h.clone();
            }
            cfg.eval.n_used = a.n.unwrap_or(cfg.eval.n_used);
        }
        Some(Command::Summarize(_)) | None => {}
    }
    Ok(cfg)
}

/// Creates `dir`, refusing a non-empty one unless `force`.
fn prepare_out(out: &OutArgs) -> Result<PathBuf, CliError> {
    let dir = required(&out.out, "out")?.clone();
    if dir.exists() {
        if !dir.is_dir() {
            return user(format!("{} exists and is not a directory", dir.display()));
        }
        if !out.force && fs::read_dir(&dir)?.next().is_some() {
            return user(format!("{} is not empty; pass --force to overwrite", dir.display()));
        }
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return user("--threads must be positive");
        }
        // A second call in the same process finds the pool already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = effective_config(cli)?;
    if cli.dump_config {
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &cfg)?;
        writeln!(out)?;
        return Ok(());
    }
    match &cli.command {
        Some(Command::Gen(a)) => cmd_gen(a, &cfg),
        Some(Command::Summarize(a)) => cmd_summarize(a),
        Some(Command::TrainMask(a)) => cmd_train_mask(a, &cfg),
        Some(Command::Eval(a)) => cmd_eval(a, &cfg),
        None => user("a subcommand is required"),
    }
}

fn cmd_gen(a: &GenArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let seed = *required(&a.seed, "seed")?;
    let d = &cfg.dataset;
    if d.count == 0 {
        return user("--count must be positive");
    }
    let ds = generate_dataset(&cfg.scenario, d.experience_runs, d.prediction_frames, d.count, seed)?;
    let dir = prepare_out(&a.out)?;
    let manifest = save_dataset(&ds, &dir, a.with_frames)?;
    println!(
        "wrote {} samples ({} files) to {}",
        ds.samples.len(),
        manifest.samples.len() + manifest.frames.len() + 1,
        dir.display()
    );
    Ok(())
}

fn cmd_summarize(a: &SummarizeArgs) -> Result<(), CliError> {
    use rayon::prelude::*;

    let ds = load_dataset(required(&a.dataset, "dataset")?)?;
    let dir = prepare_out(&a.out)?;
    let palette = &ds.config.palette;
    ds.samples.par_iter().enumerate().try_for_each(|(i, s)| -> Result<(), CliError> {
        let sample_dir = dir.join(format!("sample_{i}"));
        fs::create_dir_all(&sample_dir)?;
        for (j, run) in s.experience_runs.iter().enumerate() {
            let stack = summarize_run(&render_run(&s.scenario, run, palette)?)?;
            let mut w = create(&sample_dir.join(format!("run_{j}.f32")))?;
            stack.write_raw(&mut w)?;
            w.flush()?;
            let (dynamic, median) = stack.visualization();
            write_ppm(&dynamic, &sample_dir.join(format!("run_{j}_dynamic.ppm")))?;
            write_ppm(&median, &sample_dir.join(format!("run_{j}_median.ppm")))?;
        }
        Ok(())
    })?;
    println!("summarized {} samples into {}", ds.samples.len(), dir.display());
    Ok(())
}

fn cmd_train_mask(a: &TrainArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let train_set = load_dataset(required(&a.dataset, "dataset")?)?;
    let prepared = prepare_samples(&train_set.samples, a.n, &train_set.config.palette)?;
    let test = match &a.test {
        Some(p) => {
            let ds = load_dataset(p)?;
            Some(prepare_samples(&ds.samples, a.n, &ds.config.palette)?)
        }
        None => None,
    };
    let dir = prepare_out(&a.out)?;
    let report = train_prepared(&prepared, &cfg.train, test.as_deref())?;
    save_checkpoint(&report.model, &dir.join(CHECKPOINT_FILE))?;
    let mut w = create(&dir.join(LOSS_FILE))?;
    write_loss_csv(&report.curve, &mut w)?;
    w.flush()?;
    let last = report.curve.last().map_or(f64::NAN, |e| e.train_loss);
    println!(
        "trained {} epochs at lr {} ({} halvings); final train loss {last:.6}",
        report.curve.len(),
        report.learning_rate,
        report.lr_halvings
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let ds = load_dataset(required(&a.dataset, "dataset")?)?;
    if cfg.eval.horizons.is_empty() {
        return user("no horizons given");
    }
    let model = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let dir = prepare_out(&a.out)?;
    let report = evaluate_baseline(&ds.samples, &cfg.eval.horizons, &ds.config.palette)?;
    let mut w = create(&dir.join(METRICS_FILE))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    print!("{}", report.table());
    if let Some(model) = model {
        let prepared = prepare_samples(&ds.samples, cfg.eval.n_used, &ds.config.palette)?;
        let stats = evaluate_mask_error(&model, &prepared)?;
        let mut w = create(&dir.join(MASK_METRICS_FILE))?;
        writeln!(w, "n_used,samples,mask_error_mean,mask_error_std,all_on_mean,all_on_std")?;
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e}",
            cfg.eval.n_used, stats.count, stats.mean, stats.std, stats.baseline_mean, stats.baseline_std
        )?;
        w.flush()?;
        println!(
            "mask error {:.6} +- {:.6} (all-on {:.6})",
            stats.mean, stats.std, stats.baseline_mean
        );
    }
    Ok(())
}
