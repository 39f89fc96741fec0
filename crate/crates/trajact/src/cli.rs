//! The `trajact` command line.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;
use trajact_core::data::{validate_tracklet, Tracklet};
use trajact_core::model::{ModelSpec, Task};
use trajact_core::numerics::{DType, Scalar};
use trajact_core::preprocess::{assign_folds, FoldAssignment};
use trajact_core::stats::{global_kinematics, per_action_kinematics_with, sorted_distribution, action_distribution, DistanceMode};
use trajact_core::synth::generate_with_plans;
use trajact_core::train::{ade, fde, run_fold, EvalMetrics, F1Average, FoldMetrics, FoldOutcome, MetricsReport, TrainSpec};
use trajact_core::vocab::{ScenarioSelector, Vocabulary};
use trajact_core::DT;

use crate::checkpoint::{self, CheckpointHeader};
use crate::config::RunConfig;
use crate::{archive, ingest, report};

#[derive(Debug, Parser)]
#[command(name = "trajact", version, about = "Action-conditioned trajectory prediction toolkit")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Folds trained concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Forces a single job.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Label vocabulary: `full` or `s23`.
    #[arg(long, global = true)]
    pub vocab: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw CSV → tracklet archive (`tracklets.ndjson`).
    Convert { input: Option<PathBuf> },
    /// Action distribution and kinematics of an archive.
    Stats {
        archive: PathBuf,
        #[arg(long, value_enum)]
        distance: Option<DistanceArg>,
    },
    /// Synthetic CSV (`synth.csv`) plus the plans behind it (`plans.json`).
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// k-fold cross-validation; writes checkpoints and `metrics.ndjson`.
    Train(TrainArgs),
    /// Re-evaluates a checkpoint on its validation fold (or the whole archive).
    Eval {
        archive: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate on every tracklet instead of the recorded fold.
        #[arg(long)]
        all: bool,
    },
    /// Prediction record for one tracklet (0-based line in the archive).
    Predict {
        archive: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tracklet: usize,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub archive: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub agent_class: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub actions: Option<bool>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub dtype: Option<DTypeArg>,
    #[arg(long, value_enum)]
    pub f1: Option<F1Arg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Tp,
    Mtl,
    ActionOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DTypeArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum F1Arg {
    Macro,
    Weighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    PerAction,
    PerSegment,
}

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Input = 2,
    Config = 3,
    Numerical = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

type CliResult<T> = Result<T, CliError>;

trait Classify<T> {
    fn input(self) -> CliResult<T>;
    fn config(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(|e| CliError { kind: Failure::Input, error: e.into() })
    }
    fn config(self) -> CliResult<T> {
        self.map_err(|e| CliError { kind: Failure::Config, error: e.into() })
    }
}

/// Maps a core error onto its exit class.
fn core_error(e: trajact_core::Error) -> CliError {
    use trajact_core::Error as E;
    let kind = match e {
        E::NonFinite { .. } => Failure::Numerical,
        E::ModelSpec(_) | E::TrainSpec(_) | E::SynthSpec(_) | E::FoldCount { .. } => Failure::Config,
        _ => Failure::Input,
    };
    CliError { kind, error: e.into() }
}

/// Parses arguments, runs the command and returns the process status.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Failure::Input as u8 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Convert { input } => cmd_convert(&cfg, input),
        Command::Stats { archive, .. } => cmd_stats(&cfg, &archive),
        Command::Synth { .. } => cmd_synth(&cfg),
        Command::Train(args) => cmd_train(&cfg, args.archive.as_deref()),
        Command::Eval { archive, checkpoint, all } => cmd_eval(&cfg, &archive, &checkpoint, all),
        Command::Predict { archive, checkpoint, tracklet } => {
            cmd_predict(&archive, &checkpoint, tracklet, cli.out.as_deref())
        }
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).config()?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.deterministic |= cli.deterministic;
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(v) = &cli.vocab {
        cfg.vocabulary = v.parse::<ScenarioSelector>().config()?;
    }
    match &cli.command {
        Command::Stats { distance: Some(d), .. } => {
            cfg.stats.distance = match d {
                DistanceArg::PerAction => DistanceMode::PerAction,
                DistanceArg::PerSegment => DistanceMode::PerSegment,
            }
        }
        Command::Synth { n, noise, duration } => {
            if let Some(n) = n {
                cfg.synth.n_trajectories = *n;
            }
            if let Some(x) = noise {
                cfg.synth.noise_std = *x;
            }
            if let Some(d) = duration {
                cfg.synth.duration_s = *d;
            }
        }
        Command::Train(a) => apply_train_args(&mut cfg, a),
        _ => {}
    }
    cfg.finalize().config()
}

fn apply_train_args(cfg: &mut RunConfig, a: &TrainArgs) {
    let m = &mut cfg.model;
    if let Some(t) = a.task {
        m.task = match t {
            TaskArg::Tp => Task::TP,
            TaskArg::Mtl => Task::MTL,
            TaskArg::ActionOnly => Task::ActionOnly,
        };
    }
    if let Some(b) = a.agent_class {
        m.use_agent_class = b;
    }
    if let Some(b) = a.actions {
        m.use_actions_in_input = b;
    }
    let t = &mut cfg.train;
    if a.lambda.is_some() {
        t.lambda = a.lambda;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
    }
    if a.max_steps.is_some() {
        t.max_steps = a.max_steps;
    }
    if let Some(v) = a.patience {
        t.early_stop_patience = v;
    }
    if let Some(d) = a.dtype {
        t.dtype = match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
        };
    }
    if let Some(f) = a.f1 {
        t.f1_average = match f {
            F1Arg::Macro => F1Average::Macro,
            F1Arg::Weighted => F1Average::Weighted,
        };
    }
    if let Some(k) = a.folds {
        cfg.folds = k;
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).input(),
        _ => Ok(()),
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))
        .input()?;
    Ok(&cfg.output_dir)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> CliResult<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display())).input()?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush().map_err(Into::into)).input()
}

fn load_archive(path: &Path) -> CliResult<Vec<Tracklet>> {
    archive::load(path).with_context(|| format!("reading archive {}", path.display())).input()
}

/// Splits tracklets into those valid under `vocab` and a rejection count.
fn screen(tracklets: Vec<Tracklet>, vocab: &Vocabulary) -> (Vec<Tracklet>, usize) {
    let mut rejected = 0;
    let kept = tracklets
        .into_iter()
        .filter(|t| {
            let v = validate_tracklet(t, vocab);
            if let Some(first) = v.first() {
                if rejected == 0 {
                    warn!("rejecting tracklet of {} ({first})", t.agent_id);
                }
                rejected += 1;
            }
            v.is_empty()
        })
        .collect();
    (kept, rejected)
}

fn cmd_convert(cfg: &RunConfig, input: Option<PathBuf>) -> CliResult<()> {
    let input = input
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| anyhow!("no input file given"))
        .config()?;
    let file = File::open(&input).with_context(|| format!("cannot open {}", input.display())).input()?;
    let parsed = ingest::parse_csv(std::io::BufReader::new(file), &cfg.schema)
        .with_context(|| format!("parsing {}", input.display()))
        .input()?;
    let r = &parsed.report;
    if r.empty {
        warn!("{} is empty", input.display());
    }
    for (label, n) in &r.unknown_labels {
        warn!("unknown label {label:?} on {n} rows");
    }
    let (tracklets, conv) = ingest::to_tracklets(&parsed.trajectories, DT).map_err(core_error)?;
    let (tracklets, rejected) = screen(tracklets, &cfg.vocab());
    let dir = out_dir(cfg)?;
    let path = dir.join("tracklets.ndjson");
    archive::save(&path, &tracklets).input()?;
    emit(&format!(
        "rows read:          {}\nrows dropped:       {}\ntrajectories in:    {}\ntracklets out:      {}\n\
         tracklets rejected: {rejected}\narchive:            {}\n",
        r.rows,
        r.dropped(),
        conv.trajectories,
        tracklets.len(),
        path.display()
    ))
}

fn cmd_stats(cfg: &RunConfig, archive_path: &Path) -> CliResult<()> {
    let tracklets = load_archive(archive_path)?;
    if tracklets.is_empty() {
        warn!("archive {} holds no tracklets", archive_path.display());
    }
    let per = per_action_kinematics_with(&tracklets, cfg.stats.distance, DT);
    let global = global_kinematics(&tracklets);
    let dist = sorted_distribution(&action_distribution(&tracklets));
    let dir = out_dir(cfg)?;
    write_file(&dir.join("stats.csv"), |w| Ok(report::write_stats_csv(w, &per, &global)?))?;
    write_file(&dir.join("distribution.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report::distribution_json(&dist))?;
        Ok(writeln!(w)?)
    })?;
    if cfg.report.table {
        emit(&report::stats_table(&per, &global))?;
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> CliResult<()> {
    let generated = generate_with_plans(&cfg.synth).map_err(core_error)?;
    let (trajs, plans): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
    let dir = out_dir(cfg)?;
    write_file(&dir.join("synth.csv"), |w| Ok(ingest::write_csv(w, &trajs, true)?))?;
    write_file(&dir.join("plans.json"), |w| Ok(serde_json::to_writer(w, &plans)?))?;
    let rows: usize = trajs.iter().map(|t| t.len()).sum();
    emit(&format!(
        "trajectories: {}\nrows:         {rows}\ncsv:          {}\n",
        trajs.len(),
        dir.join("synth.csv").display()
    ))
}

/// Trains every fold on up to `jobs` threads; results come back in fold order.
pub fn run_folds<S: Scalar>(
    tracklets: &[Tracklet],
    assignment: &FoldAssignment,
    vocab: &Vocabulary,
    model: &ModelSpec,
    train: &TrainSpec,
    jobs: usize,
) -> trajact_core::Result<Vec<FoldOutcome<S>>> {
    let k = assignment.k;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<trajact_core::Result<FoldOutcome<S>>>>> = Mutex::new((0..k).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, k) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= k {
                    break;
                }
                let r = run_fold::<S>(tracklets, assignment, i, vocab, model, train);
                if let Ok(o) = &r {
                    info!("fold {i}: {} epochs, {} steps", o.metrics.epochs, o.metrics.steps);
                }
                slots.lock().expect("fold worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("fold worker panicked")
        .into_iter()
        .map(|r| r.expect("every fold ran"))
        .collect()
}

fn train_and_save<S: Scalar>(
    cfg: &RunConfig,
    tracklets: &[Tracklet],
    assignment: &FoldAssignment,
    dir: &Path,
) -> CliResult<MetricsReport> {
    let vocab = cfg.vocab();
    let outcomes = run_folds::<S>(tracklets, assignment, &vocab, &cfg.model, &cfg.train, cfg.jobs).map_err(core_error)?;
    for o in &outcomes {
        let header = CheckpointHeader {
            model: o.model.spec.clone(),
            vocabulary: vocab.clone(),
            dtype: S::DTYPE,
            fold: Some(o.metrics.fold),
            folds: Some(assignment.k),
            split_seed: cfg.train.seed,
            train_seed: trajact_core::train::fold_seed(cfg.train.seed, o.metrics.fold),
            f1_average: cfg.train.f1_average,
            metrics: Some(o.metrics),
        };
        let path = dir.join(format!("fold_{}.ckpt", o.metrics.fold));
        checkpoint::save(&path, &header, &o.model).input()?;
    }
    Ok(MetricsReport::from_folds(outcomes.iter().map(|o| o.metrics).collect()))
}

fn cmd_train(cfg: &RunConfig, archive_path: Option<&Path>) -> CliResult<()> {
    let path = archive_path
        .map(Path::to_path_buf)
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| anyhow!("no archive given"))
        .config()?;
    let (tracklets, rejected) = screen(load_archive(&path)?, &cfg.vocab());
    if rejected > 0 {
        warn!("{rejected} tracklets do not fit the vocabulary and are skipped");
    }
    let assignment = assign_folds(&tracklets, cfg.folds, cfg.train.seed).map_err(core_error)?;
    let dir = out_dir(cfg)?;
    write_file(&dir.join("folds.json"), |w| Ok(serde_json::to_writer_pretty(w, &assignment)?))?;
    let report = match cfg.train.dtype {
        DType::F32 => train_and_save::<f32>(cfg, &tracklets, &assignment, dir)?,
        DType::F64 => train_and_save::<f64>(cfg, &tracklets, &assignment, dir)?,
    };
    let context = json!({
        "command": "train",
        "seed": cfg.train.seed,
        "folds": cfg.folds,
        "tracklets": tracklets.len(),
        "model": cfg.train.apply_to(&cfg.model),
        "train": cfg.train,
    });
    write_file(&dir.join("metrics.ndjson"), |w| Ok(report::write_metrics(w, context, &report)?))?;
    if cfg.report.table {
        emit(&report::metrics_table(&report))?;
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, archive_path: &Path, ckpt: &Path, all: bool) -> CliResult<()> {
    let (header, model) = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display())).input()?;
    let vocab = header.vocabulary.clone();
    let (tracklets, _) = screen(load_archive(archive_path)?, &vocab);
    let eval_set: Vec<&Tracklet> = match (header.fold, header.folds, all) {
        (Some(fold), Some(k), false) => {
            let assignment = assign_folds(&tracklets, k, header.split_seed).map_err(core_error)?;
            assignment.split(&tracklets, fold).1
        }
        _ => tracklets.iter().collect(),
    };
    let eval: EvalMetrics = model.evaluate(&eval_set, &vocab, header.f1_average).map_err(core_error)?;
    let recorded = header.metrics;
    let row = FoldMetrics {
        fold: if all { 0 } else { header.fold.unwrap_or(0) },
        n_train: recorded.map_or(0, |m| m.n_train),
        epochs: recorded.map_or(0, |m| m.epochs),
        steps: recorded.map_or(0, |m| m.steps),
        eval,
    };
    let report = MetricsReport::from_folds(vec![row]);
    let dir = out_dir(cfg)?;
    let context = json!({
        "command": "eval",
        "checkpoint": ckpt.display().to_string(),
        "whole_archive": all,
    });
    write_file(&dir.join("eval_metrics.ndjson"), |w| Ok(report::write_metrics(w, context, &report)?))?;
    if cfg.report.table {
        emit(&report::metrics_table(&report))?;
    }
    if let (Some(r), false) = (recorded, all) {
        emit(&format!("matches recorded metrics: {}\n", if r.eval == eval { "yes" } else { "no" }))?;
    }
    Ok(())
}

fn cmd_predict(archive_path: &Path, ckpt: &Path, index: usize, out: Option<&Path>) -> CliResult<()> {
    let (header, model) = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display())).input()?;
    let tracklets = load_archive(archive_path)?;
    let t = tracklets
        .get(index)
        .ok_or_else(|| anyhow!("archive has {} tracklets; no index {index}", tracklets.len()))
        .input()?;
    let vocab = &header.vocabulary;
    let problems = validate_tracklet(t, vocab);
    if !problems.is_empty() {
        return Err(anyhow!("tracklet {index}: {}", problems.join("; "))).input();
    }
    let pred = model.predict(&[t], vocab).map_err(core_error)?.remove(0);
    let truth = t.future_positions();
    let (ade_v, fde_v) = if pred.positions.is_empty() {
        (None, None)
    } else {
        (ade(&truth, &pred.positions).ok(), fde(&truth, &pred.positions).ok())
    };
    let record = json!({
        "tracklet_id": index,
        "agent_id": t.agent_id,
        "agent_class": t.agent_class,
        "source_trajectory_id": t.source_trajectory_id,
        "task": model.spec().task,
        "observed": t.observed,
        "predicted": {
            "positions": pred.positions,
            "velocities": pred.velocities,
            "actions": pred.actions,
            "action_probs": pred.action_probs,
        },
        "ground_truth": {
            "positions": truth,
            "actions": t.future_actions(),
        },
        "ade": ade_v,
        "fde": fde_v,
    });
    let text = serde_json::to_string_pretty(&record).input()?;
    emit(&format!("{text}\n"))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).input()?;
        fs::write(dir.join(format!("prediction_{index}.json")), format!("{text}\n")).input()?;
    }
    Ok(())
}
