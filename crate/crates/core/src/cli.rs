//! Command-line surface: `gen-data`, `train`, `eval`, `score` and `report`.
//!
//! Every command returns an exit status instead of exiting, so the binary
//! stays a one-liner and the commands can be driven from tests. Status 0 is
//! success, 2 a usage or configuration error and 1 a runtime failure.
//! Diagnostics go to standard error; results go to standard output.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::env::{generate_dataset, read_dataset, write_dataset, EnvSpec};
use crate::error::Error;
use crate::geometry::{iou, BBox, DEFAULT_IOU_THRESHOLD};
use crate::report::{read_metrics, to_csv, to_svg};
use crate::response::parse;
use crate::reward::{accuracy_reward, format_reward};
use crate::trainer::{evaluate, run_experiment, StageMode, TrainConfig};

/// Caps the worker pool used for group building and evaluation.
pub const THREADS_ENV: &str = "GRPO_GROUND_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "grpo-ground",
    version,
    about = "GRPO with IoU rewards on a synthetic grounding task"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded task dataset as JSON Lines.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n: usize,
        /// Environment spec JSON; defaults apply to absent fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run SFT and/or GRPO and write metrics, checkpoints and a report.
    Train {
        /// Training config JSON; defaults apply to absent fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        stage_mode: Option<StageArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Greedy-decode a checkpoint on a dataset and print its scores.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        tau: f64,
    },
    /// Score external response strings against ground-truth boxes.
    Score {
        /// JSON Lines of `{"id", "prediction_text", "gt": [x1, y1, x2, y2]}`.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        tau: f64,
        /// Bin count used to map integer coordinates into the unit square.
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Withhold accuracy credit from responses with broken format.
        #[arg(long)]
        no_salvage: bool,
        /// Optional per-record JSON Lines output.
        #[arg(long)]
        per_record: Option<PathBuf>,
    },
    /// Emit a CSV and an SVG chart of bucket fractions and eval accuracy.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        /// Second metrics file to overlay.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        svg: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
    SftThenGrpo,
    PureRl,
    SftOnly,
    SftThenCotSftMore,
}

impl From<StageArg> for StageMode {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::SftThenGrpo => StageMode::SftThenGrpo,
            StageArg::PureRl => StageMode::PureRl,
            StageArg::SftOnly => StageMode::SftOnly,
            StageArg::SftThenCotSftMore => StageMode::SftThenCotSftMore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub id: String,
    pub prediction_text: String,
    pub gt: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub iou: f64,
    pub acc: f64,
    pub format: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSummary {
    pub tau: f64,
    pub acc_at_tau: f64,
    pub mean_iou: f64,
    pub format_rate: f64,
    pub n: usize,
}

impl ScoreSummary {
    /// JSON object with the accuracy key named after the threshold, e.g. `acc_at_0.5`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert(format!("acc_at_{}", self.tau), self.acc_at_tau.into());
        m.insert("mean_iou".into(), self.mean_iou.into());
        m.insert("format_rate".into(), self.format_rate.into());
        m.insert("n".into(), self.n.into());
        serde_json::Value::Object(m)
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn from_lib(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InfeasibleSpec(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_USAGE;
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    // A pool may already exist when commands run in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::GenData { seed, n, spec, out } => cmd_gen_data(seed, n, spec.as_deref(), &out),
        Command::Train {
            config,
            stage_mode,
            seed,
            out_dir,
        } => cmd_train(
            config.as_deref(),
            stage_mode.map(Into::into),
            seed,
            &out_dir,
        ),
        Command::Eval {
            checkpoint,
            dataset,
            tau,
        } => cmd_eval(&checkpoint, &dataset, tau),
        Command::Score {
            predictions,
            tau,
            bins,
            no_salvage,
            per_record,
        } => cmd_score(&predictions, tau, bins, !no_salvage, per_record.as_deref()),
        Command::Report {
            metrics,
            compare,
            svg,
            csv,
        } => cmd_report(&metrics, compare.as_deref(), &svg, &csv),
    }
}

fn load_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    what: &str,
) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{what} {}: {e}", path.display())))
}

fn write_file(path: &Path, body: &str) -> CmdResult {
    fs::write(path, body)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_gen_data(seed: u64, n: usize, spec: Option<&Path>, out: &Path) -> CmdResult {
    let spec: EnvSpec = match spec {
        Some(p) => load_json(p, "spec")?,
        None => EnvSpec::default(),
    };
    spec.validate().map_err(Failure::from_lib)?;
    let tasks = generate_dataset(seed, n, &spec).map_err(Failure::from_lib)?;
    let mut buf = Vec::new();
    write_dataset(&mut buf, seed, &spec, &tasks).map_err(Failure::from_lib)?;
    fs::write(out, buf)
        .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", out.display())))
}

fn cmd_train(
    config: Option<&Path>,
    stage: Option<StageMode>,
    seed: Option<u64>,
    out_dir: &Path,
) -> CmdResult {
    let mut cfg: TrainConfig = match config {
        Some(p) => load_json(p, "config")?,
        None => TrainConfig::default(),
    };
    if let Some(s) = stage {
        cfg.stage_mode = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(Failure::from_lib)?;
    let out = run_experiment(&cfg, Some(out_dir)).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string(&out.report.final_eval)
            .map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}

fn cmd_eval(ckpt: &Path, dataset: &Path, tau: f64) -> CmdResult {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Failure::Usage(format!("tau must lie in (0, 1), got {tau}")));
    }
    let (params, _) =
        checkpoint::load(ckpt).map_err(|e| Failure::Runtime(format!("{}: {e}", ckpt.display())))?;
    let file = fs::File::open(dataset)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dataset.display())))?;
    let (_, tasks) =
        read_dataset(BufReader::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    let result = evaluate(&params, &tasks, tau).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string(&result).map_err(|e| Failure::Runtime(e.to_string()))?
    );
    Ok(())
}

/// Scores one record: IoU of the parsed box, the gated accuracy reward, and
/// the format reward.
pub fn score_record(rec: &ScoreRecord, bins: usize, salvage: bool) -> crate::Result<RecordScore> {
    let gt = BBox::ground_truth(rec.gt[0], rec.gt[1], rec.gt[2], rec.gt[3], 0.0)?;
    let parsed = parse(&rec.prediction_text, bins);
    Ok(RecordScore {
        id: rec.id.clone(),
        iou: parsed.bbox.map_or(0.0, |b| iou(&b, &gt)),
        acc: accuracy_reward(&parsed, &gt, salvage),
        format: format_reward(&parsed),
    })
}

/// Reads score records, one JSON object per non-blank line.
pub fn read_score_records<R: BufRead>(r: R) -> crate::Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if BBox::ground_truth(rec.gt[0], rec.gt[1], rec.gt[2], rec.gt[3], 0.0).is_err() {
            return Err(Error::Malformed {
                line: i + 1,
                msg: "gt box is degenerate or outside the unit square".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Aggregates per-record scores; accuracy counts rewards strictly above `tau`.
pub fn summarize(scores: &[RecordScore], tau: f64) -> ScoreSummary {
    let n = scores.len();
    let nf = n.max(1) as f64;
    ScoreSummary {
        tau,
        acc_at_tau: scores.iter().filter(|s| s.acc > tau).count() as f64 / nf,
        mean_iou: scores.iter().map(|s| s.acc).sum::<f64>() / nf,
        format_rate: scores.iter().map(|s| s.format as f64).sum::<f64>() / nf,
        n,
    }
}

fn cmd_score(
    path: &Path,
    tau: f64,
    bins: usize,
    salvage: bool,
    per_record: Option<&Path>,
) -> CmdResult {
    if bins < 2 {
        return Err(Failure::Usage(format!(
            "bins must be at least 2, got {bins}"
        )));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Failure::Usage(format!("tau must lie in (0, 1), got {tau}")));
    }
    let file =
        fs::File::open(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let records =
        read_score_records(BufReader::new(file)).map_err(|e| Failure::Runtime(e.to_string()))?;
    if records.is_empty() {
        return Err(Failure::Usage("no records".into()));
    }
    let scores = records
        .iter()
        .map(|r| score_record(r, bins, salvage))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(out) = per_record {
        let mut body = String::new();
        for s in &scores {
            body.push_str(&serde_json::to_string(s).map_err(|e| Failure::Runtime(e.to_string()))?);
            body.push('\n');
        }
        write_file(out, &body)?;
    }
    let summary = summarize(&scores, tau);
    let stdout = std::io::stdout();
    writeln!(stdout.lock(), "{}", summary.to_json()).map_err(|e| Failure::Runtime(e.to_string()))
}

fn cmd_report(metrics: &Path, compare: Option<&Path>, svg: &Path, csv: &Path) -> CmdResult {
    let load = |p: &Path| {
        let f = fs::File::open(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
        read_metrics(BufReader::new(f))
            .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
    };
    let primary = load(metrics)?;
    let second = compare.map(load).transpose()?;
    write_file(csv, &to_csv(&primary))?;
    let label = |p: &Path| p.display().to_string();
    let mut runs: Vec<(String, &[_])> = vec![(label(metrics), &primary[..])];
    if let (Some(p), Some(m)) = (compare, &second) {
        runs.push((label(p), &m[..]));
    }
    let runs: Vec<(&str, &[_])> = runs.iter().map(|(l, m)| (l.as_str(), *m)).collect();
    write_file(svg, &to_svg(&runs))
}
