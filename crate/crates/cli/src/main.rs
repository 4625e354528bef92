//! `dpt`: data generation, the three training phases, run comparison and
//! gradient checking.
//!
//! Exit codes: 0 success, 1 gradient check failed, 2 usage, 3 I/O,
//! 4 checkpoint phase mismatch, 5 dataset mismatch.

mod config;
mod error;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpt_core::gradcheck::run_suite;
use dpt_core::pipeline::PhaseConfig;
use dpt_core::report::Stage;

use config::{parse_pairs, read_pairs, Settings};
use error::{CliError, CliResult};
use jobs::{execute, parse_resolution, CompareJob, GenJob, GenTask, Job, TrainJob};

#[derive(Parser)]
#[command(name = "dpt", version, about = "Developmental pre-training: edges, then shapes, then a benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (images, targets, manifest.csv).
    GenData(GenArgs),
    /// Train the edge autoencoder.
    Phase1(TrainArgs),
    /// Train the shape classifier on a phase-1 encoder.
    Phase2(TrainArgs),
    /// Fine-tune on a downstream dataset from a phase-2 checkpoint, or from scratch with --vanilla.
    Benchmark(TrainArgs),
    /// Compare two run reports and print a verdict.
    Compare(CompareArgs),
    /// Check analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Replay a stored run manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = ["edges", "shapes", "bench"])]
    task: String,
    /// Number of edge scenes.
    #[arg(long)]
    count: Option<usize>,
    /// Images per class (shapes, bench).
    #[arg(long)]
    per_class: Option<usize>,
    /// N or HxW.
    #[arg(long, default_value = "64")]
    resolution: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Primitives per edge scene.
    #[arg(long, default_value_t = 3)]
    complexity: usize,
    #[arg(long, required_unless_present = "dry_run")]
    out: Option<PathBuf>,
    /// Validate the configuration and print the dataset size without writing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory containing manifest.csv.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint of the previous phase.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Benchmark only: train from fresh weights.
    #[arg(long)]
    vanilla: bool,
    /// key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting (repeatable), e.g. --set epochs=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `dpt`, or `vanilla` with --vanilla.
    #[arg(long)]
    run_id: Option<String>,
    /// Zero encoder gradients.
    #[arg(long)]
    freeze_encoder: bool,
    /// Record per-epoch wall-clock seconds in the report.
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Output directory; defaults to the directory of --a.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt the analytic gradient of this parameter (negative control).
    #[arg(long, hide = true)]
    tamper_grad: Option<String>,
}

#[derive(Args)]
struct RerunArgs {
    manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Largest relative error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-3;

fn gen_job(args: GenArgs) -> CliResult<(GenJob, bool)> {
    let task = GenTask::parse(&args.task).expect("clap restricts the value");
    let size = match (task, args.count, args.per_class) {
        (GenTask::Edges, Some(n), None) => n,
        (GenTask::Edges, None, None) => 250,
        (GenTask::Edges, _, Some(_)) => {
            return Err(CliError::usage("--per-class does not apply to edges; use --count"))
        }
        (_, None, Some(n)) => n,
        (_, None, None) => 100,
        (_, Some(_), _) => return Err(CliError::usage("--count applies to edges only; use --per-class")),
    };
    let job = GenJob {
        task,
        size,
        resolution: parse_resolution(&args.resolution)?,
        seed: args.seed,
        train_fraction: args.train_fraction.unwrap_or(task.default_train_fraction()),
        complexity: args.complexity,
        out: absolute(args.out.as_deref().unwrap_or(Path::new(".")))?,
    };
    Ok((job, args.dry_run))
}

fn train_job(stage: Stage, args: TrainArgs) -> CliResult<TrainJob> {
    let config = match stage {
        Stage::Phase1 => PhaseConfig::phase1(args.seed),
        Stage::Phase2 => PhaseConfig::phase2(args.seed),
        Stage::Benchmark => PhaseConfig::benchmark(args.seed),
    };
    let mut settings = Settings::new(config);
    let mut pairs = match &args.config {
        Some(path) => read_pairs(path)?,
        None => Vec::new(),
    };
    pairs.extend(parse_pairs(&args.overrides.join("\n"), "--set")?);
    if args.freeze_encoder {
        pairs.push(("freeze_encoder".into(), "true".into()));
    }
    if args.wall_time {
        pairs.push(("wall_time".into(), "true".into()));
    }
    if pairs.iter().any(|(k, _)| k == "seed") {
        return Err(CliError::usage("the seed is set with --seed"));
    }
    settings.apply(&pairs)?;
    let run_id = args.run_id.unwrap_or_else(|| if args.vanilla { "vanilla" } else { "dpt" }.to_string());
    if run_id.is_empty() || run_id.contains(['.', '/', '\\']) {
        return Err(CliError::usage(format!("bad run id `{run_id}`")));
    }
    Ok(TrainJob {
        stage,
        data: absolute(&args.data)?,
        from: args.from.as_deref().map(absolute).transpose()?,
        vanilla: args.vanilla,
        out: absolute(&args.out)?,
        run_id,
        settings,
    })
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
}

fn gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let target = args.tamper_grad;
    let results = run_suite(args.epsilon, args.seed, |name, g| {
        if target.as_deref() == Some(name) {
            for v in g.data_mut() {
                *v = *v * 2.0 + 0.01;
            }
        }
    })?;
    let mut worst: Option<(f64, String)> = None;
    for (case, report) in &results {
        let at = report.worst.as_deref().unwrap_or("-");
        println!(
            "{case:28} max_rel_error={:.3e} at {at} ({} checked, {} skipped at kinks)",
            report.max_rel_error, report.checked, report.skipped
        );
        if worst.as_ref().is_none_or(|(e, _)| report.max_rel_error > *e) {
            worst = Some((report.max_rel_error, format!("{case}: {at}")));
        }
    }
    let (max, at) = worst.unwrap_or((0.0, "-".into()));
    println!("max relative error {max:.3e} (epsilon {})", args.epsilon);
    if max < GRADCHECK_TOLERANCE {
        println!("PASS");
        Ok(())
    } else {
        Err(CliError::check_failed(format!("FAIL: relative error {max:.3e} at {at} exceeds {GRADCHECK_TOLERANCE:e}")))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(args) => {
            let (job, dry_run) = gen_job(args)?;
            if dry_run {
                job.dry_run()
            } else {
                execute(&Job::Gen(job))
            }
        }
        Command::Phase1(args) => execute(&Job::Train(train_job(Stage::Phase1, args)?)),
        Command::Phase2(args) => execute(&Job::Train(train_job(Stage::Phase2, args)?)),
        Command::Benchmark(args) => execute(&Job::Train(train_job(Stage::Benchmark, args)?)),
        Command::Compare(args) => {
            let out = match args.out {
                Some(o) => o,
                None => args.a.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            execute(&Job::Compare(CompareJob { a: absolute(&args.a)?, b: absolute(&args.b)?, out: absolute(&out)? }))
        }
        Command::Gradcheck(args) => gradcheck(args),
        Command::Rerun(args) => execute(&manifest::read(&args.manifest, args.out.as_deref())?),
    }
}

/// Sets the size of the global thread pool from `DPT_THREADS` (default 1).
fn init_threads() -> CliResult<()> {
    let threads = match std::env::var("DPT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::usage(format!("DPT_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
