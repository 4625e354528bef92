//! Resolved invocations and their execution.

use std::path::{Path, PathBuf};

use dpt_core::datagen::{
    load_image_folder, BenchClass, BenchPlan, DatasetWriter, EdgePlan, EdgeSceneConfig, Item, LoadOptions, ShapeClass,
    ShapePlan, Task,
};
use dpt_core::pipeline::{
    build_benchmark_model, build_phase1_model, build_phase2_model, strip_decoder, train_benchmark, train_phase1,
    train_phase2, vanilla_init, Checkpoint,
};
use dpt_core::report::{compare_runs, emit_comparison_csv, emit_csv, emit_svg_plot, read_csv, Stage};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenTask {
    Edges,
    Shapes,
    Bench,
}

impl GenTask {
    pub fn name(self) -> &'static str {
        match self {
            GenTask::Edges => "edges",
            GenTask::Shapes => "shapes",
            GenTask::Bench => "bench",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [GenTask::Edges, GenTask::Shapes, GenTask::Bench].into_iter().find(|t| t.name() == s)
    }

    pub fn default_train_fraction(self) -> f64 {
        match self {
            GenTask::Shapes => 0.9,
            GenTask::Edges | GenTask::Bench => 0.8,
        }
    }
}

/// `64` or `64x48` (height x width).
pub fn parse_resolution(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::usage(format!("bad resolution `{s}` (expected N or HxW)"));
    let (h, w) = match s.split_once('x') {
        Some((h, w)) => (h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    Ok((h, w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenJob {
    pub task: GenTask,
    /// Scene count for edges, images per class otherwise.
    pub size: usize,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub train_fraction: f64,
    pub complexity: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainJob {
    pub stage: Stage,
    pub data: PathBuf,
    pub from: Option<PathBuf>,
    pub vanilla: bool,
    pub out: PathBuf,
    pub run_id: String,
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareJob {
    pub a: PathBuf,
    pub b: PathBuf,
    pub out: PathBuf,
}

impl CompareJob {
    /// `<run_a>_vs_<run_b>.<phase>`, from the report file names.
    pub fn stem(&self) -> String {
        let name = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
        let (a, b) = (name(&self.a), name(&self.b));
        let (a_id, phase) = a.rsplit_once('.').unwrap_or((&a, "run"));
        let b_id = b.rsplit_once('.').map_or(b.as_str(), |(id, _)| id);
        format!("{a_id}_vs_{b_id}.{phase}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Gen(GenJob),
    Train(TrainJob),
    Compare(CompareJob),
}

enum Plan {
    Edges(EdgePlan),
    Shapes(ShapePlan),
    Bench(BenchPlan),
}

impl Plan {
    fn len(&self) -> usize {
        match self {
            Plan::Edges(p) => p.len(),
            Plan::Shapes(p) => p.len(),
            Plan::Bench(p) => p.len(),
        }
    }

    fn item(&self, i: usize) -> CliResult<Item> {
        Ok(match self {
            Plan::Edges(p) => p.item(i)?,
            Plan::Shapes(p) => p.item(i),
            Plan::Bench(p) => p.item(i)?,
        })
    }

    fn task(&self) -> Task {
        match self {
            Plan::Edges(_) => Task::EdgeMap,
            _ => Task::Classification,
        }
    }

    fn class_names(&self) -> Vec<String> {
        match self {
            Plan::Edges(_) => Vec::new(),
            Plan::Shapes(_) => ShapeClass::names(),
            Plan::Bench(_) => BenchClass::names(),
        }
    }

    /// `(train, test)` item counts.
    fn split(&self) -> (usize, usize) {
        let n = self.len();
        let train = match self {
            Plan::Edges(p) => p.train_len(),
            Plan::Shapes(p) => p.train_per_class() * ShapeClass::ALL.len(),
            Plan::Bench(p) => (p.per_class as f64 * p.train_fraction).floor() as usize * BenchClass::ALL.len(),
        };
        (train, n - train)
    }
}

impl GenJob {
    fn plan(&self) -> CliResult<Plan> {
        Ok(match self.task {
            GenTask::Edges => {
                let config = EdgeSceneConfig { complexity: self.complexity, ..EdgeSceneConfig::default() };
                Plan::Edges(EdgePlan::new(self.size, self.resolution, self.seed, config, self.train_fraction)?)
            }
            GenTask::Shapes => {
                Plan::Shapes(ShapePlan::new(self.size, self.resolution, self.seed, self.train_fraction)?)
            }
            GenTask::Bench => Plan::Bench(BenchPlan::new(self.size, self.resolution, self.seed, self.train_fraction)?),
        })
    }

    /// Validates the configuration and prints what would be written.
    pub fn dry_run(&self) -> CliResult<()> {
        let plan = self.plan()?;
        let (train, test) = plan.split();
        println!(
            "{} dataset: {} items ({train} train, {test} test) at {}x{}, seed {}",
            self.task.name(),
            plan.len(),
            self.resolution.0,
            self.resolution.1,
            self.seed
        );
        Ok(())
    }

    fn run(&self) -> CliResult<()> {
        let plan = self.plan()?;
        let (train, test) = plan.split();
        let mut writer = DatasetWriter::create(&self.out, plan.task(), plan.class_names())?;
        for i in 0..plan.len() {
            writer.push(&plan.item(i)?)?;
        }
        let n = writer.finish()?;
        println!("wrote {n} items ({train} train, {test} test) to {}", self.out.display());
        Ok(())
    }
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

impl TrainJob {
    fn run(&self) -> CliResult<()> {
        let config = self.settings.config;
        let arch = &self.settings.arch;
        match (self.stage, &self.from, self.vanilla) {
            (Stage::Phase1, None, false) | (Stage::Phase2, Some(_), false) => {}
            (Stage::Benchmark, Some(_), false) | (Stage::Benchmark, None, true) => {}
            (Stage::Phase1, ..) => return Err(CliError::usage("phase1 takes neither --from nor --vanilla")),
            (Stage::Phase2, ..) => {
                return Err(CliError::usage("phase2 needs --from <phase1 checkpoint> and no --vanilla"))
            }
            (Stage::Benchmark, ..) => {
                return Err(CliError::usage("benchmark needs exactly one of --from <phase2 checkpoint> or --vanilla"))
            }
        }
        // Checkpoints are read before the dataset so a wrong phase fails fast.
        let donor = self.from.as_deref().map(load_checkpoint).transpose()?;
        let dataset = load_image_folder(&self.data, &LoadOptions::default())?;
        let (ckpt, mut report) = match self.stage {
            Stage::Phase1 => train_phase1(&build_phase1_model(arch)?, &dataset, &config)?,
            Stage::Phase2 => {
                let encoder = strip_decoder(donor.as_ref().expect("checked above"), arch)?;
                let (spec, params) =
                    build_phase2_model(&encoder, arch, dataset.resolution, config.dropout_enabled, config.seed)?;
                train_phase2(&spec, params, &dataset, &config)?
            }
            Stage::Benchmark => {
                let k = dataset.num_classes();
                let (spec, params) = match &donor {
                    Some(p2) => build_benchmark_model(p2, arch, k, config.seed)?,
                    None => {
                        let spec = arch.benchmark_spec(dataset.resolution, k)?;
                        let params = vanilla_init(&spec, config.seed);
                        (spec, params)
                    }
                };
                train_benchmark(&spec, params, &dataset, &config, self.vanilla)?
            }
        };
        report.run_id = self.run_id.clone();
        std::fs::create_dir_all(&self.out)?;
        let path = |ext: &str| self.out.join(format!("{}.{}.{ext}", self.run_id, self.stage.name()));
        let (ckpt_path, csv_path, svg_path) = (path("ckpt"), path("csv"), path("svg"));
        ckpt.save(&ckpt_path)?;
        emit_csv(&report, &csv_path)?;
        emit_svg_plot(&[&report], self.stage.tracked_metric(), &svg_path)?;
        let last = report.last().expect("training ran at least one epoch");
        let metric = self.stage.tracked_metric();
        println!(
            "{} {}: {} epochs, final {}={}",
            self.run_id,
            self.stage.name(),
            report.len(),
            metric.name(),
            last.get(metric).map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        println!("checkpoint: {}", ckpt_path.display());
        println!("report: {}", csv_path.display());
        Ok(())
    }
}

fn report_error(path: &Path, e: dpt_core::Error) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

impl CompareJob {
    fn run(&self) -> CliResult<()> {
        let a = read_csv(&self.a).map_err(|e| report_error(&self.a, e))?;
        let b = read_csv(&self.b).map_err(|e| report_error(&self.b, e))?;
        let summary = compare_runs(&a, &b).map_err(|e| CliError::usage(e.to_string()))?;
        std::fs::create_dir_all(&self.out)?;
        let stem = self.stem();
        emit_comparison_csv(&summary, &self.out.join(format!("{stem}.csv")))?;
        emit_svg_plot(&[&a, &b], summary.metric, &self.out.join(format!("{stem}.svg")))?;
        let epoch = |c: Option<usize>| c.map_or("never".to_string(), |e| e.to_string());
        println!("metric: {}", summary.metric.name());
        println!(
            "final: {}={:.4} {}={:.4} delta={:+.4}",
            summary.run_a, summary.final_a, summary.run_b, summary.final_b, summary.final_delta
        );
        println!(
            "convergence epoch: {}={} {}={} delta={:+}",
            summary.run_a,
            epoch(summary.convergence_a),
            summary.run_b,
            epoch(summary.convergence_b),
            summary.convergence_delta
        );
        println!("VERDICT: {}", summary.verdict);
        Ok(())
    }
}

/// Runs `job` and stores its manifest next to the outputs.
pub fn execute(job: &Job) -> CliResult<()> {
    match job {
        Job::Gen(g) => g.run()?,
        Job::Train(t) => t.run()?,
        Job::Compare(c) => c.run()?,
    }
    manifest::write(job)?;
    Ok(())
}
