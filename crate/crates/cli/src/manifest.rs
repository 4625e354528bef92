//! Run manifests: the fully resolved settings of one invocation, stored as
//! `key=value` text next to its outputs. `dpt rerun <manifest>` replays them.

use std::path::{Path, PathBuf};

use dpt_core::pipeline::PhaseConfig;
use dpt_core::report::Stage;

use crate::config::{parse_pairs, Settings};
use crate::error::{CliError, CliResult};
use crate::jobs::{CompareJob, GenJob, GenTask, Job, TrainJob};

const HEADER: &str = "# dpt run manifest\n";

/// `<run_id>.<phase>.run` for training, `dataset.run` for data, `<stem>.run` for comparisons.
pub fn manifest_path(job: &Job) -> PathBuf {
    match job {
        Job::Gen(g) => g.out.join("dataset.run"),
        Job::Train(t) => t.out.join(format!("{}.{}.run", t.run_id, t.stage.name())),
        Job::Compare(c) => c.out.join(format!("{}.run", c.stem())),
    }
}

fn path_value(p: &Path) -> String {
    p.display().to_string()
}

pub fn render(job: &Job) -> String {
    let mut s = String::from(HEADER);
    match job {
        Job::Gen(g) => {
            s += "command=gen-data\n";
            s += &format!("task={}\n", g.task.name());
            s += &format!("size={}\n", g.size);
            s += &format!("resolution={}x{}\n", g.resolution.0, g.resolution.1);
            s += &format!("seed={}\n", g.seed);
            s += &format!("train_fraction={:?}\n", g.train_fraction);
            s += &format!("complexity={}\n", g.complexity);
            s += &format!("out={}\n", path_value(&g.out));
        }
        Job::Train(t) => {
            s += &format!("command={}\n", t.stage.name());
            s += &format!("data={}\n", path_value(&t.data));
            if let Some(from) = &t.from {
                s += &format!("from={}\n", path_value(from));
            }
            s += &format!("vanilla={}\n", t.vanilla);
            s += &format!("seed={}\n", t.settings.config.seed);
            s += &format!("run_id={}\n", t.run_id);
            s += &format!("out={}\n", path_value(&t.out));
            s += &t.settings.render();
        }
        Job::Compare(c) => {
            s += "command=compare\n";
            s += &format!("a={}\n", path_value(&c.a));
            s += &format!("b={}\n", path_value(&c.b));
            s += &format!("out={}\n", path_value(&c.out));
        }
    }
    s
}

pub fn write(job: &Job) -> CliResult<PathBuf> {
    let path = manifest_path(job);
    std::fs::write(&path, render(job)).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

struct Fields {
    pairs: Vec<(String, String)>,
    origin: String,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        let i = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(i).1)
    }

    fn require(&mut self, key: &str) -> CliResult<String> {
        self.take(key).ok_or_else(|| CliError::usage(format!("{}: missing `{key}`", self.origin)))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<T> {
        let v = self.require(key)?;
        v.parse().map_err(|_| CliError::usage(format!("{}: bad value for `{key}`: `{v}`", self.origin)))
    }
}

/// Parses a manifest. `out` replaces the recorded output directory.
pub fn parse(text: &str, origin: &str, out: Option<&Path>) -> CliResult<Job> {
    let mut f = Fields { pairs: parse_pairs(text, origin)?, origin: origin.to_string() };
    let command = f.require("command")?;
    let mut out_dir = PathBuf::from(f.require("out")?);
    if let Some(o) = out {
        out_dir = o.to_path_buf();
    }
    let job = match command.as_str() {
        "gen-data" => {
            let task: String = f.require("task")?;
            let task =
                GenTask::parse(&task).ok_or_else(|| CliError::usage(format!("{origin}: unknown task `{task}`")))?;
            let resolution = crate::jobs::parse_resolution(&f.require("resolution")?)?;
            Job::Gen(GenJob {
                task,
                size: f.parse("size")?,
                resolution,
                seed: f.parse("seed")?,
                train_fraction: f.parse("train_fraction")?,
                complexity: f.parse("complexity")?,
                out: out_dir,
            })
        }
        "compare" => Job::Compare(CompareJob {
            a: PathBuf::from(f.require("a")?),
            b: PathBuf::from(f.require("b")?),
            out: out_dir,
        }),
        other => {
            let stage: Stage =
                other.parse().map_err(|_| CliError::usage(format!("{origin}: unknown command `{other}`")))?;
            let data = PathBuf::from(f.require("data")?);
            let from = f.take("from").map(PathBuf::from);
            let vanilla = f.parse("vanilla")?;
            let seed = f.parse("seed")?;
            let run_id = f.require("run_id")?;
            let mut settings = Settings::new(PhaseConfig::phase1(seed));
            settings.apply(&f.pairs)?;
            f.pairs.clear();
            Job::Train(TrainJob { stage, data, from, vanilla, out: out_dir, run_id, settings })
        }
    };
    if let Some((k, _)) = f.pairs.first() {
        return Err(CliError::usage(format!("{origin}: unexpected key `{k}`")));
    }
    Ok(job)
}

pub fn read(path: &Path, out: Option<&Path>) -> CliResult<Job> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string(), out)
}
