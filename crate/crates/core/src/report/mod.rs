//! Per-epoch run metrics, convergence detection and paired comparisons.

mod plot;
mod table;

use std::fmt;
use std::str::FromStr;

pub use plot::{emit_svg_plot, render_svg};
pub use table::{
    emit_comparison_csv, emit_csv, format_real, parse_csv, read_csv, render_comparison_csv, render_csv, CSV_HEADER,
};

use crate::error::{Error, Result};

/// Default sliding window for [`convergence_epoch`].
pub const CONVERGENCE_WINDOW: usize = 3;
/// Default band width for [`convergence_epoch`].
pub const CONVERGENCE_TOL: f64 = 0.02;
/// `similar` requires the final metrics to be at most this far apart.
pub const SIMILAR_FINAL: f64 = 0.05;
/// `similar` requires the convergence epochs to be at most this far apart.
pub const SIMILAR_EPOCHS: f64 = 2.0;

/// Training stage a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Phase1,
    Phase2,
    Benchmark,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Phase1 => "phase1",
            Stage::Phase2 => "phase2",
            Stage::Benchmark => "benchmark",
        }
    }

    /// The metric convergence and comparisons look at: loss for the edge
    /// stage, training accuracy for classifiers.
    pub fn tracked_metric(self) -> Metric {
        match self {
            Stage::Phase1 => Metric::TrainLoss,
            Stage::Phase2 | Stage::Benchmark => Metric::TrainAcc,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase1" => Ok(Stage::Phase1),
            "phase2" => Ok(Stage::Phase2),
            "benchmark" => Ok(Stage::Benchmark),
            other => Err(Error::BadReport(format!("unknown stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    TrainLoss,
    TrainAcc,
    TestLoss,
    TestAcc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::TrainLoss, Metric::TrainAcc, Metric::TestLoss, Metric::TestAcc];

    /// Column name, as in the CSV header.
    pub fn name(self) -> &'static str {
        match self {
            Metric::TrainLoss => "train_loss",
            Metric::TrainAcc => "train_acc",
            Metric::TestLoss => "test_loss",
            Metric::TestAcc => "test_acc",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::TrainAcc | Metric::TestAcc)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::MetricAbsent(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub wall_seconds: Option<f64>,
}

impl EpochMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::TrainLoss => Some(self.train_loss),
            Metric::TrainAcc => self.train_acc,
            Metric::TestLoss => self.test_loss,
            Metric::TestAcc => self.test_acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_id: String,
    pub phase: Stage,
    pub config_fingerprint: String,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
}

impl RunReport {
    pub fn new(run_id: impl Into<String>, phase: Stage, config_fingerprint: impl Into<String>, seed: u64) -> Self {
        Self { run_id: run_id.into(), phase, config_fingerprint: config_fingerprint.into(), seed, epochs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `<run_id>.<phase>`, the stem of every file emitted for this run.
    pub fn file_stem(&self) -> String {
        format!("{}.{}", self.run_id, self.phase)
    }

    /// The full series of `metric`, or `None` if any epoch lacks it.
    pub fn series(&self, metric: Metric) -> Option<Vec<f64>> {
        self.epochs.iter().map(|e| e.get(metric)).collect()
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Epochs are numbered 1, 2, ...; accuracies lie in `[0, 1]`; losses are finite.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.epochs.iter().enumerate() {
            if e.epoch != i + 1 {
                return Err(Error::BadReport(format!("epoch {} found at position {}", e.epoch, i + 1)));
            }
            for acc in [e.train_acc, e.test_acc].into_iter().flatten() {
                if !(0.0..=1.0).contains(&acc) {
                    return Err(Error::BadReport(format!("accuracy {acc} at epoch {}", e.epoch)));
                }
            }
            for loss in [Some(e.train_loss), e.test_loss].into_iter().flatten() {
                if !loss.is_finite() {
                    return Err(Error::BadReport(format!("non-finite loss at epoch {}", e.epoch)));
                }
            }
        }
        Ok(())
    }

    /// True when training loss fell by less than 20% from the first to the last epoch.
    pub fn flagged(&self) -> bool {
        match (self.epochs.first(), self.epochs.last()) {
            (Some(first), Some(last)) => {
                last.train_loss.is_nan() || first.train_loss.is_nan() || last.train_loss > 0.8 * first.train_loss
            }
            _ => true,
        }
    }
}

/// First epoch `e` (1-based) whose window `[e, e + window - 1]` spans at most `tol`.
pub fn series_convergence(series: &[f64], window: usize, tol: f64) -> Result<Option<usize>> {
    if window < 2 {
        return Err(Error::InvalidHyperparameter("convergence window must be at least 2".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidHyperparameter("convergence tolerance must be positive".into()));
    }
    if series.len() < window {
        return Err(Error::SeriesTooShort { len: series.len(), window });
    }
    Ok(series
        .windows(window)
        .position(|w| {
            let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo <= tol
        })
        .map(|i| i + 1))
}

/// Convergence epoch of the report's tracked metric (see [`Stage::tracked_metric`]).
pub fn convergence_epoch(report: &RunReport, window: usize, tol: f64) -> Result<Option<usize>> {
    let metric = report.phase.tracked_metric();
    let series = report.series(metric).ok_or_else(|| Error::MetricAbsent(metric.name().to_string()))?;
    series_convergence(&series, window, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Faster,
    Similar,
    Slower,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Faster => "faster",
            Verdict::Similar => "similar",
            Verdict::Slower => "slower",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Run `a` measured against run `b` on their common epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub run_a: String,
    pub run_b: String,
    pub phase: Stage,
    pub metric: Metric,
    pub final_a: f64,
    pub final_b: f64,
    /// `final_a - final_b`.
    pub final_delta: f64,
    pub convergence_a: Option<usize>,
    pub convergence_b: Option<usize>,
    /// `convergence_a - convergence_b`; a run that never converges counts as
    /// infinitely late, and two such runs as tied.
    pub convergence_delta: f64,
    /// `(epoch, metric in a, metric in b)` over the common length.
    pub paired: Vec<(usize, f64, f64)>,
    pub verdict: Verdict,
}

/// Compares `a` to `b`; the verdict reads "a converges `faster`/`similar`/`slower` than b".
pub fn compare_runs(a: &RunReport, b: &RunReport) -> Result<ComparisonSummary> {
    if a.phase != b.phase {
        return Err(Error::IncomparablePhases { a: a.phase.to_string(), b: b.phase.to_string() });
    }
    let metric = a.phase.tracked_metric();
    let absent = || Error::MetricAbsent(metric.name().to_string());
    let n = a.len().min(b.len());
    let sa = a.series(metric).ok_or_else(absent)?[..n].to_vec();
    let sb = b.series(metric).ok_or_else(absent)?[..n].to_vec();
    let convergence_a = series_convergence(&sa, CONVERGENCE_WINDOW, CONVERGENCE_TOL)?;
    let convergence_b = series_convergence(&sb, CONVERGENCE_WINDOW, CONVERGENCE_TOL)?;
    let convergence_delta = match (convergence_a, convergence_b) {
        (Some(x), Some(y)) => x as f64 - y as f64,
        (Some(_), None) => f64::NEG_INFINITY,
        (None, Some(_)) => f64::INFINITY,
        (None, None) => 0.0,
    };
    let (final_a, final_b) = (sa[n - 1], sb[n - 1]);
    let final_delta = final_a - final_b;
    let verdict = if final_delta.abs() <= SIMILAR_FINAL && convergence_delta.abs() <= SIMILAR_EPOCHS {
        Verdict::Similar
    } else if convergence_delta.abs() > SIMILAR_EPOCHS {
        if convergence_delta < 0.0 {
            Verdict::Faster
        } else {
            Verdict::Slower
        }
    } else if (final_delta > 0.0) == metric.higher_is_better() {
        Verdict::Faster
    } else {
        Verdict::Slower
    };
    Ok(ComparisonSummary {
        run_a: a.run_id.clone(),
        run_b: b.run_id.clone(),
        phase: a.phase,
        metric,
        final_a,
        final_b,
        final_delta,
        convergence_a,
        convergence_b,
        convergence_delta,
        paired: (0..n).map(|i| (i + 1, sa[i], sb[i])).collect(),
        verdict,
    })
}

#[cfg(test)]
pub(crate) fn report_from(run_id: &str, phase: Stage, metric: Metric, values: &[f64]) -> RunReport {
    let mut r = RunReport::new(run_id, phase, "0000000000000000", 1);
    for (i, &v) in values.iter().enumerate() {
        let mut e = EpochMetrics {
            epoch: i + 1,
            train_loss: 1.0,
            train_acc: None,
            test_loss: None,
            test_acc: None,
            wall_seconds: None,
        };
        match metric {
            Metric::TrainLoss => e.train_loss = v,
            Metric::TrainAcc => e.train_acc = Some(v),
            Metric::TestLoss => e.test_loss = Some(v),
            Metric::TestAcc => e.test_acc = Some(v),
        }
        r.epochs.push(e);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_examples() {
        let s = [1.0, 0.5, 0.30, 0.29, 0.30, 0.29];
        assert_eq!(series_convergence(&s, 3, 0.02).unwrap(), Some(3));
        let falling: Vec<f64> = (0..10).map(|i| 1.0 - 0.1 * i as f64).collect();
        assert_eq!(series_convergence(&falling, 3, 0.02).unwrap(), None);
        assert_eq!(series_convergence(&[0.4; 5], 3, 0.02).unwrap(), Some(1));
        assert!(matches!(series_convergence(&[0.1, 0.2], 3, 0.02), Err(Error::SeriesTooShort { len: 2, window: 3 })));
        assert!(series_convergence(&s, 1, 0.02).is_err());
        assert!(series_convergence(&s, 3, 0.0).is_err());
    }

    #[test]
    fn phase1_tracks_loss() {
        let r = report_from("p1", Stage::Phase1, Metric::TrainLoss, &[1.0, 0.5, 0.30, 0.29, 0.30, 0.29]);
        assert_eq!(convergence_epoch(&r, 3, 0.02).unwrap(), Some(3));
        let r = report_from("p2", Stage::Phase2, Metric::TrainLoss, &[1.0, 0.5, 0.3]);
        assert!(matches!(convergence_epoch(&r, 3, 0.02), Err(Error::MetricAbsent(_))));
    }

    #[test]
    fn identical_runs_are_similar() {
        let a = report_from("a", Stage::Benchmark, Metric::TrainAcc, &[0.2, 0.5, 0.8, 0.9, 0.9, 0.9]);
        let s = compare_runs(&a, &a).unwrap();
        assert_eq!(s.verdict, Verdict::Similar);
        assert_eq!(s.final_delta, 0.0);
        assert_eq!(s.convergence_delta, 0.0);
        assert_eq!(s.paired.len(), 6);
    }

    #[test]
    fn earlier_convergence_is_faster() {
        let mut a = vec![0.1, 0.3, 0.5, 0.7];
        a.extend([0.9; 11]);
        let mut b: Vec<f64> = (0..11).map(|i| 0.1 + 0.07 * i as f64).collect();
        b.extend([0.9; 4]);
        let ra = report_from("a", Stage::Benchmark, Metric::TrainAcc, &a);
        let rb = report_from("b", Stage::Benchmark, Metric::TrainAcc, &b);
        let s = compare_runs(&ra, &rb).unwrap();
        assert_eq!((s.convergence_a, s.convergence_b), (Some(5), Some(12)));
        assert_eq!(s.verdict, Verdict::Faster);
        assert_eq!(compare_runs(&rb, &ra).unwrap().verdict, Verdict::Slower);
    }

    #[test]
    fn final_gap_decides_when_convergence_ties() {
        let a = report_from("a", Stage::Benchmark, Metric::TrainAcc, &[0.5, 0.9, 0.9, 0.9]);
        let b = report_from("b", Stage::Benchmark, Metric::TrainAcc, &[0.5, 0.7, 0.7, 0.7]);
        assert_eq!(compare_runs(&a, &b).unwrap().verdict, Verdict::Faster);
        assert_eq!(compare_runs(&b, &a).unwrap().verdict, Verdict::Slower);
        // Loss: lower is better.
        let a = report_from("a", Stage::Phase1, Metric::TrainLoss, &[0.5, 0.1, 0.1, 0.1]);
        let b = report_from("b", Stage::Phase1, Metric::TrainLoss, &[0.5, 0.3, 0.3, 0.3]);
        assert_eq!(compare_runs(&a, &b).unwrap().verdict, Verdict::Faster);
    }

    #[test]
    fn mismatched_phases_rejected() {
        let a = report_from("a", Stage::Phase2, Metric::TrainAcc, &[0.5; 4]);
        let b = report_from("b", Stage::Benchmark, Metric::TrainAcc, &[0.5; 4]);
        assert!(matches!(compare_runs(&a, &b), Err(Error::IncomparablePhases { .. })));
    }

    #[test]
    fn truncates_to_common_length() {
        let a = report_from("a", Stage::Benchmark, Metric::TrainAcc, &[0.5, 0.6, 0.7, 0.8, 0.9]);
        let b = report_from("b", Stage::Benchmark, Metric::TrainAcc, &[0.5, 0.6, 0.7]);
        let s = compare_runs(&a, &b).unwrap();
        assert_eq!(s.paired.len(), 3);
        assert_eq!(s.final_a, 0.7);
    }

    #[test]
    fn validation_and_flag() {
        let mut r = report_from("a", Stage::Phase1, Metric::TrainLoss, &[1.0, 0.7]);
        r.validate().unwrap();
        assert!(!r.flagged());
        r.epochs[1].train_loss = 0.9;
        assert!(r.flagged());
        r.epochs[1].epoch = 3;
        assert!(r.validate().is_err());
        let bad = report_from("a", Stage::Phase2, Metric::TrainAcc, &[1.5]);
        assert!(bad.validate().is_err());
    }
}
