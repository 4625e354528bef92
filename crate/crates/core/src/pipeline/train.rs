use std::time::Instant;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::checkpoint::{Checkpoint, PhaseTag};
use super::surgery::remove_dropout;
use crate::datagen::{Dataset, Split, Target, Task};
use crate::error::{Error, Result};
use crate::graph::{backward, forward, Mode};
use crate::optim::{bce_loss, bce_with_logits_loss, correct_count, cross_entropy_loss, OptimizerState, UpdateRule};
use crate::params::{init_params, Params};
use crate::report::{EpochMetrics, RunReport, Stage};
use crate::rng;
use crate::spec::{LayerKind, NetworkSpec};
use crate::tensor::Tensor;

/// Minimum decrease in epoch train loss that counts as an improvement.
pub const EARLY_STOP_MIN_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: UpdateRule,
    pub seed: u64,
    /// Stop after this many epochs without train-loss improvement; 0 never stops early.
    pub patience: usize,
    /// Phase 2 only: insert dropout after the hidden dense layer.
    pub dropout_enabled: bool,
    /// Zero the gradients of `enc_*` parameters.
    pub freeze_encoder: bool,
    /// Record per-epoch wall-clock seconds (makes reports non-reproducible).
    pub record_wall_time: bool,
}

impl PhaseConfig {
    pub fn phase1(seed: u64) -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            optimizer: UpdateRule::default(),
            seed,
            patience: 5,
            dropout_enabled: false,
            freeze_encoder: false,
            record_wall_time: false,
        }
    }

    pub fn phase2(seed: u64) -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            optimizer: UpdateRule::default(),
            dropout_enabled: true,
            ..Self::phase1(seed)
        }
    }

    pub fn benchmark(seed: u64) -> Self {
        Self { dropout_enabled: false, ..Self::phase2(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidHyperparameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidHyperparameter("batch size must be at least 1".into()));
        }
        self.optimizer.validate()
    }

    /// Canonical `key=value` description of everything that affects training.
    pub fn describe(&self) -> String {
        let opt = match self.optimizer {
            UpdateRule::Sgd { learning_rate } => format!("sgd lr={learning_rate:?}"),
            UpdateRule::SgdMomentum { learning_rate, momentum } => {
                format!("momentum lr={learning_rate:?} momentum={momentum:?}")
            }
            UpdateRule::Adam { learning_rate, beta1, beta2, eps } => {
                format!("adam lr={learning_rate:?} beta1={beta1:?} beta2={beta2:?} eps={eps:?}")
            }
        };
        format!(
            "epochs={}\nbatch_size={}\noptimizer={opt}\nseed={}\npatience={}\ndropout={}\nfreeze_encoder={}\n",
            self.epochs, self.batch_size, self.seed, self.patience, self.dropout_enabled, self.freeze_encoder
        )
    }

    /// First 8 bytes of SHA-256 of [`describe`](Self::describe), as hex.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.describe().as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    Edges,
    Classes,
}

/// The network actually optimized: a terminal Sigmoid/Softmax is folded into
/// the loss, so training runs on logits.
struct Trainable {
    spec: NetworkSpec,
    on_logits: bool,
}

impl Trainable {
    fn new(spec: &NetworkSpec, objective: Objective) -> Result<Self> {
        let fold = matches!(
            (objective, spec.layers().last().map(|l| &l.kind)),
            (Objective::Edges, Some(LayerKind::Sigmoid)) | (Objective::Classes, Some(LayerKind::Softmax))
        );
        let mut layers = spec.layers().to_vec();
        if fold {
            layers.pop();
        }
        Ok(Self { spec: NetworkSpec::new(layers)?, on_logits: fold })
    }

    fn loss(&self, objective: Objective, out: &Tensor, batch: &Batch) -> Result<(f32, Tensor, usize)> {
        match (objective, &batch.targets) {
            (Objective::Edges, Targets::Maps(t)) => {
                let (l, g) = if self.on_logits { bce_with_logits_loss(out, t)? } else { bce_loss(out, t)? };
                Ok((l, g, 0))
            }
            (Objective::Classes, Targets::Labels(labels)) => {
                let (l, g) = cross_entropy_loss(out, labels)?;
                Ok((l, g, correct_count(out, labels)?))
            }
            _ => unreachable!("targets follow the objective"),
        }
    }
}

enum Targets {
    Maps(Tensor),
    Labels(Vec<usize>),
}

struct Batch {
    inputs: Tensor,
    targets: Targets,
}

fn make_batch(dataset: &Dataset, indices: &[usize]) -> Result<Batch> {
    let inputs: Vec<&Tensor> = indices.iter().map(|&i| &dataset.items[i].input).collect();
    let targets = match dataset.task {
        Task::EdgeMap => {
            let maps: Vec<&Tensor> = indices
                .iter()
                .map(|&i| match &dataset.items[i].target {
                    Target::Map(m) => Ok(m),
                    Target::Class(_) => Err(Error::InvalidDataset(format!("item {i} has a class target"))),
                })
                .collect::<Result<_>>()?;
            Targets::Maps(Tensor::stack(&maps)?)
        }
        Task::Classification => Targets::Labels(
            indices
                .iter()
                .map(|&i| {
                    dataset.items[i].class().ok_or_else(|| Error::InvalidDataset(format!("item {i} has a map target")))
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(Batch { inputs: Tensor::stack(&inputs)?, targets })
}

/// Mean loss (and accuracy for classifiers) of `spec` over one split, in eval mode.
pub fn evaluate(
    spec: &NetworkSpec,
    params: &Params,
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
) -> Result<(f64, Option<f64>)> {
    let objective = objective_of(dataset);
    let net = Trainable::new(spec, objective)?;
    let indices = dataset.split_indices(split);
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    eval_indices(&net, objective, params, dataset, &indices, batch_size.max(1))
}

fn eval_indices(
    net: &Trainable,
    objective: Objective,
    params: &Params,
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(f64, Option<f64>)> {
    let (mut loss, mut correct) = (0.0f64, 0usize);
    let mut no_rng = rng::rng_from(0);
    for chunk in indices.chunks(batch_size) {
        let batch = make_batch(dataset, chunk)?;
        let (out, _) = forward(&net.spec, params, &batch.inputs, Mode::Eval, &mut no_rng)?;
        let (l, _, c) = net.loss(objective, &out, &batch)?;
        loss += f64::from(l) * chunk.len() as f64;
        correct += c;
    }
    let n = indices.len() as f64;
    let acc = (objective == Objective::Classes).then(|| correct as f64 / n);
    Ok((loss / n, acc))
}

fn objective_of(dataset: &Dataset) -> Objective {
    match dataset.task {
        Task::EdgeMap => Objective::Edges,
        Task::Classification => Objective::Classes,
    }
}

/// Seeded mini-batch training shared by every phase. Batch order and dropout
/// masks come from streams derived from `(config.seed, epoch)`.
fn fit(
    spec: &NetworkSpec,
    mut params: Params,
    dataset: &Dataset,
    config: &PhaseConfig,
    report: &mut RunReport,
) -> Result<Params> {
    config.validate()?;
    params.validate(spec)?;
    let objective = objective_of(dataset);
    let net = Trainable::new(spec, objective)?;
    let train = dataset.split_indices(Split::Train);
    let test = dataset.split_indices(Split::Test);
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut optimizer = OptimizerState::new(config.optimizer)?;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let epoch_seed = rng::mix(rng::derive(config.seed, "epoch"), epoch as u64);
        let mut order = train.clone();
        order.shuffle(&mut rng::rng_from(rng::derive(epoch_seed, "order")));
        let mut dropout_rng = rng::rng_from(rng::derive(epoch_seed, "dropout"));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = make_batch(dataset, chunk)?;
            let (loss, mut grads, c) = {
                let (out, tape) = forward(&net.spec, &params, &batch.inputs, Mode::Train, &mut dropout_rng)?;
                let (loss, grad, c) = net.loss(objective, &out, &batch)?;
                (loss, backward(&tape, &grad)?, c)
            };
            if config.freeze_encoder {
                for (name, g) in grads.iter_mut() {
                    if name.starts_with("enc_") {
                        g.data_mut().fill(0.0);
                    }
                }
            }
            optimizer.apply(&mut params, &grads)?;
            loss_sum += f64::from(loss) * chunk.len() as f64;
            correct += c;
        }
        let n = train.len() as f64;
        let train_loss = loss_sum / n;
        if !train_loss.is_finite() {
            return Err(Error::InvalidHyperparameter(format!("training diverged at epoch {epoch}")));
        }
        let (test_loss, test_acc) = if test.is_empty() {
            (None, None)
        } else {
            let (l, a) = eval_indices(&net, objective, &params, dataset, &test, config.batch_size)?;
            (Some(l), a)
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            train_acc: (objective == Objective::Classes).then(|| correct as f64 / n),
            test_loss,
            test_acc,
            wall_seconds: config.record_wall_time.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "{} epoch {epoch}/{}: train_loss={train_loss:.5} train_acc={} test_loss={} test_acc={}",
            report.file_stem(),
            config.epochs,
            fmt_opt(metrics.train_acc),
            fmt_opt(metrics.test_loss),
            fmt_opt(metrics.test_acc)
        );
        report.epochs.push(metrics);
        if train_loss < best - EARLY_STOP_MIN_DELTA {
            best = train_loss;
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                log::info!("{}: early stop after {epoch} epochs", report.file_stem());
                break;
            }
        }
    }
    Ok(params)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn output_width(spec: &NetworkSpec, dataset: &Dataset) -> Result<usize> {
    let first = dataset.items.first().ok_or(Error::EmptyDataset)?;
    let mut shape = vec![1];
    shape.extend_from_slice(first.input.shape());
    let out = spec.output_shape(&shape)?;
    Ok(*out.last().expect("non-empty output shape"))
}

fn require_task(dataset: &Dataset, task: Task) -> Result<()> {
    if dataset.task != task {
        return Err(Error::TaskMismatch { expected: task.name().into(), got: dataset.task.name().into() });
    }
    Ok(())
}

fn require_classes(spec: &NetworkSpec, dataset: &Dataset) -> Result<()> {
    require_task(dataset, Task::Classification)?;
    let width = output_width(spec, dataset)?;
    if dataset.num_classes() != width {
        return Err(Error::ClassCountMismatch { expected: width, got: dataset.num_classes() });
    }
    Ok(())
}

/// Phase 1: the edge autoencoder from a seeded initialization.
pub fn train_phase1(spec: &NetworkSpec, dataset: &Dataset, config: &PhaseConfig) -> Result<(Checkpoint, RunReport)> {
    require_task(dataset, Task::EdgeMap)?;
    let params = init_params(spec, rng::derive(config.seed, "phase1-init"));
    let mut report = RunReport::new("dpt", Stage::Phase1, config.fingerprint(), config.seed);
    let params = fit(spec, params, dataset, config, &mut report)?;
    let ckpt = Checkpoint::new(PhaseTag::Phase1, config.seed, report.len() as u32, spec.clone(), params)?;
    Ok((ckpt, report))
}

/// Phase 2: shape classification. Dropout is removed from the stored spec.
pub fn train_phase2(
    spec: &NetworkSpec,
    params: Params,
    dataset: &Dataset,
    config: &PhaseConfig,
) -> Result<(Checkpoint, RunReport)> {
    require_classes(spec, dataset)?;
    let mut report = RunReport::new("dpt", Stage::Phase2, config.fingerprint(), config.seed);
    let params = fit(spec, params, dataset, config, &mut report)?;
    let (spec, params) = remove_dropout(spec, &params)?;
    let ckpt = Checkpoint::new(PhaseTag::Phase2, config.seed, report.len() as u32, spec, params)?;
    Ok((ckpt, report))
}

/// Downstream fine-tuning of a transferred (`vanilla == false`) or freshly
/// initialized (`vanilla == true`) benchmark network.
pub fn train_benchmark(
    spec: &NetworkSpec,
    params: Params,
    dataset: &Dataset,
    config: &PhaseConfig,
    vanilla: bool,
) -> Result<(Checkpoint, RunReport)> {
    require_classes(spec, dataset)?;
    let (run_id, tag) = if vanilla { ("vanilla", PhaseTag::Vanilla) } else { ("dpt", PhaseTag::Benchmark) };
    let mut report = RunReport::new(run_id, Stage::Benchmark, config.fingerprint(), config.seed);
    let params = fit(spec, params, dataset, config, &mut report)?;
    let ckpt = Checkpoint::new(tag, config.seed, report.len() as u32, spec.clone(), params)?;
    Ok((ckpt, report))
}
