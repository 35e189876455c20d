//! Training loop: uniform step sampling, forward corruption, Adam updates and
//! early stopping on a sample-based validation score.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::denoiser::{Denoiser, NeuralDenoiser};
use crate::error::{Error, Result};
use crate::metrics::{counts, mmd, sl_wasserstein, SetDistance};
use crate::nn::{adam_step, AdamConfig, Gradients, ParameterStore};
use crate::pointset::PointSet;
use crate::rng::SeedStream;
use crate::sampling::{sample_batch, SampleTask};
use crate::schedule::{forward_marginal, DiffusionSchedule, ScheduleShape};

/// Validation score used for early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMetric {
    /// Sequence-length Wasserstein between sample and validation counts.
    SlWasserstein,
    /// MMD with the counting-distance kernel; needs an ordered axis.
    CdMmd,
}

impl FromStr for EvalMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl_wasserstein" => Ok(EvalMetric::SlWasserstein),
            "cd_mmd" => Ok(EvalMetric::CdMmd),
            other => Err(Error::InvalidArgument(format!(
                "unknown eval metric {other:?}"
            ))),
        }
    }
}

impl fmt::Display for EvalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMetric::SlWasserstein => "sl_wasserstein",
            EvalMetric::CdMmd => "cd_mmd",
        })
    }
}

/// Training hyperparameters, plus the schedule and architecture settings the
/// command line needs to build a fresh model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub early_stop_samples: usize,
    /// Evaluations without improvement before stopping.
    pub early_stop_patience: usize,
    pub eval_metric: EvalMetric,
    pub seed: u64,
    /// Epochs between validation runs; 0 picks 1 for up to 1000 training
    /// sets and 10 above.
    pub eval_every: usize,
    pub steps: usize,
    pub schedule: ScheduleShape,
    pub width: usize,
    pub heads: usize,
    pub depth: usize,
    pub components: usize,
    /// Count-head capacity; 0 means twice the largest training cardinality.
    pub max_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_max: 5000,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 1e-4,
            clip_norm: 2.0,
            early_stop_samples: 100,
            early_stop_patience: 50,
            eval_metric: EvalMetric::SlWasserstein,
            seed: 0,
            eval_every: 0,
            steps: 50,
            schedule: ScheduleShape::Linear,
            width: 32,
            heads: 4,
            depth: 2,
            components: 16,
            max_count: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Parse {
        line,
        message: format!("bad value {value:?} for {key}: {e}"),
    })
}

impl TrainConfig {
    pub const KEYS: [&'static str; 17] = [
        "epochs_max",
        "batch_size",
        "lr",
        "weight_decay",
        "clip_norm",
        "early_stop_samples",
        "early_stop_patience",
        "eval_metric",
        "seed",
        "eval_every",
        "steps",
        "schedule",
        "width",
        "heads",
        "depth",
        "components",
        "max_count",
    ];

    /// Set one key from its text value; `line` is used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "epochs_max" => self.epochs_max = parse_value(key, value, line)?,
            "batch_size" => self.batch_size = parse_value(key, value, line)?,
            "lr" => self.lr = parse_value(key, value, line)?,
            "weight_decay" => self.weight_decay = parse_value(key, value, line)?,
            "clip_norm" => self.clip_norm = parse_value(key, value, line)?,
            "early_stop_samples" => self.early_stop_samples = parse_value(key, value, line)?,
            "early_stop_patience" => self.early_stop_patience = parse_value(key, value, line)?,
            "eval_metric" => self.eval_metric = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            "eval_every" => self.eval_every = parse_value(key, value, line)?,
            "steps" => self.steps = parse_value(key, value, line)?,
            "schedule" => self.schedule = parse_value(key, value, line)?,
            "width" => self.width = parse_value(key, value, line)?,
            "heads" => self.heads = parse_value(key, value, line)?,
            "depth" => self.depth = parse_value(key, value, line)?,
            "components" => self.components = parse_value(key, value, line)?,
            "max_count" => self.max_count = parse_value(key, value, line)?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Parse `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; repeated keys are rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: "expected key = value".into(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key {key:?}"),
                });
            }
            cfg.set(key, value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let values = [
            self.epochs_max.to_string(),
            self.batch_size.to_string(),
            self.lr.to_string(),
            self.weight_decay.to_string(),
            self.clip_norm.to_string(),
            self.early_stop_samples.to_string(),
            self.early_stop_patience.to_string(),
            self.eval_metric.to_string(),
            self.seed.to_string(),
            self.eval_every.to_string(),
            self.steps.to_string(),
            self.schedule.to_string(),
            self.width.to_string(),
            self.heads.to_string(),
            self.depth.to_string(),
            self.components.to_string(),
            self.max_count.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs_max", self.epochs_max),
            ("batch_size", self.batch_size),
            ("early_stop_samples", self.early_stop_samples),
            ("early_stop_patience", self.early_stop_patience),
            ("width", self.width),
            ("heads", self.heads),
            ("depth", self.depth),
            ("components", self.components),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.steps < 2 {
            return Err(Error::InvalidArgument("steps must be at least 2".into()));
        }
        for (name, v) in [("lr", self.lr), ("clip_norm", self.clip_norm)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(
                "weight_decay must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }

    fn eval_interval(&self, train_len: usize) -> usize {
        match self.eval_every {
            0 if train_len > 1000 => 10,
            0 => 1,
            n => n,
        }
    }
}

/// Uniform draw from {1..T}.
pub fn draw_step<R: rand::Rng + ?Sized>(steps: usize, rng: &mut R) -> usize {
    rng.random_range(1..=steps)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean BCE term per training example over the epoch.
    pub bce: f64,
    /// Mean NLL term per training example over the epoch.
    pub nll: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,bce,nll,val_metric";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let val = r.val_metric.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.bce, r.nll, val));
        }
        out
    }
}

/// The best checkpoint by validation score, the last one, and the history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: NeuralDenoiser,
    pub last: NeuralDenoiser,
    pub history: TrainHistory,
}

// Stream children reserved for the two uses of randomness.
const STREAM_BATCHES: u64 = 0;
const STREAM_EVAL: u64 = 1;

/// One optimizer step on `batch`. Each element's graph is built and
/// differentiated independently (possibly in parallel) and the gradients are
/// summed in index order, then averaged.
pub fn train_step(
    model: &mut NeuralDenoiser,
    batch: &[&PointSet],
    schedule: &DiffusionSchedule,
    adam: &AdamConfig,
    stream: SeedStream,
) -> Result<(f64, f64)> {
    let per_element: Vec<Result<_>> = batch
        .par_iter()
        .enumerate()
        .map(|(b, x0)| {
            let mut rng = stream.child(b as u64).rng();
            let t = draw_step(schedule.steps(), &mut rng);
            let state = forward_marginal(x0, t, schedule, &mut rng)?;
            let (loss, grads) = model.loss_and_gradients(x0, &state)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {} (bce {}, nll {}) at batch element {b}, t = {t}, |X0| = {}",
                    loss.total,
                    loss.bce,
                    loss.nll,
                    x0.len()
                )));
            }
            Ok((loss, grads))
        })
        .collect();
    let mut total = Gradients::zeros_like(&model.store);
    let (mut bce, mut nll) = (0.0, 0.0);
    for r in per_element {
        let (loss, grads) = r?;
        bce += loss.bce;
        nll += loss.nll;
        total.add(&grads);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    adam_step(&mut model.store, &total, adam)?;
    Ok((bce, nll))
}

/// Score `model` by drawing `config.early_stop_samples` samples and comparing
/// them with `val`.
pub fn validation_score(
    model: &NeuralDenoiser,
    val: &[PointSet],
    schedule: &DiffusionSchedule,
    metric: EvalMetric,
    num: usize,
    stream: SeedStream,
) -> Result<f64> {
    let tasks = vec![SampleTask::Unconditional; num];
    let workers = rayon::current_num_threads().max(1);
    let samples = sample_batch(model, schedule, &tasks, stream, workers)?;
    match metric {
        EvalMetric::SlWasserstein => sl_wasserstein(&counts(&samples), &counts(val)),
        EvalMetric::CdMmd => Ok(mmd(&samples, val, SetDistance::Cd, None)?.value),
    }
}

/// Train `model` on `train`, early-stopping on `val`.
///
/// `observer` sees every epoch record as it is produced.
pub fn train(
    train: &[PointSet],
    val: &[PointSet],
    config: &TrainConfig,
    schedule: &DiffusionSchedule,
    model: NeuralDenoiser,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput(
            "training and validation splits must be nonempty".into(),
        ));
    }
    let domain = model.domain().clone();
    for x in train.iter().chain(val) {
        if **x.domain() != *domain {
            return Err(Error::DomainMismatch(
                "all training and validation sets must live on the model's domain".into(),
            ));
        }
    }
    if config.eval_metric == EvalMetric::CdMmd && domain.ordered_axis().is_none() {
        return Err(Error::InvalidDomain(
            "cd_mmd early stopping requires an ordered axis".into(),
        ));
    }
    if schedule.steps() != model.steps() {
        return Err(Error::InvalidArgument(format!(
            "model built for {} steps, schedule has {}",
            model.steps(),
            schedule.steps()
        )));
    }

    let root = SeedStream::new(config.seed);
    let batches = root.child(STREAM_BATCHES);
    let evals = root.child(STREAM_EVAL);
    let adam = config.adam();
    let every = config.eval_interval(train.len());

    let mut model = model;
    let mut best: Option<(f64, ParameterStore, usize)> = None;
    let mut history = TrainHistory::default();
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;

    for epoch in 0..config.epochs_max {
        let mut shuffle_rng = batches.child(epoch as u64).rng();
        order.shuffle(&mut shuffle_rng);
        let (mut bce, mut nll) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PointSet> = chunk.iter().map(|&i| &train[i]).collect();
            let stream = batches.child(u64::MAX).child(step);
            let (b, n) = train_step(&mut model, &batch, schedule, &adam, stream)?;
            bce += b;
            nll += n;
            step += 1;
        }
        let m = train.len() as f64;
        let evaluate = (epoch + 1) % every == 0 || epoch + 1 == config.epochs_max;
        let val_metric = if evaluate {
            let score = validation_score(
                &model,
                val,
                schedule,
                config.eval_metric,
                config.early_stop_samples,
                evals.child(epoch as u64),
            )?;
            if !score.is_finite() {
                return Err(Error::NonFinite(format!(
                    "validation score {score} at epoch {epoch}"
                )));
            }
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, model.store.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
            }
            Some(score)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            bce: bce / m,
            nll: nll / m,
            val_metric,
        };
        observer(&record);
        history.epochs.push(record);
        if since_best >= config.early_stop_patience {
            history.stopped_early = true;
            break;
        }
    }

    let (score, store, epoch) = best.expect("the final epoch is always evaluated");
    history.best_epoch = Some(epoch);
    history.best_score = Some(score);
    let mut best_model = model.clone();
    best_model.store = store;
    Ok(TrainOutcome {
        best: best_model,
        last: model,
        history,
    })
}
