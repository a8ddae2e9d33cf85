//! Dataset splits and the mini-batch SGD training loop.
//!
//! Per-sample forward and backward passes may run in parallel, but batch
//! gradients are always summed in batch order, so a fixed seed gives
//! bit-identical parameters regardless of thread count.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::ingestion::Dataset;
use crate::models::{save, AnyModel, ContextMode, ModelError, ModelKind, Network};
use crate::nn::{loss_backward, loss_forward, sgd_step, LossBatch, LossKind, NnError, Tensor};
use crate::rng::{SeedStreams, STREAM_INIT, STREAM_SHUFFLE};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch}, batch {batch}: {source}")]
    NonFiniteGradient { epoch: usize, batch: usize, source: NnError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
}

/// How snapshots are divided into disjoint train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Split {
    /// First `train` eligible points train, last `test` eligible points test.
    ByPoint { train: usize, test: usize },
    /// First `train` calendar days train, the following `test` days test.
    ByTime { train: usize, test: usize },
}

impl std::str::FromStr for Split {
    type Err = String;
    /// `by_point:20:30` or `by_time:48:12`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("bad split `{s}` (expected by_point:<train>:<test> or by_time:<train>:<test>)");
        if parts.len() != 3 {
            return Err(bad());
        }
        let train = parts[1].parse().map_err(|_| bad())?;
        let test = parts[2].parse().map_err(|_| bad())?;
        match parts[0] {
            "by_point" => Ok(Split::ByPoint { train, test }),
            "by_time" => Ok(Split::ByTime { train, test }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Split {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Split> for String {
    fn from(s: Split) -> String {
        s.to_string()
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::ByPoint { train, test } => write!(f, "by_point:{train}:{test}"),
            Split::ByTime { train, test } => write!(f, "by_time:{train}:{test}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub context_mode: ContextMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Cnn,
            context_mode: ContextMode::None,
            epochs: 30,
            batch_size: 32,
            lr: 0.01,
            seed: 0,
            loss: LossKind::Strict,
            split: Split::ByPoint { train: 20, test: 30 },
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.model == ModelKind::Lstm && self.context_mode != ContextMode::None {
            return bad("context_mode = concat applies to the cnn only");
        }
        Ok(())
    }

    /// TOML echo of the resolved configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss for each epoch.
    pub epoch_losses: Vec<f64>,
    /// Plain RMSE over the test split, when it is non-empty.
    pub final_test_rmse: Option<f64>,
    pub train_snapshots: usize,
    pub test_snapshots: usize,
    pub skipped_batches: usize,
    pub train_points: Vec<String>,
    pub test_points: Vec<String>,
    pub train_days: Vec<NaiveDate>,
    pub test_days: Vec<NaiveDate>,
    pub checkpoint: Option<PathBuf>,
    pub config: TrainConfig,
    /// Excluded from reproducible report files.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

fn points_of(ds: &Dataset) -> Vec<String> {
    let set: BTreeSet<_> = ds.snapshots.iter().map(|s| s.point.clone()).collect();
    set.into_iter().map(|p| p.id.to_string()).collect()
}

fn days_of(ds: &Dataset) -> Vec<NaiveDate> {
    let set: BTreeSet<_> = ds.snapshots.iter().map(|s| s.timestamp.date()).collect();
    set.into_iter().collect()
}

/// Divides `ds` into disjoint train and test datasets.
pub fn split(ds: &Dataset, split: Split) -> Result<(Dataset, Dataset), TrainError> {
    let (n_train, n_test) = match split {
        Split::ByPoint { train, test } | Split::ByTime { train, test } => (train, test),
    };
    if n_train == 0 || n_test == 0 {
        return Err(TrainError::EmptySplit(format!("{split} leaves one side empty")));
    }
    match split {
        Split::ByPoint { .. } => {
            let points: Vec<_> = ds
                .snapshots
                .iter()
                .map(|s| s.point.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if n_train + n_test > points.len() {
                return Err(TrainError::EmptySplit(format!(
                    "{split} needs {} points, dataset has {}",
                    n_train + n_test,
                    points.len()
                )));
            }
            let train: BTreeSet<_> = points[..n_train].iter().cloned().collect();
            let test: BTreeSet<_> = points[points.len() - n_test..].iter().cloned().collect();
            Ok((ds.filter(|s| train.contains(&s.point)), ds.filter(|s| test.contains(&s.point))))
        }
        Split::ByTime { .. } => {
            let days = days_of(ds);
            if n_train + n_test > days.len() {
                return Err(TrainError::EmptySplit(format!(
                    "{split} needs {} days, dataset has {}",
                    n_train + n_test,
                    days.len()
                )));
            }
            let train: BTreeSet<_> = days[..n_train].iter().copied().collect();
            let test: BTreeSet<_> = days[n_train..n_train + n_test].iter().copied().collect();
            Ok((
                ds.filter(|s| train.contains(&s.timestamp.date())),
                ds.filter(|s| test.contains(&s.timestamp.date())),
            ))
        }
    }
}

/// Trains `model` in place on every snapshot of `train`; returns per-epoch
/// mean losses and the number of skipped zero-loss batches. `on_epoch` sees
/// the model after each epoch.
pub fn fit<T, N, F>(model: &mut N, train: &Dataset, cfg: &TrainConfig, mut on_epoch: F) -> Result<(Vec<f64>, usize), TrainError>
where
    T: Scalar,
    N: Network<T>,
    F: FnMut(usize, &N) -> Result<(), TrainError>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training set has no snapshots".into()));
    }
    let lr = T::of(cfg.lr);
    let snaps = &train.snapshots;
    let mut rng = SeedStreams::new(cfg.seed).rng(STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..snaps.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let forward = batch
                .par_iter()
                .map(|&i| model.forward(&snaps[i].input))
                .collect::<Result<Vec<_>, _>>()?;
            let preds: Vec<T> = forward.iter().map(|(y, _)| *y).collect();
            let targets: Vec<T> = batch.iter().map(|&i| T::of(snaps[i].target.value())).collect();
            let lb = LossBatch::new(&preds, &targets)?;
            loss_sum += loss_forward(cfg.loss, &lb).to_f64_lossy();
            batches += 1;
            let dloss = match loss_backward(cfg.loss, &lb) {
                Ok(g) => g,
                Err(NnError::ZeroLoss) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let per_sample = forward
                .par_iter()
                .zip(dloss.par_iter())
                .map(|((_, cache), &g)| model.backward(cache, g))
                .collect::<Result<Vec<_>, _>>()?;
            let mut iter = per_sample.into_iter();
            let mut total: Vec<Tensor<T>> = iter.next().expect("batch is non-empty");
            for g in iter {
                for (acc, gi) in total.iter_mut().zip(&g) {
                    acc.add_assign(gi);
                }
            }
            sgd_step(&mut model.params_mut(), &total, lr).map_err(|source| match source {
                NnError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { epoch, batch: b, source },
                other => TrainError::Nn(other),
            })?;
        }
        epoch_losses.push(loss_sum / batches.max(1) as f64);
        log::info!("epoch {}/{}: mean batch loss {:.6}", epoch + 1, cfg.epochs, epoch_losses[epoch]);
        on_epoch(epoch, model)?;
    }
    Ok((epoch_losses, skipped))
}

/// Plain RMSE of `model` over every snapshot of `ds`.
pub fn rmse<T: Scalar, N: Network<T>>(model: &N, ds: &Dataset) -> Result<f64, ModelError> {
    let sq: Vec<f64> = ds
        .snapshots
        .par_iter()
        .map(|s| {
            let d = model.predict(&s.input)?.to_f64_lossy() - s.target.value();
            Ok(d * d)
        })
        .collect::<Result<_, ModelError>>()?;
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

fn run<T: Scalar, N: Network<T>>(
    mut model: N,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(N, Vec<f64>, usize, Option<PathBuf>, Option<f64>), TrainError> {
    let echo = cfg.echo();
    let mut last_checkpoint = None;
    let (losses, skipped) = fit(&mut model, train_ds, cfg, |epoch, m| {
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("epoch_{:03}.tfm", epoch + 1));
            write_atomic(&path, &save(&m.to_params(cfg.seed, &echo)))?;
            last_checkpoint = Some(path);
        }
        Ok(())
    })?;
    let test_rmse = if test_ds.is_empty() { None } else { Some(rmse(&model, test_ds)?) };
    Ok((model, losses, skipped, last_checkpoint, test_rmse))
}

/// Splits `ds`, initializes the configured model from the seed, trains it on
/// the train side and scores it on the test side.
pub fn train<T: Scalar>(ds: &Dataset, cfg: &TrainConfig) -> Result<(AnyModel<T>, TrainReport), TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let (train_ds, test_ds) = split(ds, cfg.split)?;
    let mut init_rng = SeedStreams::new(cfg.seed).rng(STREAM_INIT);
    let initial = AnyModel::<T>::init(cfg.model, cfg.context_mode, &mut init_rng);
    let (model, losses, skipped, checkpoint, test_rmse) = match initial {
        AnyModel::Cnn(m) => {
            let (m, l, s, c, r) = run(m, &train_ds, &test_ds, cfg)?;
            (AnyModel::Cnn(m), l, s, c, r)
        }
        AnyModel::Lstm(m) => {
            let (m, l, s, c, r) = run(m, &train_ds, &test_ds, cfg)?;
            (AnyModel::Lstm(m), l, s, c, r)
        }
    };
    let report = TrainReport {
        epoch_losses: losses,
        final_test_rmse: test_rmse,
        train_snapshots: train_ds.len(),
        test_snapshots: test_ds.len(),
        skipped_batches: skipped,
        train_points: points_of(&train_ds),
        test_points: points_of(&test_ds),
        train_days: days_of(&train_ds),
        test_days: days_of(&test_ds),
        checkpoint,
        config: cfg.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
