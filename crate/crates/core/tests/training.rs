use std::collections::BTreeSet;

use chrono::NaiveDate;
use congestion_core::ingestion::{window, Dataset, SynthSetup, SyntheticProfile};
use congestion_core::models::{load, AnyModel, CnnPredictor, ContextMode, ModelKind};
use congestion_core::rng::{SeedStreams, STREAM_INIT};
use congestion_core::training::{fit, split, train, Split, TrainConfig, TrainError};
use congestion_core::{NetworkSpec, SnapshotConfig};

fn setup(points: usize, days: usize, profile: SyntheticProfile) -> SynthSetup {
    SynthSetup {
        points,
        speed_limit: 65.0,
        days,
        start_date: NaiveDate::from_ymd_opt(2016, 8, 15).unwrap(),
        snapshot: SnapshotConfig { step_minutes: 30, ..Default::default() },
        profile,
    }
}

fn flat(noise: f64) -> SyntheticProfile {
    SyntheticProfile {
        base_speed_ratio: 0.8,
        rush_hour_dips: vec![],
        noise_std: noise,
        local_noise_std: 0.0,
        congestion_noise_gain: 0.0,
        propagation_lag_steps: 1,
    }
}

fn centers(ds: &Dataset) -> BTreeSet<usize> {
    ds.snapshots.iter().map(|s| s.point.order_index).collect()
}

#[test]
fn by_point_split_takes_first_twenty_and_last_thirty_eligible() {
    let ds = setup(58, 1, flat(0.0)).dataset(0).unwrap();
    let (tr, te) = split(&ds, Split::ByPoint { train: 20, test: 30 }).unwrap();
    assert_eq!(centers(&tr), (4..=23).collect());
    assert_eq!(centers(&te), (24..=53).collect());
    assert_eq!(tr.len() + te.len(), ds.len());
}

#[test]
fn by_time_split_partitions_days() {
    let ds = setup(9, 60, flat(0.0)).dataset(0).unwrap();
    let (tr, te) = split(&ds, Split::ByTime { train: 48, test: 12 }).unwrap();
    let days = |d: &Dataset| d.snapshots.iter().map(|s| s.timestamp.date()).collect::<BTreeSet<_>>();
    assert_eq!(days(&tr).len(), 48);
    assert_eq!(days(&te).len(), 12);
    assert!(days(&tr).iter().max() < days(&te).iter().min());
}

#[test]
fn degenerate_splits_are_rejected() {
    let ds = setup(58, 1, flat(0.0)).dataset(0).unwrap();
    for s in [
        Split::ByPoint { train: 50, test: 0 },
        Split::ByPoint { train: 0, test: 50 },
        Split::ByPoint { train: 30, test: 30 },
        Split::ByTime { train: 1, test: 1 },
    ] {
        assert!(matches!(split(&ds, s), Err(TrainError::EmptySplit(_))), "{s}");
    }
}

fn small_cfg(model: ModelKind, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig { model, epochs, lr, seed: 11, split: Split::ByPoint { train: 2, test: 2 }, ..Default::default() }
}

#[test]
fn constant_traffic_is_learned() {
    let ds = setup(12, 2, flat(0.0)).dataset(0).unwrap();
    for (kind, lr) in [(ModelKind::Cnn, 0.05), (ModelKind::Lstm, 2.0)] {
        let (_, report) = train::<f64>(&ds, &small_cfg(kind, 30, lr)).unwrap();
        assert_eq!(report.epoch_losses.len(), 30);
        let last = *report.epoch_losses.last().unwrap();
        assert!(last < 0.01, "{kind}: final loss {last}");
    }
}

#[test]
fn fixed_seed_training_is_bit_reproducible() {
    let ds = setup(12, 3, flat(0.05)).dataset(4).unwrap();
    let cfg = small_cfg(ModelKind::Cnn, 2, 0.05);
    let (a, mut ra) = train::<f64>(&ds, &cfg).unwrap();
    let (b, mut rb) = train::<f64>(&ds, &cfg).unwrap();
    (ra.wall_time_secs, rb.wall_time_secs) = (0.0, 0.0);
    assert_eq!(ra, rb);
    assert_eq!(a, b);
    let (c, _) = train::<f64>(&ds, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let ds = setup(12, 2, flat(0.05)).dataset(1).unwrap();
    let cfg = small_cfg(ModelKind::Lstm, 2, 0.0);
    let (m, _) = train::<f64>(&ds, &cfg).unwrap();
    let init = AnyModel::<f64>::init(ModelKind::Lstm, ContextMode::None, &mut SeedStreams::new(cfg.seed).rng(STREAM_INIT));
    assert_eq!(m, init);
}

#[test]
fn loss_trends_down_on_synthetic_traffic() {
    let ds = SynthSetup { days: 4, ..SynthSetup::bundled() }.dataset(2).unwrap();
    let cfg = TrainConfig { model: ModelKind::Lstm, epochs: 10, lr: 2.0, seed: 2, ..Default::default() };
    let (_, r) = train::<f64>(&ds, &cfg).unwrap();
    let first: f64 = r.epoch_losses[..5].iter().sum();
    let last: f64 = r.epoch_losses[5..].iter().sum();
    assert!(last < first, "{:?}", r.epoch_losses);
}

#[test]
fn report_carries_disjoint_provenance() {
    let ds = setup(12, 2, flat(0.05)).dataset(1).unwrap();
    let (_, r) = train::<f64>(&ds, &small_cfg(ModelKind::Lstm, 1, 1.0)).unwrap();
    let tr: BTreeSet<_> = r.train_points.iter().collect();
    assert!(r.test_points.iter().all(|p| !tr.contains(p)));
    assert_eq!(r.train_points, ["P004", "P005"]);
    assert_eq!(r.test_points, ["P006", "P007"]);
}

#[test]
fn checkpoints_are_written_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let ds = setup(12, 2, flat(0.05)).dataset(1).unwrap();
    let cfg = TrainConfig { checkpoint_dir: Some(dir.path().to_path_buf()), ..small_cfg(ModelKind::Cnn, 3, 0.05) };
    let (m, r) = train::<f64>(&ds, &cfg).unwrap();
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 3);
    let last = load(&std::fs::read(r.checkpoint.unwrap()).unwrap()).unwrap();
    assert_eq!(AnyModel::<f64>::from_params(&last).unwrap(), m);
}

#[test]
fn non_finite_gradients_report_their_position() {
    let spec = NetworkSpec::uniform(9, 65.0).unwrap();
    let cfg = SnapshotConfig { step_minutes: 30, ..Default::default() };
    let series = setup(9, 1, flat(0.05)).generate(3).unwrap().1;
    let ds = window(&series, &spec, &cfg).unwrap();
    let mut m = CnnPredictor::<f64>::zeros(ContextMode::None);
    m.fc2.bias.data_mut()[0] = f64::NAN;
    let err = fit(&mut m, &ds, &TrainConfig::default(), |_, _: &CnnPredictor<f64>| Ok(())).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteGradient { epoch: 0, batch: 0, .. }), "{err}");
    assert!(m.fc1.weights.data().iter().all(|&w| w == 0.0), "aborted step must not touch parameters");
}
