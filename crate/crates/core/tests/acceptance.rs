//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::Instant;

use chrono::{NaiveDate, NaiveTime, TimeDelta};
use congestion_core::evaluation::{daily_rmse, evaluate, fraction_better, EvalPlan, Persistence, RmseRecord};
use congestion_core::ingestion::{context_scalars, ingest, parse_raw_str, read_dataset, write_dataset, Dataset, SynthSetup};
use congestion_core::models::{load, save, AnyModel, CnnPredictor, ContextMode, ModelKind};
use congestion_core::nn::{loss_forward, weight, LossBatch, LossKind};
use congestion_core::sim::{compare_with_batch, run, SimConfig};
use congestion_core::training::{split, train, Split, TrainConfig};
use congestion_core::{NetworkSpec, PointSnapshot, SnapshotConfig, SnapshotInput, TrafficCondition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn shape_fidelity() -> Outcome {
    let m = CnnPredictor::<f64>::zeros(ContextMode::None);
    let shapes = m.layer_shapes();
    let want: Vec<Vec<usize>> = vec![vec![9, 5], vec![7, 3, 64], vec![5, 1, 64], vec![320], vec![32], vec![1]];
    let concat = CnnPredictor::<f64>::zeros(ContextMode::Concat).layer_shapes()[3][0];
    outcome(shapes == want && concat == 322, format!("chain {shapes:?}, fc1 inputs with context {concat}"))
}

fn gradient_correctness() -> Outcome {
    use common::gradients;
    let groups = [
        ("conv", gradients::conv_layer()),
        ("dense", gradients::dense_layer()),
        ("lstm bptt", gradients::lstm_cell_bptt()),
        ("loss", gradients::loss()),
        ("whole models", gradients::whole_models()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, w) in &groups {
        pass &= w.checked > 0 && w.error < 1e-5;
        parts.push(format!("{name} {:.1e}", w.error));
    }
    outcome(pass, format!("max rel err over {} seeds: {}", gradients::SEEDS, parts.join(", ")))
}

fn loss_fidelity() -> Outcome {
    let strict = |x: f64, y: f64| loss_forward(LossKind::Strict, &LossBatch::new(&[x], &[y]).unwrap());
    let a = strict(0.8, 0.9);
    let b = strict(0.5, 0.4);
    // Y = 0.5 is penalized, the next representable value above is not.
    let above = f64::from_bits(0.5f64.to_bits() + 1);
    let switch = weight(0.5) == 1.0 && weight(above) == 0.0;
    let at = strict(0.3, 0.5);
    let want_at = (0.04f64 + 0.2).sqrt();
    let two = loss_forward(LossKind::Strict, &LossBatch::new(&[0.8, 0.5], &[0.9, 0.4]).unwrap());
    let want_two = (0.01f64 + 0.01 + 0.1).sqrt() / 2.0;
    let pass = (a - 0.1).abs() < 1e-12
        && (b - 0.11f64.sqrt()).abs() < 1e-12
        && (at - want_at).abs() < 1e-12
        && (two - want_two).abs() < 1e-12
        && switch;
    outcome(pass, format!("{a:.12}, {b:.12}, two-element {two:.12}, switch at 0.5 {switch}"))
}

fn sample_snapshot() -> Outcome {
    const SAMPLE: [[f64; 5]; 9] = [
        [0.5, 0.6, 0.4, 0.5, 0.3],
        [0.4, 0.7, 0.4, 0.8, 0.5],
        [0.2, 0.9, 0.3, 0.3, 0.4],
        [0.4, 0.7, 0.5, 0.6, 0.5],
        [0.3, 0.8, 0.1, 0.8, 0.9],
        [0.5, 0.6, 0.5, 0.4, 0.3],
        [0.4, 0.7, 0.3, 0.9, 0.5],
        [0.5, 0.6, 0.5, 0.4, 0.3],
        [0.4, 0.7, 0.3, 0.9, 0.5],
    ];
    let t0 = NaiveDate::from_ymd_opt(2016, 8, 17).unwrap().and_hms_opt(14, 0, 0).unwrap();
    let mut text = String::new();
    for k in 0..9 {
        text.push_str(&format!("#point,D{k},{k},1.0\n"));
    }
    for (k, row) in SAMPLE.iter().enumerate() {
        for (j, v) in row.iter().chain(std::iter::once(&0.7)).enumerate() {
            let ts = t0 + TimeDelta::minutes(5 * j as i64);
            text.push_str(&format!("D{k},{},{v}\n", ts.format("%Y-%m-%dT%H:%M")));
        }
    }
    let ds = ingest(&parse_raw_str(&text).unwrap(), &SnapshotConfig::default()).unwrap();
    let snap = &ds.snapshots[0];
    let cells = SAMPLE
        .iter()
        .enumerate()
        .all(|(r, row)| row.iter().enumerate().all(|(c, v)| snap.input.get(r, c).value().to_bits() == v.to_bits()));
    let context = (0..30).all(|m| context_scalars(t0 + TimeDelta::minutes(m)) == (0.5, 28.0 / 47.0));
    let pass = ds.len() == 1 && cells && context && snap.input.day_value == 0.5 && format!("{:.1}", snap.input.time_value) == "0.6";
    outcome(pass, format!("9x5 cells bit-exact {cells}, context ({}, {:.4})", snap.input.day_value, snap.input.time_value))
}

fn mean(recs: &[RmseRecord]) -> f64 {
    recs.iter().map(|r| r.rmse).sum::<f64>() / recs.len() as f64
}

struct Benchmark {
    dataset: Dataset,
    trained: Vec<AnyModel<f64>>,
}

/// Epoch counts and learning rates tuned for the bundled data; the
/// library defaults are far slower to converge at this scale.
fn benchmark_configs() -> [TrainConfig; 2] {
    let base = TrainConfig { seed: 1, split: Split::ByPoint { train: 20, test: 30 }, ..Default::default() };
    [
        TrainConfig { model: ModelKind::Cnn, epochs: 4, lr: 0.05, ..base.clone() },
        TrainConfig { model: ModelKind::Lstm, epochs: 8, lr: 2.0, ..base },
    ]
}

fn generalization(bench: &mut Option<Benchmark>) -> Outcome {
    let ds = SynthSetup::bundled().dataset(1).unwrap();
    let [cnn_cfg, lstm_cfg] = benchmark_configs();
    let (_, test) = split(&ds, cnn_cfg.split).unwrap();
    let base = daily_rmse(&Persistence::new(&ds.config), &test).unwrap();
    let base_mean = mean(&base);
    let mut pass = true;
    let mut parts = vec![format!("persistence {base_mean:.4}")];
    let mut trained = Vec::new();
    for cfg in [cnn_cfg, lstm_cfg] {
        let started = Instant::now();
        let (model, _) = train::<f64>(&ds, &cfg).unwrap();
        let recs = daily_rmse(&model, &test).unwrap();
        let better = fraction_better(&recs, &base);
        let m = mean(&recs);
        pass &= better >= 0.8 && m < 0.5 * base_mean;
        parts.push(format!(
            "{} {m:.4} ({:.2}x, better on {:.1}% of {} cells, {:.0}s)",
            cfg.model,
            m / base_mean,
            100.0 * better,
            recs.len(),
            started.elapsed().as_secs_f64()
        ));
        trained.push(model);
    }
    *bench = Some(Benchmark { dataset: ds, trained });
    outcome(pass, parts.join("; "))
}

fn equivalence(bench: &Option<Benchmark>) -> Outcome {
    let setup = SynthSetup::bundled();
    let (spec, series) = setup.generate(1).unwrap();
    let owned;
    let (ds, models) = match bench {
        Some(b) => (&b.dataset, b.trained.iter().collect::<Vec<_>>()),
        None => {
            owned = (
                setup.dataset(1).unwrap(),
                AnyModel::<f64>::init(ModelKind::Cnn, ContextMode::None, &mut ChaCha8Rng::seed_from_u64(1)),
            );
            (&owned.0, vec![&owned.1])
        }
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for m in models {
        let log = run(&series, &spec, &setup.snapshot, m, &SimConfig { ticks: Some(500), drops: vec![] }).unwrap();
        let eq = compare_with_batch(&log, ds, m).unwrap();
        pass &= log.ticks == 500 && eq.compared > 0 && eq.mismatches == 0 && eq.unmatched == 0;
        parts.push(format!("{}: {} compared, {} mismatches", m.kind(), eq.compared, eq.mismatches));
    }
    outcome(pass, format!("500 ticks; {}", parts.join("; ")))
}

fn determinism() -> Outcome {
    let setup = SynthSetup { days: 3, points: 12, ..SynthSetup::bundled() };
    let ds = setup.dataset(7).unwrap();
    let cfg = TrainConfig { model: ModelKind::Cnn, epochs: 2, lr: 0.05, seed: 7, split: Split::ByPoint { train: 2, test: 2 }, ..Default::default() };
    let (a, mut ra) = train::<f64>(&ds, &cfg).unwrap();
    let (b, mut rb) = train::<f64>(&ds, &cfg).unwrap();
    (ra.wall_time_secs, rb.wall_time_secs) = (0.0, 0.0);
    let training = a == b && ra == rb;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut predictions = 0;
    for kind in [ModelKind::Cnn, ModelKind::Lstm] {
        let m = AnyModel::<f64>::init(kind, ContextMode::None, &mut rng);
        let back = AnyModel::<f64>::from_params(&load(&save(&m.to_params(3, ""))).unwrap()).unwrap();
        for _ in 0..100 {
            let values = (0..45).map(|_| TrafficCondition::new(rng.random_range(0.0..1.0)).unwrap()).collect();
            let input = SnapshotInput::new(9, 5, values, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap();
            if m.predict(&input).unwrap().to_bits() == back.predict(&input).unwrap().to_bits() {
                predictions += 1;
            }
        }
    }
    let dataset = read_dataset(&write_dataset(&ds).unwrap()).unwrap() == ds;
    outcome(
        training && predictions == 200 && dataset,
        format!("training bit-identical {training}, {predictions}/200 predictions bit-exact after reload, dataset round trip {dataset}"),
    )
}

fn eligible_points() -> Outcome {
    let spec = NetworkSpec::uniform(58, 65.0).unwrap();
    let cfg = SnapshotConfig::default();
    let n = spec.eligible_positions(&cfg).len();
    let ds = SynthSetup { days: 1, ..SynthSetup::bundled() }.dataset(1).unwrap();
    let centers: std::collections::BTreeSet<_> = ds.snapshots.iter().map(|s| s.point.order_index).collect();
    outcome(n == 50 && centers.len() == 50, format!("{n} eligible of 58, {} distinct snapshot centers", centers.len()))
}

fn rush_hour(bench: &Option<Benchmark>) -> Outcome {
    let setup = SynthSetup { days: 14, ..SynthSetup::bundled() };
    let plan = EvalPlan {
        point: None,
        date: None,
        slots: vec![NaiveTime::from_hms_opt(8, 0, 0).unwrap(), NaiveTime::from_hms_opt(12, 0, 0).unwrap()],
    };
    let mut wins = 0;
    let mut parts = Vec::new();
    let mut series_ok = true;
    for seed in 1..=5u64 {
        let ds = setup.dataset(seed).unwrap();
        let cfg = TrainConfig { model: ModelKind::Lstm, epochs: 8, lr: 2.0, seed, ..Default::default() };
        let (model, _) = train::<f64>(&ds, &cfg).unwrap();
        let (_, test) = split(&ds, cfg.split).unwrap();
        let in_dip = |s: &PointSnapshot| setup.in_dip(s.point.order_index, s.target_time);
        let report = evaluate(&model, &test, &plan, Some(&in_dip)).unwrap();
        series_ok &= report.series.len() == 3 && report.series.iter().all(|s| !s.entries.is_empty());
        let c = report.contrast.unwrap();
        if c.error_grows_in_dips() {
            wins += 1;
        }
        parts.push(format!("{:.3}/{:.3}", c.dip_mae, c.flat_mae));
    }
    if let Some(b) = bench {
        let (_, test) = split(&b.dataset, Split::ByPoint { train: 20, test: 30 }).unwrap();
        let full = SynthSetup::bundled();
        let in_dip = |s: &PointSnapshot| full.in_dip(s.point.order_index, s.target_time);
        let c = evaluate(&b.trained[0], &test, &plan, Some(&in_dip)).unwrap().contrast.unwrap();
        parts.push(format!("benchmark cnn {:.3}/{:.3}", c.dip_mae, c.flat_mae));
    }
    outcome(
        wins >= 3 && series_ok,
        format!("dip/flat MAE per seed {}; dip >= flat on {wins}/5 seeds", parts.join(", ")),
    )
}

fn main() {
    let mut bench = None;
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Option<Benchmark>) -> Outcome>)> = vec![
        ("shape fidelity", Box::new(|_| shape_fidelity())),
        ("gradient correctness", Box::new(|_| gradient_correctness())),
        ("loss formula", Box::new(|_| loss_fidelity())),
        ("sample snapshot", Box::new(|_| sample_snapshot())),
        ("generalization benchmark", Box::new(generalization)),
        ("centralized/decentralized equivalence", Box::new(|b| equivalence(b))),
        ("determinism and round trips", Box::new(|_| determinism())),
        ("eligible points", Box::new(|_| eligible_points())),
        ("rush-hour behavior", Box::new(|b| rush_hour(b))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut bench)))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} [{:.1}s] {}",
            k + 1,
            if result.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
