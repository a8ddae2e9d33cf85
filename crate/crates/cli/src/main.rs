mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, NaiveTime};
use clap::{Parser, Subcommand};
use serde::Serialize;

use congestion_core::evaluation::{
    evaluate, fraction_better, write_boxplot_csv, write_daily_rmse_csv, write_series_csv, EvalPlan, EvalReport,
    Persistence, SlotContrast, QUARTILE_METHOD,
};
use congestion_core::fsutil::write_atomic;
use congestion_core::ingestion::{ingest, parse_raw, read_dataset, write_dataset, write_raw, Dataset, RawData, SynthSetup};
use congestion_core::models::{load, save, ContextMode, ModelKind, SnapshotPredictor, MODEL_FORMAT_VERSION};
use congestion_core::nn::LossKind;
use congestion_core::sim::{compare_with_batch, run as run_sim, SimConfig};
use congestion_core::training::{split, train, Split, TrainConfig};
use congestion_core::{Model, SnapshotConfig, VERSION};

use config::{resolve, Flags};

#[derive(Parser)]
#[command(name = "congestion", version, about = "Decentralized short-term traffic congestion prediction")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a detector speed file, clean it and cut snapshots.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset from a traffic profile.
    Synth(SynthArgs),
    /// Train a CNN or LSTM predictor.
    Train(TrainArgs),
    /// Write daily RMSE, box-plot, day-curve and slot-series reports.
    Evaluate(EvaluateArgs),
    /// Replay a dataset through one node per network point.
    Simulate(SimulateArgs),
    /// Print tool and file-format versions.
    Version,
}

#[derive(clap::Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file of snapshot settings (delta, n_in, m_out, step_minutes, horizon_steps).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set step_minutes=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Profile TOML; the bundled benchmark profile when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the profile's number of days.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the series as a detector speed file.
    #[arg(long)]
    raw_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file of training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    context_mode: Option<ContextMode>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    loss: Option<LossKind>,
    /// `by_point:<train>:<test>` or `by_time:<train_days>:<test_days>`.
    #[arg(long)]
    split: Option<Split>,
    /// Save a model file after every epoch into this directory.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Report path; defaults to `<out>.report.toml`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    model2: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Split whose test side is evaluated, or `all`.
    #[arg(long, default_value = "by_point:20:30")]
    split: String,
    /// Point for the day curve and slot series; first test point by default.
    #[arg(long)]
    point: Option<String>,
    /// Date for the day curve (YYYY-MM-DD).
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Target time of day for a slot series (HH:MM); repeatable.
    #[arg(long = "slot", default_values = ["07:30", "12:00"])]
    slots: Vec<String>,
    /// Synthetic profile whose dips classify slots for the dip/flat MAE contrast.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Use the bundled profile for the dip/flat contrast.
    #[arg(long, conflicts_with = "profile")]
    bundled_profile: bool,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ticks: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Drop every message a point sends at a tick, as `<tick>:<point>`; repeatable.
    #[arg(long = "drop", value_name = "TICK:POINT")]
    drops: Vec<String>,
    /// Compare every node prediction with the batch prediction.
    #[arg(long)]
    verify: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Version => {
            println!("congestion {VERSION}");
            println!("model format {MODEL_FORMAT_VERSION}");
            println!("dataset format {}", congestion_core::ingestion::DATASET_FORMAT_VERSION);
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(&read(path)?).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    let params = load(&read(path)?).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Model::from_params(&params)?)
}

fn echo<T: Serialize>(title: &str, value: &T) -> Result<()> {
    println!("# {title}");
    print!("{}", toml::to_string(value)?);
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let cfg: SnapshotConfig = resolve(&SnapshotConfig::default(), a.config.as_deref(), &a.sets, Default::default())?;
    cfg.validate()?;
    let file = fs::File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let raw = parse_raw(std::io::BufReader::new(file))?;
    let ds = ingest(&raw, &cfg)?;
    write(&a.out, &write_dataset(&ds)?)?;
    echo("ingest config", &cfg)?;
    println!("# {} detectors, {} snapshots", raw.series.len(), ds.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut setup = match &a.profile {
        Some(p) => SynthSetup::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SynthSetup::bundled(),
    };
    if let Some(days) = a.days {
        setup.days = days;
    }
    let (spec, series) = setup.generate(a.seed)?;
    let ds = congestion_core::ingestion::window(&series, &spec, &setup.snapshot)?;
    write(&a.out, &write_dataset(&ds)?)?;
    if let Some(raw_path) = &a.raw_out {
        let raw = RawData {
            series: series.iter().zip(spec.speed_limits()).map(|(s, &l)| s.to_raw(l)).collect(),
            spec: spec.clone(),
        };
        let mut buf = Vec::new();
        write_raw(&mut buf, &raw)?;
        write(raw_path, &buf)?;
    }
    #[derive(Serialize)]
    struct Echo<'a> {
        seed: u64,
        #[serde(flatten)]
        setup: &'a SynthSetup,
    }
    echo("synth config", &Echo { seed: a.seed, setup: &setup })?;
    println!("# {} points, {} snapshots", spec.len(), ds.len());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let flags = Flags::default()
        .opt("model", a.model)?
        .opt("context_mode", a.context_mode)?
        .opt("epochs", a.epochs)?
        .opt("batch_size", a.batch_size)?
        .opt("lr", a.lr)?
        .opt("seed", a.seed)?
        .opt("loss", a.loss)?
        .opt("split", a.split)?
        .opt("checkpoint_dir", a.checkpoint_dir.clone())?
        .into_table();
    let cfg: TrainConfig = resolve(&TrainConfig::default(), a.config.as_deref(), &a.sets, flags)?;
    let ds = load_dataset(&a.dataset)?;
    let (model, report) = train::<f64>(&ds, &cfg)?;
    write(&a.out, &save(&model.to_params(cfg.seed, &cfg.echo())))?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.toml"));
    write(&report_path, toml::to_string(&report)?.as_bytes())?;
    write(
        &with_suffix(&a.out, ".meta.toml"),
        format!("wall_time_secs = {}\n", report.wall_time_secs).as_bytes(),
    )?;
    echo("train config", &cfg)?;
    match report.final_test_rmse {
        Some(r) => println!("# final train loss {:.6}, test rmse {r:.6}", report.epoch_losses.last().unwrap_or(&0.0)),
        None => println!("# final train loss {:.6}", report.epoch_losses.last().unwrap_or(&0.0)),
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary {
    model: String,
    overall_rmse: f64,
    mean_daily_rmse: f64,
    cells: usize,
    cells_better_than_persistence: f64,
    contrast: Option<SlotContrast>,
}

#[derive(Serialize)]
struct EvalSummary {
    quartile_method: &'static str,
    split: String,
    snapshots: usize,
    models: Vec<ModelSummary>,
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let eval_ds = if a.split == "all" {
        ds
    } else {
        let s: Split = a.split.parse().map_err(anyhow::Error::msg)?;
        split(&ds, s)?.1
    };
    let slots = a
        .slots
        .iter()
        .map(|s| NaiveTime::parse_from_str(s, "%H:%M").with_context(|| format!("bad slot `{s}` (expected HH:MM)")))
        .collect::<Result<Vec<_>>>()?;
    let plan = EvalPlan { point: a.point.clone(), date: a.date, slots: slots.clone() };

    let setup = match (&a.profile, a.bundled_profile) {
        (Some(p), _) => Some(SynthSetup::from_toml(&fs::read_to_string(p)?)?),
        (None, true) => Some(SynthSetup::bundled()),
        (None, false) => None,
    };
    let classifier = setup.as_ref().map(|setup| {
        let spec = eval_ds.spec.clone();
        move |s: &congestion_core::PointSnapshot| {
            spec.position(&s.point).is_some_and(|pos| setup.in_dip(pos, s.target_time))
        }
    });
    let in_dip = classifier.as_ref().map(|f| f as &(dyn Fn(&congestion_core::PointSnapshot) -> bool + Sync));

    let mut predictors: Vec<Box<dyn SnapshotPredictor>> = vec![Box::new(load_model(&a.model)?)];
    if let Some(p) = &a.model2 {
        predictors.push(Box::new(load_model(p)?));
    }
    predictors.push(Box::new(Persistence::new(&eval_ds.config)));

    let mut reports: Vec<EvalReport> = Vec::new();
    for p in &predictors {
        let mut r = evaluate(p.as_ref(), &eval_ds, &plan, in_dip)?;
        if reports.iter().any(|x| x.model == r.model) {
            r.model = format!("{}#{}", r.model, reports.len() + 1);
        }
        reports.push(r);
    }

    let dir = &a.out_dir;
    let mut buf = Vec::new();
    write_daily_rmse_csv(&mut buf, &reports)?;
    write(&dir.join("daily_rmse.csv"), &buf)?;
    buf.clear();
    write_boxplot_csv(&mut buf, &reports)?;
    write(&dir.join("boxplot.csv"), &buf)?;
    if let Some(day) = reports[0].series.iter().find(|s| s.name.starts_with("day_")).map(|s| s.name.clone()) {
        buf.clear();
        write_series_csv(&mut buf, &reports, &day)?;
        write(&dir.join("day_curve.csv"), &buf)?;
    }
    for slot in &slots {
        let name = format!("slot_{}", slot.format("%H:%M"));
        buf.clear();
        write_series_csv(&mut buf, &reports, &name)?;
        write(&dir.join(format!("{name}.csv")), &buf)?;
    }

    let baseline = reports.last().expect("persistence report").records.clone();
    let summary = EvalSummary {
        quartile_method: QUARTILE_METHOD,
        split: a.split.clone(),
        snapshots: eval_ds.len(),
        models: reports
            .iter()
            .map(|r| ModelSummary {
                model: r.model.clone(),
                overall_rmse: r.overall_rmse,
                mean_daily_rmse: r.mean_daily_rmse(),
                cells: r.records.len(),
                cells_better_than_persistence: fraction_better(&r.records, &baseline),
                contrast: r.contrast,
            })
            .collect(),
    };
    let text = toml::to_string(&summary)?;
    write(&dir.join("summary.toml"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let model = load_model(&a.model)?;
    let drops = a
        .drops
        .iter()
        .map(|d| {
            let Some((tick, point)) = d.split_once(':') else {
                bail!("bad drop `{d}` (expected TICK:POINT)");
            };
            Ok((tick.parse().with_context(|| format!("bad tick in `{d}`"))?, point.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let sim = SimConfig { ticks: a.ticks, drops };
    let log = run_sim(&ds.series, &ds.spec, &ds.config, &model, &sim)?;
    write(&a.out, log.to_text().as_bytes())?;
    println!(
        "# ticks {}, nodes {}, predictions {}, skips {}, messages delivered {}, dropped {}",
        log.ticks,
        log.nodes,
        log.predictions().count(),
        log.skips().count(),
        log.messages_delivered,
        log.messages_dropped
    );
    if a.verify {
        let eq = compare_with_batch(&log, &ds, &model)?;
        println!("# verify: compared {}, mismatches {}, unmatched {}", eq.compared, eq.mismatches, eq.unmatched);
        if eq.mismatches > 0 {
            bail!("{} node predictions differ from batch predictions", eq.mismatches);
        }
    }
    Ok(())
}
