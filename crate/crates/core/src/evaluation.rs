//! Daily RMSE records, box-plot summaries, prediction curves and slot series.
//!
//! All metrics here are plain RMSE/MAE regardless of the training loss.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::Dataset;
use crate::models::{ModelError, SnapshotPredictor};
use crate::types::{PointSnapshot, SnapshotConfig, SnapshotInput};

/// Quartile convention used by [`five_number`], repeated in report headers.
pub const QUARTILE_METHOD: &str = "linear interpolation between order statistics (type 7)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("point `{0}` has no snapshots in the evaluation set")]
    UnknownPoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Predicts `condition(t)` for `t + 1`: the last column of the center row.
#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    center_row: usize,
}

impl Persistence {
    pub fn new(cfg: &SnapshotConfig) -> Self {
        Persistence { center_row: cfg.n_in }
    }
}

impl SnapshotPredictor for Persistence {
    fn predict_condition(&self, input: &SnapshotInput) -> Result<f64, ModelError> {
        Ok(input.get(self.center_row, input.cols() - 1).value())
    }

    fn label(&self) -> String {
        "persistence".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRecord {
    pub point: String,
    pub date: NaiveDate,
    pub rmse: f64,
    pub snapshots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: String,
    pub days: usize,
    pub summary: FiveNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub time: NaiveDateTime,
    pub predicted: f64,
    pub actual: f64,
}

/// Mean absolute error split by whether the target falls in a dip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotContrast {
    pub dip_mae: f64,
    pub flat_mae: f64,
    pub dip_count: usize,
    pub flat_count: usize,
}

impl SlotContrast {
    pub fn error_grows_in_dips(&self) -> bool {
        self.dip_count > 0 && self.flat_count > 0 && self.dip_mae >= self.flat_mae
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub point: String,
    pub entries: Vec<SeriesEntry>,
}

/// Evaluation artifacts of one model over one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub overall_rmse: f64,
    pub records: Vec<RmseRecord>,
    pub summaries: Vec<PointSummary>,
    pub series: Vec<NamedSeries>,
    pub contrast: Option<SlotContrast>,
}

impl EvalReport {
    pub fn mean_daily_rmse(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.rmse).sum::<f64>() / self.records.len() as f64
    }
}

/// One prediction per snapshot, in dataset order.
pub fn predictions<P: SnapshotPredictor + ?Sized>(model: &P, ds: &Dataset) -> Result<Vec<f64>, ModelError> {
    ds.snapshots.par_iter().map(|s| model.predict_condition(&s.input)).collect()
}

fn rmse_of(pairs: impl Iterator<Item = (f64, f64)>) -> (f64, usize) {
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (p, a)| (s + (p - a) * (p - a), n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        ((sum / n as f64).sqrt(), n)
    }
}

/// Plain RMSE over all snapshots given precomputed predictions.
pub fn overall_rmse(ds: &Dataset, preds: &[f64]) -> f64 {
    rmse_of(ds.snapshots.iter().zip(preds).map(|(s, &p)| (p, s.target.value()))).0
}

/// Per (point, target date) RMSE from precomputed predictions. Records are
/// ordered by network position, then date.
pub fn daily_rmse_from(ds: &Dataset, preds: &[f64]) -> Vec<RmseRecord> {
    let mut groups: BTreeMap<(usize, NaiveDate), (f64, usize)> = BTreeMap::new();
    for (snap, &p) in ds.snapshots.iter().zip(preds) {
        let pos = ds.spec.position(&snap.point).unwrap_or(usize::MAX);
        let d = p - snap.target.value();
        let e = groups.entry((pos, snap.target_time.date())).or_insert((0.0, 0));
        e.0 += d * d;
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|((pos, date), (sum, n))| RmseRecord {
            point: ds.spec.points()[pos].to_string(),
            date,
            rmse: (sum / n as f64).sqrt(),
            snapshots: n,
        })
        .collect()
}

pub fn daily_rmse<P: SnapshotPredictor + ?Sized>(model: &P, ds: &Dataset) -> Result<Vec<RmseRecord>, ModelError> {
    Ok(daily_rmse_from(ds, &predictions(model, ds)?))
}

/// Share of `(point, date)` cells in `model` with RMSE strictly below the
/// matching `baseline` cell. Cells missing from `baseline` count as losses.
pub fn fraction_better(model: &[RmseRecord], baseline: &[RmseRecord]) -> f64 {
    if model.is_empty() {
        return 0.0;
    }
    let base: std::collections::HashMap<(&str, NaiveDate), f64> =
        baseline.iter().map(|r| ((r.point.as_str(), r.date), r.rmse)).collect();
    let wins = model
        .iter()
        .filter(|r| base.get(&(r.point.as_str(), r.date)).is_some_and(|&b| r.rmse < b))
        .count();
    wins as f64 / model.len() as f64
}

/// Type-7 quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: v[0],
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
        max: v[v.len() - 1],
    })
}

/// Five-number summary of daily RMSE per point, in order of first appearance.
pub fn boxplot_summary(records: &[RmseRecord]) -> Vec<PointSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_point: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_point
            .entry(&r.point)
            .or_insert_with(|| {
                order.push(&r.point);
                Vec::new()
            })
            .push(r.rmse);
    }
    order
        .into_iter()
        .map(|p| {
            let v = &by_point[p];
            PointSummary { point: p.to_string(), days: v.len(), summary: five_number(v).expect("non-empty") }
        })
        .collect()
}

fn point_snapshots<'a>(ds: &'a Dataset, point: &str) -> Result<Vec<&'a PointSnapshot>, EvalError> {
    let snaps: Vec<_> = ds.snapshots.iter().filter(|s| s.point.as_str() == point).collect();
    if snaps.is_empty() {
        return Err(EvalError::UnknownPoint(point.to_string()));
    }
    Ok(snaps)
}

fn entries<P: SnapshotPredictor + ?Sized>(model: &P, mut snaps: Vec<&PointSnapshot>) -> Result<Vec<SeriesEntry>, EvalError> {
    snaps.sort_by_key(|s| s.target_time);
    snaps
        .into_iter()
        .map(|s| {
            Ok(SeriesEntry {
                time: s.target_time,
                predicted: model.predict_condition(&s.input)?,
                actual: s.target.value(),
            })
        })
        .collect()
}

/// One entry per date whose target falls at time-of-day `slot`, chronological.
pub fn slot_series<P: SnapshotPredictor + ?Sized>(
    model: &P,
    ds: &Dataset,
    point: &str,
    slot: NaiveTime,
) -> Result<Vec<SeriesEntry>, EvalError> {
    let snaps = point_snapshots(ds, point)?;
    entries(model, snaps.into_iter().filter(|s| s.target_time.time() == slot).collect())
}

/// Every prediction for `point` whose target falls on `date`.
pub fn day_curve<P: SnapshotPredictor + ?Sized>(
    model: &P,
    ds: &Dataset,
    point: &str,
    date: NaiveDate,
) -> Result<Vec<SeriesEntry>, EvalError> {
    let snaps = point_snapshots(ds, point)?;
    entries(model, snaps.into_iter().filter(|s| s.target_time.date() == date).collect())
}

/// MAE over snapshots `in_dip` accepts versus the rest.
pub fn slot_contrast(ds: &Dataset, preds: &[f64], in_dip: impl Fn(&PointSnapshot) -> bool) -> SlotContrast {
    let (mut dip, mut flat) = ((0.0, 0usize), (0.0, 0usize));
    for (s, &p) in ds.snapshots.iter().zip(preds) {
        let e = (p - s.target.value()).abs();
        let acc = if in_dip(s) { &mut dip } else { &mut flat };
        acc.0 += e;
        acc.1 += 1;
    }
    let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
    SlotContrast { dip_mae: mean(dip), flat_mae: mean(flat), dip_count: dip.1, flat_count: flat.1 }
}

/// What to extract besides the daily RMSE records.
#[derive(Debug, Clone, Default)]
pub struct EvalPlan {
    /// Point for the day curve and slot series; defaults to the first test point.
    pub point: Option<String>,
    /// Date for the day curve; defaults to the first target date of that point.
    pub date: Option<NaiveDate>,
    pub slots: Vec<NaiveTime>,
}

pub fn evaluate<P: SnapshotPredictor + ?Sized>(
    model: &P,
    ds: &Dataset,
    plan: &EvalPlan,
    in_dip: Option<&(dyn Fn(&PointSnapshot) -> bool + Sync)>,
) -> Result<EvalReport, EvalError> {
    let preds = predictions(model, ds)?;
    let records = daily_rmse_from(ds, &preds);
    let summaries = boxplot_summary(&records);
    let mut series = Vec::new();
    let point = plan.point.clone().or_else(|| ds.snapshots.first().map(|s| s.point.to_string()));
    if let Some(point) = point {
        let date = match plan.date {
            Some(d) => Some(d),
            None => point_snapshots(ds, &point)?.iter().map(|s| s.target_time.date()).min(),
        };
        if let Some(date) = date {
            series.push(NamedSeries {
                name: format!("day_{date}"),
                point: point.clone(),
                entries: day_curve(model, ds, &point, date)?,
            });
        }
        for &slot in &plan.slots {
            series.push(NamedSeries {
                name: format!("slot_{}", slot.format("%H:%M")),
                point: point.clone(),
                entries: slot_series(model, ds, &point, slot)?,
            });
        }
    }
    Ok(EvalReport {
        model: model.label(),
        overall_rmse: overall_rmse(ds, &preds),
        records,
        summaries,
        series,
        contrast: in_dip.map(|f| slot_contrast(ds, &preds, f)),
    })
}

/// `daily_rmse.csv`: model,point,date,rmse,snapshots
pub fn write_daily_rmse_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "point", "date", "rmse", "snapshots"])?;
    for rep in reports {
        for r in &rep.records {
            w.write_record([&rep.model, &r.point, &r.date.to_string(), &fmt(r.rmse), &r.snapshots.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `boxplot.csv`: a `#` header line naming the quartile method, then
/// model,point,days,min,q1,median,q3,max
pub fn write_boxplot_csv<W: Write>(mut out: W, reports: &[EvalReport]) -> Result<(), EvalError> {
    writeln!(out, "# quartiles: {QUARTILE_METHOD}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "point", "days", "min", "q1", "median", "q3", "max"])?;
    for rep in reports {
        for s in &rep.summaries {
            let f = s.summary;
            w.write_record([
                rep.model.clone(),
                s.point.clone(),
                s.days.to_string(),
                fmt(f.min),
                fmt(f.q1),
                fmt(f.median),
                fmt(f.q3),
                fmt(f.max),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Series named `name` from every report: model,point,time,predicted,actual
pub fn write_series_csv<W: Write>(out: W, reports: &[EvalReport], name: &str) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "point", "time", "predicted", "actual"])?;
    for rep in reports {
        for s in rep.series.iter().filter(|s| s.name == name) {
            for e in &s.entries {
                w.write_record([
                    rep.model.clone(),
                    s.point.clone(),
                    e.time.format("%Y-%m-%d %H:%M").to_string(),
                    fmt(e.predicted),
                    fmt(e.actual),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}
