use std::collections::HashMap;

use super::{context_scalars, CleanSeries, IngestError};
use crate::types::{NetworkSpec, PointSnapshot, SnapshotConfig, SnapshotInput};

/// Snapshots plus the aligned source series they were cut from.
///
/// `series` is indexed by network position. Splits keep the full series and
/// filter only `snapshots`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: NetworkSpec,
    pub config: SnapshotConfig,
    pub series: Vec<CleanSeries>,
    pub snapshots: Vec<PointSnapshot>,
}

impl Dataset {
    /// Number of snapshots, `Z`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Same source data, keeping only snapshots that satisfy `keep`.
    pub fn filter(&self, keep: impl Fn(&PointSnapshot) -> bool) -> Dataset {
        Dataset {
            spec: self.spec.clone(),
            config: self.config,
            series: self.series.clone(),
            snapshots: self.snapshots.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Column index `t` of a snapshot within the source series.
    pub fn slot_of(&self, snap: &PointSnapshot) -> Option<usize> {
        let start = self.series.first()?.start;
        let minutes = (snap.timestamp - start).num_minutes();
        let step = self.config.step_minutes as i64;
        (minutes >= 0 && minutes % step == 0).then_some((minutes / step) as usize)
    }
}

/// Snapshot for the point at network `position` with column `t` at slot `t`.
/// `series` must be aligned and ordered by network position.
pub fn build_snapshot(
    spec: &NetworkSpec,
    cfg: &SnapshotConfig,
    series: &[CleanSeries],
    position: usize,
    t: usize,
) -> Result<PointSnapshot, IngestError> {
    let rows = spec.neighbor_positions(position, cfg)?;
    let len = series[position].len();
    if t < cfg.delta || t + cfg.horizon_steps >= len {
        return Err(IngestError::MisalignedSeries(format!(
            "slot {t} lacks {} steps of history or {} steps of future in a series of {len}",
            cfg.delta, cfg.horizon_steps
        )));
    }
    let mut values = Vec::with_capacity(cfg.rows() * cfg.cols());
    for r in rows {
        values.extend_from_slice(&series[r].values[t - cfg.delta..=t]);
    }
    let center = &series[position];
    let timestamp = center.time_at(t);
    let (day_value, time_value) = context_scalars(timestamp);
    Ok(PointSnapshot {
        input: SnapshotInput::new(cfg.rows(), cfg.cols(), values, day_value, time_value)?,
        target: center.values[t + cfg.horizon_steps],
        point: spec.points()[position].clone(),
        timestamp,
        target_time: center.time_at(t + cfg.horizon_steps),
    })
}

/// Orders `clean` by network position and checks the series share one grid.
pub fn align(
    clean: &[CleanSeries],
    spec: &NetworkSpec,
    cfg: &SnapshotConfig,
) -> Result<Vec<CleanSeries>, IngestError> {
    let by_id: HashMap<&str, &CleanSeries> = clean.iter().map(|s| (s.point.as_str(), s)).collect();
    let mut ordered = Vec::with_capacity(spec.len());
    for p in spec.points() {
        let s = by_id.get(p.as_str()).ok_or_else(|| IngestError::MissingPoint(p.to_string()))?;
        ordered.push((*s).clone());
    }
    if let Some(first) = ordered.first() {
        for s in &ordered {
            if s.step_minutes != cfg.step_minutes {
                return Err(IngestError::MisalignedSeries(format!(
                    "`{}` has {}-minute steps, config expects {}",
                    s.point, s.step_minutes, cfg.step_minutes
                )));
            }
            if s.start != first.start || s.len() != first.len() {
                return Err(IngestError::MisalignedSeries(format!(
                    "`{}` covers {} x {} slots, `{}` covers {} x {} slots",
                    s.point,
                    s.start,
                    s.len(),
                    first.point,
                    first.start,
                    first.len()
                )));
            }
        }
    }
    Ok(ordered)
}

/// Slides the snapshot window over every eligible point and every `t` with
/// full history and a target. Snapshots are ordered by point, then time.
pub fn window(clean: &[CleanSeries], spec: &NetworkSpec, cfg: &SnapshotConfig) -> Result<Dataset, IngestError> {
    cfg.validate()?;
    let series = align(clean, spec, cfg)?;
    let len = series.first().map_or(0, CleanSeries::len);
    let mut snapshots = Vec::new();
    if len > cfg.delta + cfg.horizon_steps {
        for position in spec.eligible_positions(cfg) {
            for t in cfg.delta..len - cfg.horizon_steps {
                snapshots.push(build_snapshot(spec, cfg, &series, position, t)?);
            }
        }
    }
    Ok(Dataset { spec: spec.clone(), config: *cfg, series, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TrafficCondition;
    use chrono::NaiveDate;

    fn constant_series(spec: &NetworkSpec, len: usize) -> Vec<CleanSeries> {
        let start = NaiveDate::from_ymd_opt(2016, 8, 15).unwrap().and_hms_opt(0, 0, 0).unwrap();
        spec.points()
            .iter()
            .enumerate()
            .map(|(k, p)| CleanSeries {
                point: p.clone(),
                start,
                step_minutes: 5,
                values: (0..len).map(|t| TrafficCondition::clamped((k * 100 + t) as f64 / 10_000.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn ten_slots_yield_five_per_point() {
        let spec = NetworkSpec::uniform(17, 65.0).unwrap();
        let cfg = SnapshotConfig::default();
        let ds = window(&constant_series(&spec, 10), &spec, &cfg).unwrap();
        assert_eq!(spec.eligible_positions(&cfg).len(), 9);
        assert_eq!(ds.len(), 9 * 5);
    }

    #[test]
    fn cells_follow_row_and_column_order() {
        let spec = NetworkSpec::uniform(12, 65.0).unwrap();
        let cfg = SnapshotConfig::default();
        let series = constant_series(&spec, 20);
        let ds = window(&series, &spec, &cfg).unwrap();
        for snap in &ds.snapshots {
            let pos = spec.position(&snap.point).unwrap();
            let t = ds.slot_of(snap).unwrap();
            for r in 0..cfg.rows() {
                for j in 0..cfg.cols() {
                    assert_eq!(snap.input.get(r, j), series[pos - 4 + r].values[t - 4 + j]);
                }
            }
            assert_eq!(snap.target, series[pos].values[t + 1]);
        }
    }

    #[test]
    fn misaligned_and_missing_series_rejected() {
        let spec = NetworkSpec::uniform(9, 65.0).unwrap();
        let cfg = SnapshotConfig::default();
        let mut series = constant_series(&spec, 10);
        series[3].values.pop();
        assert!(matches!(window(&series, &spec, &cfg), Err(IngestError::MisalignedSeries(_))));
        series.remove(3);
        assert!(matches!(window(&series, &spec, &cfg), Err(IngestError::MissingPoint(_))));
    }

    #[test]
    fn zero_delta_rejected() {
        let spec = NetworkSpec::uniform(9, 65.0).unwrap();
        let cfg = SnapshotConfig { delta: 0, ..Default::default() };
        assert!(matches!(window(&constant_series(&spec, 10), &spec, &cfg), Err(IngestError::Topology(_))));
    }
}
