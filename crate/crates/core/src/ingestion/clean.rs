use chrono::NaiveDateTime;

use super::{IngestError, RawSeries};
use crate::types::{PointId, SnapshotConfig, TrafficCondition};

/// Gap-free condition series on an exact `step_minutes` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSeries {
    pub point: PointId,
    pub start: NaiveDateTime,
    pub step_minutes: u32,
    pub values: Vec<TrafficCondition>,
}

impl CleanSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, slot: usize) -> NaiveDateTime {
        self.start + chrono::TimeDelta::minutes(self.step_minutes as i64 * slot as i64)
    }

    /// Conditions read back as speeds under `speed_limit`.
    pub fn to_raw(&self, speed_limit: f64) -> RawSeries {
        RawSeries {
            point: self.point.clone(),
            samples: self
                .values
                .iter()
                .enumerate()
                .map(|(k, c)| (self.time_at(k), c.value() * speed_limit))
                .collect(),
            speed_limit,
        }
    }
}

/// Cleans a series over its own first..last span.
pub fn clean(series: &RawSeries, cfg: &SnapshotConfig) -> Result<CleanSeries, IngestError> {
    let (first, last) = match (series.samples.first(), series.samples.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(IngestError::EmptySeries(series.point.to_string())),
    };
    clean_over(series, cfg, first, last)
}

/// Fills gaps by linear interpolation between the bounding samples (a single
/// missing slot gets the mean of its neighbors) and converts speeds to
/// conditions. Slots before the first or after the last sample are errors.
pub fn clean_over(
    series: &RawSeries,
    cfg: &SnapshotConfig,
    start: NaiveDateTime,
    end: NaiveDateTime,
) -> Result<CleanSeries, IngestError> {
    cfg.validate()?;
    let name = || series.point.to_string();
    let step = cfg.step_minutes as i64;
    let slot_of = |ts: NaiveDateTime| -> Result<i64, IngestError> {
        let minutes = (ts - start).num_minutes();
        if (ts - start).num_seconds() % 60 != 0 || minutes % step != 0 {
            return Err(IngestError::OffGrid { point: name(), at: ts, step_minutes: cfg.step_minutes });
        }
        Ok(minutes / step)
    };

    let (first, last) = match (series.samples.first(), series.samples.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(IngestError::EmptySeries(name())),
    };
    let total = slot_of(end)? + 1;
    let first_slot = slot_of(first)?;
    if first_slot > 0 {
        return Err(IngestError::LeadingGap { point: name(), first, missing: first_slot as usize });
    }
    if first_slot < 0 {
        return Err(IngestError::MisalignedSeries(format!("`{}` starts before {start}", name())));
    }
    let last_slot = slot_of(last)?;
    if last_slot < total - 1 {
        return Err(IngestError::TrailingGap { point: name(), last, missing: (total - 1 - last_slot) as usize });
    }
    if last_slot > total - 1 {
        return Err(IngestError::MisalignedSeries(format!("`{}` runs past {end}", name())));
    }

    let mut speeds = Vec::with_capacity(total as usize);
    let mut prev: Option<(i64, f64)> = None;
    for &(ts, speed) in &series.samples {
        let slot = slot_of(ts)?;
        if let Some((ps, pv)) = prev {
            if slot <= ps {
                return Err(IngestError::NotIncreasing { point: name(), at: ts });
            }
            let span = (slot - ps) as f64;
            for k in 1..slot - ps {
                let w = k as f64 / span;
                speeds.push(if slot - ps == 2 { (pv + speed) / 2.0 } else { pv + (speed - pv) * w });
            }
        }
        speeds.push(speed);
        prev = Some((slot, speed));
    }
    debug_assert_eq!(speeds.len() as i64, total);

    Ok(CleanSeries {
        point: series.point.clone(),
        start,
        step_minutes: cfg.step_minutes,
        values: speeds
            .into_iter()
            .map(|s| TrafficCondition::from_speed(s, series.speed_limit))
            .collect(),
    })
}
