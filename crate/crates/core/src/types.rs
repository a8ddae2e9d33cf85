//! Network points, snapshot geometry and the snapshot value types.

use std::fmt;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("traffic condition {0} outside [0, 1]")]
    ConditionOutOfRange(f64),
    #[error("point {point} lacks neighbors: needs {n_in} upstream and {m_out} downstream")]
    BoundaryPoint { point: String, n_in: usize, m_out: usize },
    #[error("unknown point `{0}`")]
    UnknownPoint(String),
    #[error("duplicate order index {0}")]
    DuplicateOrder(usize),
    #[error("duplicate point id `{0}`")]
    DuplicateId(String),
    #[error("speed limit of point `{0}` must be strictly positive")]
    NonPositiveSpeedLimit(String),
    #[error("invalid snapshot config: {0}")]
    InvalidConfig(&'static str),
    #[error("snapshot matrix is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    MatrixShape { rows: usize, cols: usize, got_rows: usize, got_cols: usize },
}

/// Average speed over speed limit, always within `[0, 1]`. Low means congested.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
#[repr(transparent)]
pub struct TrafficCondition(f64);

impl TrafficCondition {
    pub const FREE_FLOW: Self = TrafficCondition(1.0);

    pub fn new(value: f64) -> Result<Self, TopologyError> {
        if (0.0..=1.0).contains(&value) {
            Ok(TrafficCondition(value))
        } else {
            Err(TopologyError::ConditionOutOfRange(value))
        }
    }

    /// Speed ratio clamped into `[0, 1]`; over-limit speeds count as free flow.
    pub fn from_speed(speed: f64, speed_limit: f64) -> Self {
        Self::clamped(speed / speed_limit)
    }

    pub fn clamped(ratio: f64) -> Self {
        if ratio.is_nan() {
            return TrafficCondition(0.0);
        }
        TrafficCondition(ratio.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TrafficCondition {
    type Error = TopologyError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TrafficCondition> for f64 {
    fn from(c: TrafficCondition) -> f64 {
        c.0
    }
}

impl fmt::Display for TrafficCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A detector location; `order_index` is its position along the road.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointId {
    pub order_index: usize,
    pub id: Arc<str>,
}

impl PointId {
    pub fn new(id: impl Into<Arc<str>>, order_index: usize) -> Self {
        PointId { order_index, id: id.into() }
    }

    pub fn as_str(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// An ordered road segment. Points are kept sorted by `order_index`, and
/// neighbors are positional: in-flow is upstream (lower index), out-flow is
/// downstream (higher index).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    points: Vec<PointId>,
    speed_limits: Vec<f64>,
}

impl NetworkSpec {
    pub fn new(entries: Vec<(PointId, f64)>) -> Result<Self, TopologyError> {
        let mut entries = entries;
        entries.sort_by_key(|(p, _)| p.order_index);
        for pair in entries.windows(2) {
            if pair[0].0.order_index == pair[1].0.order_index {
                return Err(TopologyError::DuplicateOrder(pair[0].0.order_index));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (p, limit) in &entries {
            if !seen.insert(p.id.clone()) {
                return Err(TopologyError::DuplicateId(p.id.to_string()));
            }
            if !(*limit > 0.0) || !limit.is_finite() {
                return Err(TopologyError::NonPositiveSpeedLimit(p.id.to_string()));
            }
        }
        let (points, speed_limits) = entries.into_iter().unzip();
        Ok(NetworkSpec { points, speed_limits })
    }

    /// `count` points named `P000`, `P001`, ... with order indices `0..count`.
    pub fn uniform(count: usize, speed_limit: f64) -> Result<Self, TopologyError> {
        Self::new((0..count).map(|i| (PointId::new(format!("P{i:03}"), i), speed_limit)).collect())
    }

    pub fn points(&self) -> &[PointId] {
        &self.points
    }

    pub fn speed_limits(&self) -> &[f64] {
        &self.speed_limits
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position of a point in traffic order.
    pub fn position(&self, point: &PointId) -> Option<usize> {
        self.points
            .binary_search_by_key(&point.order_index, |p| p.order_index)
            .ok()
            .filter(|&k| self.points[k].id == point.id)
    }

    pub fn position_of_id(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| &*p.id == id)
    }

    pub fn is_eligible(&self, position: usize, cfg: &SnapshotConfig) -> bool {
        position >= cfg.n_in && position + cfg.m_out < self.points.len()
    }

    /// Points that have enough neighbors on both sides to form a snapshot.
    pub fn eligible_positions(&self, cfg: &SnapshotConfig) -> std::ops::Range<usize> {
        let n = self.points.len();
        if n < cfg.n_in + cfg.m_out + 1 {
            return 0..0;
        }
        cfg.n_in..n - cfg.m_out
    }

    /// Row positions `[L_n .. L_1, S, R_1 .. R_m]` for the point at `position`.
    pub fn neighbor_positions(
        &self,
        position: usize,
        cfg: &SnapshotConfig,
    ) -> Result<std::ops::RangeInclusive<usize>, TopologyError> {
        if !self.is_eligible(position, cfg) {
            return Err(TopologyError::BoundaryPoint {
                point: self
                    .points
                    .get(position)
                    .map(|p| p.id.to_string())
                    .unwrap_or_else(|| format!("#{position}")),
                n_in: cfg.n_in,
                m_out: cfg.m_out,
            });
        }
        Ok(position - cfg.n_in..=position + cfg.m_out)
    }

    /// Row order of a point snapshot centered on `point`.
    pub fn neighbor_rows(&self, point: &PointId, cfg: &SnapshotConfig) -> Result<Vec<PointId>, TopologyError> {
        let pos = self
            .position(point)
            .ok_or_else(|| TopologyError::UnknownPoint(point.id.to_string()))?;
        Ok(self.neighbor_positions(pos, cfg)?.map(|k| self.points[k].clone()).collect())
    }
}

/// Snapshot geometry: `delta` past steps, `n_in` upstream and `m_out`
/// downstream neighbors, raw series granularity and prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub delta: usize,
    pub n_in: usize,
    pub m_out: usize,
    pub step_minutes: u32,
    pub horizon_steps: usize,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig { delta: 4, n_in: 4, m_out: 4, step_minutes: 5, horizon_steps: 1 }
    }
}

impl SnapshotConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.delta < 1 {
            return Err(TopologyError::InvalidConfig("delta must be at least 1"));
        }
        if self.step_minutes == 0 {
            return Err(TopologyError::InvalidConfig("step_minutes must be positive"));
        }
        if 1440 % self.step_minutes != 0 {
            return Err(TopologyError::InvalidConfig("step_minutes must divide a day"));
        }
        if self.horizon_steps < 1 {
            return Err(TopologyError::InvalidConfig("horizon_steps must be at least 1"));
        }
        Ok(())
    }

    /// Snapshot rows, `n + m + 1`.
    pub fn rows(&self) -> usize {
        self.n_in + self.m_out + 1
    }

    /// Snapshot columns, `delta + 1`.
    pub fn cols(&self) -> usize {
        self.delta + 1
    }

    pub fn step(&self) -> chrono::TimeDelta {
        chrono::TimeDelta::minutes(self.step_minutes as i64)
    }

    pub fn slots_per_day(&self) -> usize {
        (1440 / self.step_minutes) as usize
    }
}

/// Model input: the condition matrix plus day/time context scalars.
///
/// `values` is row-major, rows `[L_n .. L_1, S, R_1 .. R_m]`, columns
/// `[t - delta .. t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotInput {
    rows: usize,
    cols: usize,
    values: Vec<TrafficCondition>,
    pub day_value: f64,
    pub time_value: f64,
}

impl SnapshotInput {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<TrafficCondition>,
        day_value: f64,
        time_value: f64,
    ) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(TopologyError::MatrixShape {
                rows,
                cols,
                got_rows: if cols == 0 { 0 } else { values.len() / cols },
                got_cols: cols,
            });
        }
        TrafficCondition::new(day_value)?;
        TrafficCondition::new(time_value)?;
        Ok(SnapshotInput { rows, cols, values, day_value, time_value })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[TrafficCondition] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> TrafficCondition {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[TrafficCondition] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Index of the center point's row.
    pub fn center_row(&self, cfg: &SnapshotConfig) -> usize {
        cfg.n_in
    }

    pub fn check_shape(&self, cfg: &SnapshotConfig) -> Result<(), TopologyError> {
        if self.rows != cfg.rows() || self.cols != cfg.cols() {
            return Err(TopologyError::MatrixShape {
                rows: cfg.rows(),
                cols: cfg.cols(),
                got_rows: self.rows,
                got_cols: self.cols,
            });
        }
        Ok(())
    }

    /// Column `col` as a vector over rows (one LSTM time step).
    pub fn column(&self, col: usize) -> impl Iterator<Item = TrafficCondition> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }
}

/// One training/evaluation unit centered on `point` at `timestamp` (column `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSnapshot {
    pub input: SnapshotInput,
    /// Condition of the center point at `t + horizon`.
    pub target: TrafficCondition,
    pub point: PointId,
    pub timestamp: NaiveDateTime,
    /// Absolute time the target refers to.
    pub target_time: NaiveDateTime,
}

/// All point snapshots of a network sharing one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSnapshot {
    timestamp: NaiveDateTime,
    snapshots: Vec<PointSnapshot>,
}

impl NetworkSnapshot {
    /// Groups snapshots; returns `None` when timestamps or shapes differ.
    pub fn new(snapshots: Vec<PointSnapshot>) -> Option<Self> {
        let first = snapshots.first()?;
        let (ts, rows, cols) = (first.timestamp, first.input.rows(), first.input.cols());
        snapshots
            .iter()
            .all(|s| s.timestamp == ts && s.input.rows() == rows && s.input.cols() == cols)
            .then_some(NetworkSnapshot { timestamp: ts, snapshots })
    }

    pub fn timestamp(&self) -> NaiveDateTime {
        self.timestamp
    }

    pub fn snapshots(&self) -> &[PointSnapshot] {
        &self.snapshots
    }
}
