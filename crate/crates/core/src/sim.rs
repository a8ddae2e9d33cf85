//! Decentralized prediction: one node per eligible point, each holding its
//! own model copy and fed only by its own sensor and its neighbors' messages.
//!
//! Rounds are synchronous. Every sensor publishes its reading for tick `k`
//! to its subscribers, the barrier delivers all of them, and only then do
//! nodes predict.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{context_scalars, CleanSeries, IngestError};
use crate::models::{ModelError, SnapshotPredictor};
use crate::types::{NetworkSpec, PointId, SnapshotConfig, SnapshotInput, TrafficCondition};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("node `{point}`: {source}")]
    Model { point: String, source: ModelError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMessage {
    pub from: PointId,
    pub timestamp: NaiveDateTime,
    pub condition: TrafficCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    /// Buffers still filling.
    WarmUp { have: usize, need: usize },
    /// `neighbor` sent nothing for `missing_at`, which lies in the window.
    StaleNeighbor { neighbor: String, missing_at: NaiveDateTime },
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::WarmUp { have, need } => write!(f, "warm-up {have}/{need}"),
            SkipReason::StaleNeighbor { neighbor, missing_at } => {
                write!(f, "stale neighbor {neighbor} at {}", missing_at.format("%Y-%m-%dT%H:%M"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    /// Predicted condition for the next step.
    Prediction(f64),
    Skip(SkipReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: usize,
    pub time: NaiveDateTime,
    pub point: String,
    pub outcome: Outcome,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.tick, self.time.format("%Y-%m-%dT%H:%M"), self.point)?;
        match &self.outcome {
            Outcome::Prediction(v) => write!(f, "{v}"),
            Outcome::Skip(r) => write!(f, "SKIP {r}"),
        }
    }
}

/// A single network point's predictor.
///
/// `step` is the node's only input: its own reading and neighbor messages.
#[derive(Debug, Clone)]
pub struct Node<P> {
    point: PointId,
    /// Sources per snapshot row, `[L_n .. L_1, S, R_1 .. R_m]`.
    rows: Vec<PointId>,
    rings: Vec<VecDeque<(NaiveDateTime, Option<TrafficCondition>)>>,
    model: P,
    cfg: SnapshotConfig,
}

impl<P: SnapshotPredictor> Node<P> {
    pub fn new(point: PointId, rows: Vec<PointId>, model: P, cfg: SnapshotConfig) -> Self {
        let rings = rows.iter().map(|_| VecDeque::with_capacity(cfg.cols())).collect();
        Node { point, rows, rings, model, cfg }
    }

    pub fn point(&self) -> &PointId {
        &self.point
    }

    /// Neighbors this node subscribes to (everything but itself).
    pub fn subscriptions(&self) -> impl Iterator<Item = &PointId> {
        self.rows.iter().filter(move |p| **p != self.point)
    }

    /// Buffers this tick's inputs and predicts if the window is complete.
    pub fn step(&mut self, now: NaiveDateTime, inbox: &[ConditionMessage]) -> Result<Outcome, ModelError> {
        let cols = self.cfg.cols();
        for (source, ring) in self.rows.iter().zip(&mut self.rings) {
            let value = inbox.iter().find(|m| &m.from == source && m.timestamp == now).map(|m| m.condition);
            if ring.len() == cols {
                ring.pop_front();
            }
            ring.push_back((now, value));
        }
        let have = self.rings[0].len();
        if have < cols {
            return Ok(Outcome::Skip(SkipReason::WarmUp { have, need: cols }));
        }
        // Latest gap first, so the report names the freshest missing message.
        for col in (0..cols).rev() {
            for (source, ring) in self.rows.iter().zip(&self.rings) {
                let (at, value) = ring[col];
                if value.is_none() {
                    return Ok(Outcome::Skip(SkipReason::StaleNeighbor {
                        neighbor: source.to_string(),
                        missing_at: at,
                    }));
                }
            }
        }
        let values = self.rings.iter().flat_map(|r| r.iter().map(|(_, v)| v.expect("checked"))).collect();
        let (day, time) = context_scalars(now);
        let input = SnapshotInput::new(self.rows.len(), cols, values, day, time).map_err(ModelError::from)?;
        Ok(Outcome::Prediction(self.model.predict_condition(&input)?))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimConfig {
    /// Number of ticks; `None` runs to the end of the series.
    pub ticks: Option<usize>,
    /// Messages to drop: `(tick, sender)` drops everything `sender` would
    /// publish that tick.
    pub drops: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimLog {
    pub ticks: usize,
    pub nodes: usize,
    pub messages_delivered: usize,
    pub messages_dropped: usize,
    pub records: Vec<LogRecord>,
}

impl SimLog {
    pub fn predictions(&self) -> impl Iterator<Item = (&LogRecord, f64)> {
        self.records.iter().filter_map(|r| match r.outcome {
            Outcome::Prediction(v) => Some((r, v)),
            Outcome::Skip(_) => None,
        })
    }

    pub fn skips(&self) -> impl Iterator<Item = (&LogRecord, &SkipReason)> {
        self.records.iter().filter_map(|r| match &r.outcome {
            Outcome::Skip(s) => Some((r, s)),
            Outcome::Prediction(_) => None,
        })
    }

    /// Line-delimited `tick,time,point,prediction|SKIP reason`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("tick,time,point,outcome\n");
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

/// Replays `series` tick by tick through one node per eligible point.
pub fn run<P: SnapshotPredictor + Clone>(
    series: &[CleanSeries],
    spec: &NetworkSpec,
    cfg: &SnapshotConfig,
    model: &P,
    sim: &SimConfig,
) -> Result<SimLog, SimError> {
    if series.is_empty() {
        return Ok(SimLog::default());
    }
    cfg.validate().map_err(IngestError::from)?;
    let series = crate::ingestion::align_series(series, spec, cfg)?;
    let len = series.first().map_or(0, CleanSeries::len);
    let ticks = sim.ticks.map_or(len, |t| t.min(len));

    let mut nodes: Vec<Node<P>> = spec
        .eligible_positions(cfg)
        .map(|pos| {
            let rows = spec.neighbor_rows(&spec.points()[pos], cfg)?;
            Ok(Node::new(spec.points()[pos].clone(), rows, model.clone(), *cfg))
        })
        .collect::<Result<_, IngestError>>()?;
    let drops: HashSet<(usize, &str)> = sim.drops.iter().map(|(t, p)| (*t, p.as_str())).collect();

    let mut log = SimLog { ticks, nodes: nodes.len(), ..Default::default() };
    for tick in 0..ticks {
        let now = series[0].time_at(tick);
        // Publish: each sensor's reading for this tick.
        let published: Vec<ConditionMessage> = spec
            .points()
            .iter()
            .zip(&series)
            .map(|(p, s)| ConditionMessage { from: p.clone(), timestamp: now, condition: s.values[tick] })
            .collect();
        // Barrier: route every message to its subscribers before any node runs.
        let inboxes: Vec<Vec<ConditionMessage>> = nodes
            .iter()
            .map(|node| {
                let own = spec.position(&node.point).expect("node in spec");
                let mut inbox = vec![published[own].clone()];
                for sub in node.subscriptions() {
                    if drops.contains(&(tick, sub.as_str())) {
                        log.messages_dropped += 1;
                    } else {
                        let pos = spec.position(sub).expect("neighbor in spec");
                        inbox.push(published[pos].clone());
                        log.messages_delivered += 1;
                    }
                }
                inbox
            })
            .collect();
        let outcomes: Vec<Outcome> = nodes
            .par_iter_mut()
            .zip(inboxes.par_iter())
            .map(|(node, inbox)| {
                node.step(now, inbox).map_err(|source| SimError::Model { point: node.point.to_string(), source })
            })
            .collect::<Result<_, _>>()?;
        for (node, outcome) in nodes.iter().zip(outcomes) {
            log.records.push(LogRecord { tick, time: now, point: node.point.to_string(), outcome });
        }
    }
    Ok(log)
}

/// Node predictions checked against batch predictions on the same snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Equivalence {
    pub compared: usize,
    pub mismatches: usize,
    /// Node predictions with no batch snapshot (the final slot has no target).
    pub unmatched: usize,
}

/// Compares every logged prediction bit-for-bit with `model` applied to the
/// windowed snapshot of the same point and timestamp in `ds`.
pub fn compare_with_batch<P: SnapshotPredictor + ?Sized>(
    log: &SimLog,
    ds: &crate::ingestion::Dataset,
    model: &P,
) -> Result<Equivalence, ModelError> {
    let index: std::collections::HashMap<(&str, NaiveDateTime), usize> =
        ds.snapshots.iter().enumerate().map(|(i, s)| ((s.point.as_str(), s.timestamp), i)).collect();
    let mut eq = Equivalence::default();
    for (rec, value) in log.predictions() {
        match index.get(&(rec.point.as_str(), rec.time)) {
            Some(&i) => {
                eq.compared += 1;
                let batch = model.predict_condition(&ds.snapshots[i].input)?;
                if batch.to_bits() != value.to_bits() {
                    eq.mismatches += 1;
                }
            }
            None => eq.unmatched += 1,
        }
    }
    Ok(eq)
}
