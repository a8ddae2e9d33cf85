//! Seeded synthetic traffic with rush-hour dips that travel downstream.
//!
//! A single upstream source signal (free-flow ratio minus scheduled dips plus
//! a white disturbance) reaches point `k` after `k * propagation_lag_steps`
//! steps, so the upstream neighbor's present is the point's future. Each
//! point adds its own measurement noise, amplified while a dip is active.

use chrono::{Datelike, NaiveDate, TimeDelta};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CleanSeries, IngestError};
use crate::rng::{SeedStreams, STREAM_SYNTH};
use crate::types::{NetworkSpec, SnapshotConfig, TrafficCondition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RushHourDip {
    /// First slot of the day (in series steps) affected, inclusive.
    pub start_slot: usize,
    /// Last affected slot, inclusive.
    pub end_slot: usize,
    pub depth: f64,
    /// Days of week the dip applies to, 0 = Sunday.
    pub weekdays: Vec<u8>,
}

impl RushHourDip {
    fn applies(&self, weekday: u8, slot: usize) -> bool {
        (self.start_slot..=self.end_slot).contains(&slot) && self.weekdays.contains(&weekday)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub base_speed_ratio: f64,
    #[serde(default)]
    pub rush_hour_dips: Vec<RushHourDip>,
    /// Std of the disturbance carried downstream with the traffic.
    pub noise_std: f64,
    /// Std of per-point noise that neighbors cannot see.
    #[serde(default)]
    pub local_noise_std: f64,
    /// Local noise is scaled by `1 + gain * active_dip_depth`.
    #[serde(default)]
    pub congestion_noise_gain: f64,
    pub propagation_lag_steps: usize,
}

impl SyntheticProfile {
    pub fn validate(&self, cfg: &SnapshotConfig) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Profile(m));
        if !(0.0..=1.0).contains(&self.base_speed_ratio) {
            return bad(format!("base_speed_ratio {} outside [0, 1]", self.base_speed_ratio));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("local_noise_std", self.local_noise_std),
            ("congestion_noise_gain", self.congestion_noise_gain),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        let spd = cfg.slots_per_day();
        for dip in &self.rush_hour_dips {
            if dip.start_slot > dip.end_slot || dip.end_slot >= spd {
                return bad(format!("dip slots {}..={} invalid for {spd} slots/day", dip.start_slot, dip.end_slot));
            }
            if !(dip.depth >= 0.0 && dip.depth <= 1.0) {
                return bad(format!("dip depth {} outside [0, 1]", dip.depth));
            }
            if dip.weekdays.iter().any(|&d| d > 6) {
                return bad("weekday index above 6".into());
            }
        }
        Ok(())
    }

    /// Total dip depth active at global slot `s` (may be negative: before `start`).
    pub fn dip_at(&self, start: NaiveDate, slots_per_day: usize, s: i64) -> f64 {
        if self.rush_hour_dips.is_empty() {
            return 0.0;
        }
        let spd = slots_per_day as i64;
        let date = start + TimeDelta::days(s.div_euclid(spd));
        let weekday = date.weekday().num_days_from_sunday() as u8;
        let slot = s.rem_euclid(spd) as usize;
        self.rush_hour_dips
            .iter()
            .filter(|d| d.applies(weekday, slot))
            .map(|d| d.depth)
            .sum()
    }

    /// Whether any dip covers this weekday/slot-of-day.
    pub fn is_dip_slot(&self, weekday: u8, slot: usize) -> bool {
        self.rush_hour_dips.iter().any(|d| d.applies(weekday, slot))
    }
}

/// Generates one aligned series per network point, starting at `start` 00:00.
pub fn synth(
    profile: &SyntheticProfile,
    spec: &NetworkSpec,
    cfg: &SnapshotConfig,
    start: NaiveDate,
    days: usize,
    seed: u64,
) -> Result<Vec<CleanSeries>, IngestError> {
    cfg.validate()?;
    profile.validate(cfg)?;
    if days == 0 {
        return Err(IngestError::Profile("days must be at least 1".into()));
    }
    let spd = cfg.slots_per_day();
    let total = (days * spd) as i64;
    let lag = profile.propagation_lag_steps as i64;
    let lead = lag * spec.len().saturating_sub(1) as i64;

    let mut rng = SeedStreams::new(seed).rng(STREAM_SYNTH);
    // Source disturbance for global slots -lead..total.
    let disturbance: Vec<f64> = (0..lead + total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

    let start_time = start.and_hms_opt(0, 0, 0).expect("midnight exists");
    let mut out = Vec::with_capacity(spec.len());
    for (k, point) in spec.points().iter().enumerate() {
        let shift = k as i64 * lag;
        let values = (0..total)
            .map(|s| {
                let src = s - shift;
                let dip = profile.dip_at(start, spd, src);
                let local: f64 = rng.sample(StandardNormal);
                let v = profile.base_speed_ratio - dip
                    + profile.noise_std * disturbance[(src + lead) as usize]
                    + profile.local_noise_std * (1.0 + profile.congestion_noise_gain * dip) * local;
                TrafficCondition::clamped(v)
            })
            .collect();
        out.push(CleanSeries { point: point.clone(), start: start_time, step_minutes: cfg.step_minutes, values });
    }
    Ok(out)
}

/// A complete synthetic run description, as stored in profile files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSetup {
    pub points: usize,
    pub speed_limit: f64,
    pub days: usize,
    pub start_date: NaiveDate,
    pub snapshot: SnapshotConfig,
    pub profile: SyntheticProfile,
}

const BUNDLED_PROFILE: &str = include_str!("../../profiles/bundled.toml");

impl SynthSetup {
    /// The bundled benchmark profile (`profiles/bundled.toml`).
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_PROFILE).expect("bundled profile parses")
    }

    pub fn bundled_toml() -> &'static str {
        BUNDLED_PROFILE
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        toml::from_str(text).map_err(|e| IngestError::Profile(e.to_string()))
    }

    pub fn network(&self) -> Result<NetworkSpec, IngestError> {
        Ok(NetworkSpec::uniform(self.points, self.speed_limit)?)
    }

    pub fn generate(&self, seed: u64) -> Result<(NetworkSpec, Vec<CleanSeries>), IngestError> {
        let spec = self.network()?;
        let series = synth(&self.profile, &spec, &self.snapshot, self.start_date, self.days, seed)?;
        Ok((spec, series))
    }

    /// Whether a rush-hour dip is active at the point at network `position`
    /// at time `at`, accounting for downstream propagation.
    pub fn in_dip(&self, position: usize, at: chrono::NaiveDateTime) -> bool {
        let step = self.snapshot.step_minutes as i64;
        let origin = self.start_date.and_hms_opt(0, 0, 0).expect("midnight exists");
        let s = (at - origin).num_minutes().div_euclid(step);
        let src = s - (position * self.profile.propagation_lag_steps) as i64;
        self.profile.dip_at(self.start_date, self.snapshot.slots_per_day(), src) > 0.0
    }

    /// Generates the series and windows them into snapshots.
    pub fn dataset(&self, seed: u64) -> Result<super::Dataset, IngestError> {
        let (spec, series) = self.generate(seed)?;
        super::window(&series, &spec, &self.snapshot)
    }
}
