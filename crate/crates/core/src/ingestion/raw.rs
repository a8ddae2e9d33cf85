//! Detector speed file parser.
//!
//! ```text
//! #point,<id>,<order_index>,<speed_limit>     (manifest block, one per detector)
//! <id>,<ISO-8601 local timestamp>,<avg_speed>  (data rows, any order)
//! ```
//!
//! Blank lines are ignored. Missing slots are absent rows.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use chrono::NaiveDateTime;

use super::IngestError;
use crate::types::{NetworkSpec, PointId};

#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub point: PointId,
    /// `(timestamp, average speed)`, sorted by timestamp.
    pub samples: Vec<(NaiveDateTime, f64)>,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub spec: NetworkSpec,
    /// One entry per detector with at least one sample, in traffic order.
    pub series: Vec<RawSeries>,
}

const TIMESTAMP_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// Writes `data` in the format [`parse_raw`] reads.
pub fn write_raw<W: Write>(mut out: W, data: &RawData) -> std::io::Result<()> {
    for (p, limit) in data.spec.points().iter().zip(data.spec.speed_limits()) {
        writeln!(out, "#point,{},{},{}", p.as_str(), p.order_index, limit)?;
    }
    for s in &data.series {
        for (ts, speed) in &s.samples {
            writeln!(out, "{},{},{}", s.point.as_str(), ts.format("%Y-%m-%dT%H:%M:%S"), speed)?;
        }
    }
    Ok(())
}

pub fn parse_raw_str(text: &str) -> Result<RawData, IngestError> {
    parse_raw(text.as_bytes())
}

pub fn parse_raw<R: BufRead>(reader: R) -> Result<RawData, IngestError> {
    let mut manifest: Vec<(PointId, f64)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut samples: Vec<Vec<(NaiveDateTime, f64, usize)>> = Vec::new();
    let mut in_data = false;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let format = |msg: &str| IngestError::Format { line: lineno, msg: msg.to_string() };

        if let Some(tag) = fields[0].strip_prefix('#') {
            if tag != "point" {
                return Err(format("unknown directive"));
            }
            if in_data {
                return Err(format("manifest line after data rows"));
            }
            if fields.len() != 4 {
                return Err(format("expected #point,<id>,<order_index>,<speed_limit>"));
            }
            let order: usize = fields[2].parse().map_err(|_| format("bad order index"))?;
            let limit: f64 = fields[3].parse().map_err(|_| format("bad speed limit"))?;
            if index.insert(fields[1].to_string(), manifest.len()).is_some() {
                return Err(format("detector declared twice"));
            }
            manifest.push((PointId::new(fields[1], order), limit));
            samples.push(Vec::new());
            continue;
        }

        in_data = true;
        if fields.len() != 3 {
            return Err(format("expected <id>,<timestamp>,<avg_speed>"));
        }
        let slot = *index
            .get(fields[0])
            .ok_or_else(|| IngestError::UnknownDetector { line: lineno, id: fields[0].to_string() })?;
        let ts = parse_timestamp(fields[1]).ok_or_else(|| format("bad timestamp"))?;
        let speed: f64 = fields[2].parse().map_err(|_| format("bad speed"))?;
        if !speed.is_finite() || speed < 0.0 {
            return Err(format("speed must be finite and non-negative"));
        }
        samples[slot].push((ts, speed, lineno));
    }

    let limits: HashMap<usize, f64> = manifest.iter().map(|(p, l)| (p.order_index, *l)).collect();
    let mut by_id: HashMap<String, Vec<(NaiveDateTime, f64, usize)>> = manifest
        .iter()
        .map(|(p, _)| p.id.to_string())
        .zip(samples)
        .collect();
    let spec = NetworkSpec::new(manifest)?;

    let mut series = Vec::new();
    for point in spec.points() {
        let mut s = by_id.remove(point.as_str()).unwrap_or_default();
        if s.is_empty() {
            continue;
        }
        s.sort_by_key(|&(ts, _, _)| ts);
        if let Some(w) = s.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IngestError::Format {
                line: w[0].2.max(w[1].2),
                msg: format!("duplicate sample for `{}` at {}", point, w[0].0),
            });
        }
        series.push(RawSeries {
            point: point.clone(),
            samples: s.into_iter().map(|(ts, v, _)| (ts, v)).collect(),
            speed_limit: limits[&point.order_index],
        });
    }
    Ok(RawData { spec, series })
}
