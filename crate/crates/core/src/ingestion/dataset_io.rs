//! Binary dataset file.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic "TFDATSET" | version u32
//! delta u32 | n_in u32 | m_out u32 | step_minutes u32 | horizon_steps u32
//! point count u32, then per point: id (u32 len + utf-8) | order_index u64 | speed_limit f64
//! series start i64 (seconds since 1970-01-01T00:00, naive) | slots u64
//! per point in traffic order: `slots` conditions as f64
//! snapshot count u64, then per snapshot: position u32 | column slot u64
//! crc32 of all preceding bytes
//! ```
//!
//! Snapshots are stored as references into the series and rebuilt on load.

use chrono::DateTime;

use super::{build_snapshot, CleanSeries, Dataset, IngestError};
use crate::codec::{ByteReader, ByteWriter};
use crate::types::{NetworkSpec, PointId, SnapshotConfig, TrafficCondition};

pub const DATASET_MAGIC: &[u8; 8] = b"TFDATSET";
pub const DATASET_FORMAT_VERSION: u32 = 1;

pub fn write_dataset(ds: &Dataset) -> Result<Vec<u8>, IngestError> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_FORMAT_VERSION);
    let c = &ds.config;
    for v in [c.delta, c.n_in, c.m_out, c.step_minutes as usize, c.horizon_steps] {
        w.u32(v as u32);
    }
    w.u32(ds.spec.len() as u32);
    for (p, limit) in ds.spec.points().iter().zip(ds.spec.speed_limits()) {
        w.str(p.as_str());
        w.u64(p.order_index as u64);
        w.f64(*limit);
    }
    let (start, slots) = match ds.series.first() {
        Some(s) => (s.start.and_utc().timestamp(), s.len()),
        None => (0, 0),
    };
    w.i64(start);
    w.u64(slots as u64);
    for s in &ds.series {
        for v in &s.values {
            w.f64(v.value());
        }
    }
    w.u64(ds.snapshots.len() as u64);
    for snap in &ds.snapshots {
        let pos = ds
            .spec
            .position(&snap.point)
            .ok_or_else(|| IngestError::DatasetFormat(format!("snapshot point `{}` not in network", snap.point)))?;
        let t = ds
            .slot_of(snap)
            .ok_or_else(|| IngestError::DatasetFormat(format!("snapshot at {} off the series grid", snap.timestamp)))?;
        w.u32(pos as u32);
        w.u64(t as u64);
    }
    Ok(w.finish_with_checksum())
}

pub fn read_dataset(bytes: &[u8]) -> Result<Dataset, IngestError> {
    let bad = |m: &str| IngestError::DatasetFormat(m.to_string());
    if bytes.len() < DATASET_MAGIC.len() || &bytes[..8] != DATASET_MAGIC {
        return Err(bad("not a dataset file (bad magic)"));
    }
    let mut r = ByteReader::with_checksum(bytes)?;
    r.take(8)?;
    let version = r.u32()?;
    if version != DATASET_FORMAT_VERSION {
        return Err(IngestError::DatasetFormat(format!(
            "format version {version}, expected {DATASET_FORMAT_VERSION}"
        )));
    }
    let config = SnapshotConfig {
        delta: r.u32()? as usize,
        n_in: r.u32()? as usize,
        m_out: r.u32()? as usize,
        step_minutes: r.u32()?,
        horizon_steps: r.u32()? as usize,
    };
    config.validate()?;
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.str()?.to_string();
        let order = r.u64()? as usize;
        let limit = r.f64()?;
        entries.push((PointId::new(id, order), limit));
    }
    let spec = NetworkSpec::new(entries)?;
    let start = DateTime::from_timestamp(r.i64()?, 0).ok_or_else(|| bad("start timestamp out of range"))?.naive_utc();
    let slots = r.u64()? as usize;
    let mut series = Vec::with_capacity(n);
    for p in spec.points() {
        let mut values = Vec::with_capacity(slots);
        for _ in 0..slots {
            values.push(TrafficCondition::new(r.f64()?)?);
        }
        series.push(CleanSeries { point: p.clone(), start, step_minutes: config.step_minutes, values });
    }
    let count = r.u64()? as usize;
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        let pos = r.u32()? as usize;
        let t = r.u64()? as usize;
        if pos >= spec.len() {
            return Err(bad("snapshot position out of range"));
        }
        snapshots.push(build_snapshot(&spec, &config, &series, pos, t)?);
    }
    if !r.is_empty() {
        return Err(bad("trailing bytes after snapshots"));
    }
    Ok(Dataset { spec, config, series, snapshots })
}
