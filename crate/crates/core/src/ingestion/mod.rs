//! Detector speed ingestion: parsing, gap cleaning, normalization, context
//! scalars, snapshot windowing, dataset files and synthetic traffic.

mod clean;
mod context;
mod dataset_io;
mod raw;
mod synth;
mod window;

pub use clean::{clean, clean_over, CleanSeries};
pub use context::{context_scalars, DAY_DIVISOR, TIME_BUCKET_MINUTES, TIME_DIVISOR};
pub use dataset_io::{read_dataset, write_dataset, DATASET_FORMAT_VERSION, DATASET_MAGIC};
pub use raw::{write_raw, parse_raw, parse_raw_str, parse_timestamp, RawData, RawSeries};
pub use synth::{synth, RushHourDip, SynthSetup, SyntheticProfile};
pub use window::{align as align_series, build_snapshot, window, Dataset};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::codec::CodecError;
use crate::types::TopologyError;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("line {line}: unknown detector `{id}`")]
    UnknownDetector { line: usize, id: String },
    #[error("series `{0}` is empty")]
    EmptySeries(String),
    #[error("series `{point}` has no data before {first}; leading gap of {missing} slots")]
    LeadingGap { point: String, first: NaiveDateTime, missing: usize },
    #[error("series `{point}` has no data after {last}; trailing gap of {missing} slots")]
    TrailingGap { point: String, last: NaiveDateTime, missing: usize },
    #[error("series `{point}`: sample at {at} is off the {step_minutes}-minute grid")]
    OffGrid { point: String, at: NaiveDateTime, step_minutes: u32 },
    #[error("series `{point}`: timestamps not strictly increasing at {at}")]
    NotIncreasing { point: String, at: NaiveDateTime },
    #[error("series are misaligned: {0}")]
    MisalignedSeries(String),
    #[error("no series for point `{0}`")]
    MissingPoint(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("dataset file: {0}")]
    DatasetFormat(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cleans every series over the span shared by the whole file, then windows.
/// A detector whose data starts late or ends early is a gap error.
pub fn ingest(raw: &RawData, cfg: &crate::types::SnapshotConfig) -> Result<Dataset, IngestError> {
    let first = raw.series.iter().filter_map(|s| s.samples.first().map(|x| x.0)).min();
    let last = raw.series.iter().filter_map(|s| s.samples.last().map(|x| x.0)).max();
    let (Some(first), Some(last)) = (first, last) else {
        return window(&[], &raw.spec, cfg);
    };
    let cleaned = raw.series.iter().map(|s| clean_over(s, cfg, first, last)).collect::<Result<Vec<_>, _>>()?;
    window(&cleaned, &raw.spec, cfg)
}
