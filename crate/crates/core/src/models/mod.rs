//! The two snapshot predictors and their parameter file.

mod cnn;
mod params;
mod stacked_lstm;

pub use cnn::{CnnCache, CnnPredictor, CNN_COLS, CNN_ROWS};
pub use params::{load, save, ModelParams, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use stacked_lstm::{LstmCache, LstmPredictor, LSTM_HIDDEN};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecError;
use crate::nn::{NnError, Param, Tensor};
use crate::types::{SnapshotInput, TopologyError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("snapshot is {rows}x{cols}, model expects {expected_rows}x{expected_cols}")]
    ShapeMismatch { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("model file version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("model file checksum: {0}")]
    ChecksumError(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl From<CodecError> for ModelError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Checksum { .. } | CodecError::Truncated(_) => ModelError::ChecksumError(e.to_string()),
            CodecError::Utf8(_) => ModelError::Format(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Cnn => 0,
            ModelKind::Lstm => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Cnn),
            1 => Some(ModelKind::Lstm),
            _ => None,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(format!("unknown model kind `{other}` (expected cnn|lstm)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        })
    }
}

/// Whether the day/time scalars join the flattened convolution features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    #[default]
    None,
    Concat,
}

impl ContextMode {
    pub fn tag(self) -> u8 {
        match self {
            ContextMode::None => 0,
            ContextMode::Concat => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ContextMode::None),
            1 => Some(ContextMode::Concat),
            _ => None,
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ContextMode::None),
            "concat" => Ok(ContextMode::Concat),
            other => Err(format!("unknown context mode `{other}` (expected none|concat)")),
        }
    }
}

/// A trainable snapshot-to-condition network.
///
/// `backward` returns gradients in the same order as `params`.
pub trait Network<T: Scalar>: Clone + Send + Sync {
    type Cache: Send + Sync;

    fn kind(&self) -> ModelKind;

    fn context_mode(&self) -> ContextMode {
        ContextMode::None
    }

    fn forward(&self, input: &SnapshotInput) -> Result<(T, Self::Cache), ModelError>;

    fn backward(&self, cache: &Self::Cache, grad_output: T) -> Result<Vec<Tensor<T>>, ModelError>;

    fn params(&self) -> Vec<(&'static str, &Tensor<T>)>;

    fn params_mut(&mut self) -> Vec<Param<'_, T>>;

    fn predict(&self, input: &SnapshotInput) -> Result<T, ModelError> {
        Ok(self.forward(input)?.0)
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Architecture manifest: parameter names and shapes in payload order.
    fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.params().iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect()
    }

    fn to_params(&self, seed: u64, config_echo: &str) -> ModelParams {
        ModelParams {
            kind: self.kind(),
            context_mode: self.context_mode(),
            manifest: self.manifest(),
            payload: self.params().iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_f64_lossy())).collect(),
            seed,
            config_echo: config_echo.to_string(),
        }
    }

    /// Overwrites parameters from `p` after checking kind and manifest.
    fn load_params(&mut self, p: &ModelParams) -> Result<(), ModelError> {
        if p.kind != self.kind() {
            return Err(ModelError::ManifestMismatch(format!("file holds a {} model, expected {}", p.kind, self.kind())));
        }
        let expected = self.manifest();
        if p.manifest != expected {
            return Err(ModelError::ManifestMismatch(format!("layers {:?} do not match {:?}", p.manifest, expected)));
        }
        if p.payload.len() != self.param_count() {
            return Err(ModelError::ManifestMismatch(format!(
                "payload has {} values, manifest needs {}",
                p.payload.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for param in self.params_mut() {
            for v in param.tensor.data_mut() {
                *v = T::of(p.payload[offset]);
                offset += 1;
            }
        }
        Ok(())
    }
}

/// Any snapshot predictor reporting in `f64`, usable behind `dyn`.
pub trait SnapshotPredictor: Send + Sync {
    fn predict_condition(&self, input: &SnapshotInput) -> Result<f64, ModelError>;

    fn label(&self) -> String;
}

/// Either predictor, as loaded from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<T> {
    Cnn(CnnPredictor<T>),
    Lstm(LstmPredictor<T>),
}

impl<T: Scalar> AnyModel<T> {
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, context: ContextMode, rng: &mut R) -> Self {
        match kind {
            ModelKind::Cnn => AnyModel::Cnn(CnnPredictor::init(context, rng)),
            ModelKind::Lstm => AnyModel::Lstm(LstmPredictor::init(rng)),
        }
    }

    pub fn from_params(p: &ModelParams) -> Result<Self, ModelError> {
        Ok(match p.kind {
            ModelKind::Cnn => {
                let mut m = CnnPredictor::zeros(p.context_mode);
                m.load_params(p)?;
                AnyModel::Cnn(m)
            }
            ModelKind::Lstm => {
                if p.context_mode != ContextMode::None {
                    return Err(ModelError::ManifestMismatch("lstm has no context input".into()));
                }
                let mut m = LstmPredictor::zeros();
                m.load_params(p)?;
                AnyModel::Lstm(m)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Cnn(_) => ModelKind::Cnn,
            AnyModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn to_params(&self, seed: u64, config_echo: &str) -> ModelParams {
        match self {
            AnyModel::Cnn(m) => m.to_params(seed, config_echo),
            AnyModel::Lstm(m) => m.to_params(seed, config_echo),
        }
    }

    pub fn predict(&self, input: &SnapshotInput) -> Result<T, ModelError> {
        match self {
            AnyModel::Cnn(m) => m.predict(input),
            AnyModel::Lstm(m) => m.predict(input),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            AnyModel::Cnn(m) => m.param_count(),
            AnyModel::Lstm(m) => m.param_count(),
        }
    }
}

impl<T: Scalar> SnapshotPredictor for AnyModel<T> {
    fn predict_condition(&self, input: &SnapshotInput) -> Result<f64, ModelError> {
        Ok(self.predict(input)?.to_f64_lossy())
    }

    fn label(&self) -> String {
        self.kind().to_string()
    }
}

impl<T: Scalar> SnapshotPredictor for CnnPredictor<T> {
    fn predict_condition(&self, input: &SnapshotInput) -> Result<f64, ModelError> {
        Ok(self.predict(input)?.to_f64_lossy())
    }

    fn label(&self) -> String {
        "cnn".into()
    }
}

impl<T: Scalar> SnapshotPredictor for LstmPredictor<T> {
    fn predict_condition(&self, input: &SnapshotInput) -> Result<f64, ModelError> {
        Ok(self.predict(input)?.to_f64_lossy())
    }

    fn label(&self) -> String {
        "lstm".into()
    }
}

pub(crate) fn check_geometry(input: &SnapshotInput, rows: usize, cols: usize) -> Result<(), ModelError> {
    if input.rows() != rows || input.cols() != cols {
        return Err(ModelError::ShapeMismatch {
            rows: input.rows(),
            cols: input.cols(),
            expected_rows: rows,
            expected_cols: cols,
        });
    }
    Ok(())
}
