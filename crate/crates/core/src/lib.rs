//! Decentralized short-term traffic congestion prediction.
//!
//! Each network point predicts its own next-step traffic condition from a
//! small matrix of recent conditions at itself and its upstream/downstream
//! neighbors. Two predictors are provided, a small CNN and a two-layer
//! stacked LSTM, both trained with a congestion-weighted Euclidean loss.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the 64-bit variants used by the pipeline.

pub mod codec;
pub mod evaluation;
pub mod fsutil;
pub mod ingestion;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod training;
pub mod types;

pub use scalar::Scalar;
pub use types::{
    NetworkSnapshot, NetworkSpec, PointId, PointSnapshot, SnapshotConfig, SnapshotInput, TopologyError,
    TrafficCondition,
};
pub use training::{train, Split, TrainConfig, TrainReport};

/// 64-bit tensor.
pub type Tensor64 = nn::Tensor<f64>;
/// 64-bit CNN predictor.
pub type Cnn = models::CnnPredictor<f64>;
/// 64-bit stacked LSTM predictor.
pub type Lstm = models::LstmPredictor<f64>;
/// Either 64-bit predictor.
pub type Model = models::AnyModel<f64>;

/// Crate version, reported by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
