//! Congestion-weighted Euclidean loss.
//!
//! ```text
//! S    = Σ_i [ (X_i - Y_i)² + ω_i |X_i - Y_i| ],   ω_i = 0 if Y_i > 0.5 else 1
//! strict: L = √S / N
//! rmse:   L = √(S / N)
//! ```
//!
//! Targets at or below 0.5 are congested (low speed ratio) and pick up the
//! extra absolute-error penalty.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::Scalar;

/// Targets strictly above this are treated as light traffic (ω = 0).
pub const CONGESTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Square root of the penalized sum, divided by N outside the root.
    #[default]
    Strict,
    /// Square root of the penalized mean.
    Rmse,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(LossKind::Strict),
            "rmse" => Ok(LossKind::Rmse),
            other => Err(format!("unknown loss `{other}` (expected strict|rmse)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Strict => "strict",
            LossKind::Rmse => "rmse",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a, T> {
    predictions: &'a [T],
    targets: &'a [T],
}

impl<'a, T: Scalar> LossBatch<'a, T> {
    pub fn new(predictions: &'a [T], targets: &'a [T]) -> Result<Self, NnError> {
        if predictions.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if predictions.len() != targets.len() {
            return Err(NnError::InvalidBatch(format!(
                "{} predictions vs {} targets",
                predictions.len(),
                targets.len()
            )));
        }
        if let Some(y) = targets.iter().find(|y| !(**y >= T::zero() && **y <= T::one())) {
            return Err(NnError::InvalidBatch(format!("target {y} outside [0, 1]")));
        }
        Ok(LossBatch { predictions, targets })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn penalized_sum(&self) -> T {
        self.predictions
            .iter()
            .zip(self.targets)
            .map(|(&x, &y)| {
                let d = x - y;
                d * d + weight(y) * d.abs()
            })
            .sum()
    }
}

/// ω for one target.
#[inline]
pub fn weight<T: Scalar>(target: T) -> T {
    if target > T::of(CONGESTION_THRESHOLD) {
        T::zero()
    } else {
        T::one()
    }
}

pub fn loss_forward<T: Scalar>(kind: LossKind, batch: &LossBatch<'_, T>) -> T {
    let n = T::of(batch.len() as f64);
    let s = batch.penalized_sum();
    match kind {
        LossKind::Strict => s.sqrt() / n,
        LossKind::Rmse => (s / n).sqrt(),
    }
}

/// `dL/dX_i`; the derivative of `|·|` at 0 is taken as 0.
pub fn loss_backward<T: Scalar>(kind: LossKind, batch: &LossBatch<'_, T>) -> Result<Vec<T>, NnError> {
    let loss = loss_forward(kind, batch);
    if loss == T::zero() {
        return Err(NnError::ZeroLoss);
    }
    let n = T::of(batch.len() as f64);
    let two = T::of(2.0);
    let denom = match kind {
        LossKind::Strict => two * n * n * loss,
        LossKind::Rmse => two * n * loss,
    };
    Ok(batch
        .predictions
        .iter()
        .zip(batch.targets)
        .map(|(&x, &y)| {
            let d = x - y;
            let sign = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            (two * d + weight(y) * sign) / denom
        })
        .collect())
}
