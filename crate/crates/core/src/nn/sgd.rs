use super::{check_shape, NnError, Tensor};
use crate::Scalar;

/// A named, mutable parameter tensor.
pub struct Param<'a, T> {
    pub name: String,
    pub tensor: &'a mut Tensor<T>,
}

/// `p <- p - lr * g` for every parameter. Nothing is updated if any gradient
/// is non-finite.
pub fn sgd_step<T: Scalar>(params: &mut [Param<'_, T>], grads: &[Tensor<T>], lr: T) -> Result<(), NnError> {
    if !(lr >= T::zero() && lr.is_finite()) {
        return Err(NnError::InvalidLearningRate(lr.to_f64_lossy()));
    }
    check_shape("sgd param count", &[params.len()], &[grads.len()])?;
    for (p, g) in params.iter().zip(grads) {
        check_shape("sgd gradient", p.tensor.shape(), g.shape())?;
        if !g.is_finite() {
            return Err(NnError::NonFiniteGradient { layer: p.name.clone() });
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, &d) in p.tensor.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}
