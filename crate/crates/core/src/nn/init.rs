use rand::Rng;

use super::Tensor;
use crate::Scalar;

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Uniform in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = glorot_limit(fan_in, fan_out);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::of(rng.random_range(-limit..limit));
    }
    t
}
