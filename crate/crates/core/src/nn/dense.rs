use super::{check_shape, Activation, NnError, Tensor};
use crate::scalar::{axpy, dot};
use crate::Scalar;

/// Fully connected layer, weights `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    output: Vec<T>,
}

impl<T> DenseCache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Vec<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self, NnError> {
        if weights.shape().len() != 2 {
            return Err(NnError::ShapeMismatch { op: "dense weights", expected: vec![0, 0], got: weights.shape().to_vec() });
        }
        check_shape("dense bias", &[weights.shape()[0]], bias.shape())?;
        Ok(Dense { weights, bias, activation })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense { weights: Tensor::zeros(&[outputs, inputs]), bias: Tensor::zeros(&[outputs]), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, DenseCache<T>), NnError> {
        check_shape("dense input", &[self.inputs()], &[x.len()])?;
        let n = self.inputs();
        let pre: Vec<T> = (0..self.outputs())
            .map(|o| self.bias.data()[o] + dot(&self.weights.data()[o * n..(o + 1) * n], x))
            .collect();
        let output: Vec<T> = pre.iter().map(|&v| self.activation.apply(v)).collect();
        Ok((output.clone(), DenseCache { input: x.to_vec(), pre, output }))
    }

    pub fn backward(&self, cache: &DenseCache<T>, grad_out: &[T]) -> Result<DenseGrads<T>, NnError> {
        check_shape("dense grad_out", &[self.outputs()], &[grad_out.len()])?;
        let n = self.inputs();
        let mut d_in = vec![T::zero(); n];
        let mut d_w = Tensor::zeros(self.weights.shape());
        let mut d_b = Tensor::zeros(self.bias.shape());
        for o in 0..self.outputs() {
            let g = grad_out[o] * self.activation.derivative(cache.pre[o], cache.output[o]);
            d_b.data_mut()[o] = g;
            if g == T::zero() {
                continue;
            }
            axpy(g, &cache.input, &mut d_w.data_mut()[o * n..(o + 1) * n]);
            axpy(g, &self.weights.data()[o * n..(o + 1) * n], &mut d_in);
        }
        Ok(DenseGrads { input: d_in, weights: d_w, bias: d_b })
    }
}
