//! Valid (unpadded), stride-1 2-D convolution over `H x W x C` inputs.
//!
//! Weights are laid out `[F, ζ, ζ, C]`, so one kernel row and the matching
//! input row segment are both contiguous runs of `ζ * C` values.

use super::{check_shape, Activation, NnError, Tensor};
use crate::scalar::{axpy, dot};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    /// Square filter side, ζ.
    pub filter_size: usize,
    pub num_filters: usize,
    pub in_channels: usize,
}

impl ConvLayerSpec {
    /// Output `[H - ζ + 1, W - ζ + 1, F]`, or `None` when the input is smaller than a filter.
    pub fn output_shape(&self, h: usize, w: usize) -> Option<[usize; 3]> {
        (h >= self.filter_size && w >= self.filter_size && self.filter_size > 0)
            .then(|| [h - self.filter_size + 1, w - self.filter_size + 1, self.num_filters])
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.num_filters, self.filter_size, self.filter_size, self.in_channels]
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.num_filters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub spec: ConvLayerSpec,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    pre: Vec<T>,
    output: Tensor<T>,
}

impl<T> ConvCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(spec: ConvLayerSpec, weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self, NnError> {
        check_shape("conv2d weights", &spec.weight_shape(), weights.shape())?;
        check_shape("conv2d bias", &[spec.num_filters], bias.shape())?;
        Ok(Conv2d { spec, weights, bias, activation })
    }

    pub fn zeros(spec: ConvLayerSpec, activation: Activation) -> Self {
        Conv2d {
            spec,
            weights: Tensor::zeros(&spec.weight_shape()),
            bias: Tensor::zeros(&[spec.num_filters]),
            activation,
        }
    }

    fn output_dims(&self, input: &Tensor<T>) -> Result<[usize; 3], NnError> {
        let s = input.shape();
        let mismatch = || NnError::ShapeMismatch {
            op: "conv2d input",
            expected: vec![self.spec.filter_size, self.spec.filter_size, self.spec.in_channels],
            got: s.to_vec(),
        };
        if s.len() != 3 || s[2] != self.spec.in_channels {
            return Err(mismatch());
        }
        self.spec.output_shape(s[0], s[1]).ok_or_else(mismatch)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>), NnError> {
        let [oh, ow, nf] = self.output_dims(input)?;
        let (w_in, c) = (input.shape()[1], self.spec.in_channels);
        let k = self.spec.filter_size;
        let run = k * c;
        let x = input.data();
        let wt = self.weights.data();
        let b = self.bias.data();

        let mut pre = vec![T::zero(); oh * ow * nf];
        for i in 0..oh {
            for j in 0..ow {
                let out = &mut pre[(i * ow + j) * nf..(i * ow + j + 1) * nf];
                for (f, o) in out.iter_mut().enumerate() {
                    let mut acc = b[f];
                    for kh in 0..k {
                        let xs = ((i + kh) * w_in + j) * c;
                        let ws = (f * k + kh) * run;
                        acc += dot(&x[xs..xs + run], &wt[ws..ws + run]);
                    }
                    *o = acc;
                }
            }
        }
        let act = self.activation;
        let out: Vec<T> = pre.iter().map(|&v| act.apply(v)).collect();
        let output = Tensor::new(vec![oh, ow, nf], out)?;
        Ok((output.clone(), ConvCache { input: input.clone(), pre, output }))
    }

    pub fn backward(&self, cache: &ConvCache<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>, NnError> {
        check_shape("conv2d grad_out", cache.output.shape(), grad_out.shape())?;
        let [oh, ow, nf] = [cache.output.shape()[0], cache.output.shape()[1], cache.output.shape()[2]];
        let (w_in, c) = (cache.input.shape()[1], self.spec.in_channels);
        let k = self.spec.filter_size;
        let run = k * c;
        let x = cache.input.data();
        let wt = self.weights.data();

        let act = self.activation;
        let dpre: Vec<T> = grad_out
            .data()
            .iter()
            .zip(&cache.pre)
            .zip(cache.output.data())
            .map(|((&g, &p), &y)| g * act.derivative(p, y))
            .collect();

        let mut d_in = Tensor::zeros(cache.input.shape());
        let mut d_w = Tensor::zeros(self.weights.shape());
        let mut d_b = Tensor::zeros(&[nf]);
        for i in 0..oh {
            for j in 0..ow {
                for f in 0..nf {
                    let g = dpre[(i * ow + j) * nf + f];
                    if g == T::zero() {
                        continue;
                    }
                    d_b.data_mut()[f] += g;
                    for kh in 0..k {
                        let xs = ((i + kh) * w_in + j) * c;
                        let ws = (f * k + kh) * run;
                        axpy(g, &x[xs..xs + run], &mut d_w.data_mut()[ws..ws + run]);
                        axpy(g, &wt[ws..ws + run], &mut d_in.data_mut()[xs..xs + run]);
                    }
                }
            }
        }
        Ok(ConvGrads { input: d_in, weights: d_w, bias: d_b })
    }
}
