//! Four-gate LSTM cell with backpropagation through time.
//!
//! Gate blocks are stacked in the order input, forget, output, candidate:
//! rows `[0, H)` of every weight matrix belong to the input gate, and so on.
//!
//! ```text
//! i = σ(Wx_i x + Wh_i h + b_i)    f = σ(...)    o = σ(...)    g = tanh(...)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use super::activation::sigmoid;
use super::{check_shape, NnError, Tensor};
use crate::scalar::{axpy, dot};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCellSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCellSpec {
    pub fn param_count(&self) -> usize {
        4 * self.hidden_dim * (self.input_dim + self.hidden_dim + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub spec: LstmCellSpec,
    /// `[4H, I]`
    pub w_input: Tensor<T>,
    /// `[4H, H]`
    pub w_hidden: Tensor<T>,
    /// `[4H]`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct LstmStepCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Post-activation gates `[i, f, o, g]`, each of length H.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads<T> {
    pub w_input: Tensor<T>,
    pub w_hidden: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LstmGrads<T> {
    fn zeros(spec: LstmCellSpec) -> Self {
        let h4 = 4 * spec.hidden_dim;
        LstmGrads {
            w_input: Tensor::zeros(&[h4, spec.input_dim]),
            w_hidden: Tensor::zeros(&[h4, spec.hidden_dim]),
            bias: Tensor::zeros(&[h4]),
        }
    }
}

impl<T: Scalar> LstmCell<T> {
    pub fn new(spec: LstmCellSpec, w_input: Tensor<T>, w_hidden: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let h4 = 4 * spec.hidden_dim;
        check_shape("lstm w_input", &[h4, spec.input_dim], w_input.shape())?;
        check_shape("lstm w_hidden", &[h4, spec.hidden_dim], w_hidden.shape())?;
        check_shape("lstm bias", &[h4], bias.shape())?;
        Ok(LstmCell { spec, w_input, w_hidden, bias })
    }

    pub fn zeros(spec: LstmCellSpec) -> Self {
        let g = LstmGrads::zeros(spec);
        LstmCell { spec, w_input: g.w_input, w_hidden: g.w_hidden, bias: g.bias }
    }

    /// One time step from `(h_prev, c_prev)`; returns `(h, c)` and the step cache.
    pub fn step(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<(Vec<T>, Vec<T>, LstmStepCache<T>), NnError> {
        let (ni, nh) = (self.spec.input_dim, self.spec.hidden_dim);
        check_shape("lstm x", &[ni], &[x.len()])?;
        check_shape("lstm h_prev", &[nh], &[h_prev.len()])?;
        check_shape("lstm c_prev", &[nh], &[c_prev.len()])?;
        let wx = self.w_input.data();
        let wh = self.w_hidden.data();
        let mut gates: Vec<T> = (0..4 * nh)
            .map(|r| self.bias.data()[r] + dot(&wx[r * ni..(r + 1) * ni], x) + dot(&wh[r * nh..(r + 1) * nh], h_prev))
            .collect();
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if r < 3 * nh { sigmoid(*z) } else { z.tanh() };
        }
        let mut c = vec![T::zero(); nh];
        let mut h = vec![T::zero(); nh];
        let mut tanh_c = vec![T::zero(); nh];
        for u in 0..nh {
            let (i, f, o, g) = (gates[u], gates[nh + u], gates[2 * nh + u], gates[3 * nh + u]);
            c[u] = f * c_prev[u] + i * g;
            tanh_c[u] = c[u].tanh();
            h[u] = o * tanh_c[u];
        }
        let cache = LstmStepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, tanh_c };
        Ok((h, c, cache))
    }

    /// Runs a sequence from zero state; returns every hidden state and the caches.
    pub fn forward_sequence(&self, xs: &[Vec<T>]) -> Result<(Vec<Vec<T>>, Vec<LstmStepCache<T>>), NnError> {
        let nh = self.spec.hidden_dim;
        let mut h = vec![T::zero(); nh];
        let mut c = vec![T::zero(); nh];
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (h2, c2, cache) = self.step(x, &h, &c)?;
            h = h2;
            c = c2;
            hs.push(h.clone());
            caches.push(cache);
        }
        Ok((hs, caches))
    }

    /// BPTT given `dL/dh_t` for every step. Returns `dL/dx_t` per step and parameter gradients.
    pub fn backward_sequence(
        &self,
        caches: &[LstmStepCache<T>],
        grad_hidden: &[Vec<T>],
    ) -> Result<(Vec<Vec<T>>, LstmGrads<T>), NnError> {
        check_shape("lstm grad_hidden", &[caches.len()], &[grad_hidden.len()])?;
        let (ni, nh) = (self.spec.input_dim, self.spec.hidden_dim);
        let one = T::one();
        let mut grads = LstmGrads::zeros(self.spec);
        let mut dxs = vec![Vec::new(); caches.len()];
        let mut dh_next = vec![T::zero(); nh];
        let mut dc_next = vec![T::zero(); nh];
        let mut dz = vec![T::zero(); 4 * nh];

        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            check_shape("lstm grad_hidden step", &[nh], &[grad_hidden[t].len()])?;
            let gs = &cache.gates;
            for u in 0..nh {
                let (i, f, o, g) = (gs[u], gs[nh + u], gs[2 * nh + u], gs[3 * nh + u]);
                let tc = cache.tanh_c[u];
                let dh = grad_hidden[t][u] + dh_next[u];
                let dc = dh * o * (one - tc * tc) + dc_next[u];
                dz[u] = dc * g * i * (one - i);
                dz[nh + u] = dc * cache.c_prev[u] * f * (one - f);
                dz[2 * nh + u] = dh * tc * o * (one - o);
                dz[3 * nh + u] = dc * i * (one - g * g);
                dc_next[u] = dc * f;
            }
            let mut dx = vec![T::zero(); ni];
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            for (r, &d) in dz.iter().enumerate() {
                grads.bias.data_mut()[r] += d;
                axpy(d, &cache.x, &mut grads.w_input.data_mut()[r * ni..(r + 1) * ni]);
                axpy(d, &cache.h_prev, &mut grads.w_hidden.data_mut()[r * nh..(r + 1) * nh]);
                axpy(d, &self.w_input.data()[r * ni..(r + 1) * ni], &mut dx);
                axpy(d, &self.w_hidden.data()[r * nh..(r + 1) * nh], &mut dh_next);
            }
            dxs[t] = dx;
        }
        Ok((dxs, grads))
    }
}
