//! Two stacked LSTM layers (9 -> 20 -> 20) reading the snapshot one column
//! at a time, oldest first, with a sigmoid head on the last hidden state.

use rand::Rng;

use super::{check_geometry, ModelError, ModelKind, Network, CNN_COLS, CNN_ROWS};
use crate::nn::{glorot_uniform, Activation, Dense, DenseCache, LstmCell, LstmCellSpec, LstmStepCache, Param, Tensor};
use crate::types::SnapshotInput;
use crate::Scalar;

pub const LSTM_HIDDEN: usize = 20;
const LAYER1: LstmCellSpec = LstmCellSpec { input_dim: CNN_ROWS, hidden_dim: LSTM_HIDDEN };
const LAYER2: LstmCellSpec = LstmCellSpec { input_dim: LSTM_HIDDEN, hidden_dim: LSTM_HIDDEN };

#[derive(Debug, Clone, PartialEq)]
pub struct LstmPredictor<T> {
    pub layer1: LstmCell<T>,
    pub layer2: LstmCell<T>,
    pub head: Dense<T>,
}

pub struct LstmCache<T> {
    layer1: Vec<LstmStepCache<T>>,
    layer2: Vec<LstmStepCache<T>>,
    head: DenseCache<T>,
}

impl<T: Scalar> LstmPredictor<T> {
    pub fn zeros() -> Self {
        LstmPredictor {
            layer1: LstmCell::zeros(LAYER1),
            layer2: LstmCell::zeros(LAYER2),
            head: Dense::zeros(LSTM_HIDDEN, 1, Activation::Sigmoid),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut m = Self::zeros();
        for cell in [&mut m.layer1, &mut m.layer2] {
            let spec = cell.spec;
            let h4 = 4 * spec.hidden_dim;
            cell.w_input = glorot_uniform(rng, &[h4, spec.input_dim], spec.input_dim, h4);
            cell.w_hidden = glorot_uniform(rng, &[h4, spec.hidden_dim], spec.hidden_dim, h4);
            for v in &mut cell.bias.data_mut()[spec.hidden_dim..2 * spec.hidden_dim] {
                *v = T::one();
            }
        }
        m.head.weights = glorot_uniform(rng, &[1, LSTM_HIDDEN], LSTM_HIDDEN, 1);
        m
    }

    pub fn sequence_len() -> usize {
        CNN_COLS
    }
}

impl<T: Scalar> Network<T> for LstmPredictor<T> {
    type Cache = LstmCache<T>;

    fn kind(&self) -> ModelKind {
        ModelKind::Lstm
    }

    fn forward(&self, input: &SnapshotInput) -> Result<(T, LstmCache<T>), ModelError> {
        check_geometry(input, CNN_ROWS, CNN_COLS)?;
        let xs: Vec<Vec<T>> = (0..input.cols())
            .map(|j| input.column(j).map(|c| T::of(c.value())).collect())
            .collect();
        let (h1, layer1) = self.layer1.forward_sequence(&xs)?;
        let (h2, layer2) = self.layer2.forward_sequence(&h1)?;
        let (y, head) = self.head.forward(h2.last().expect("sequence is non-empty"))?;
        Ok((y[0], LstmCache { layer1, layer2, head }))
    }

    fn backward(&self, cache: &LstmCache<T>, grad_output: T) -> Result<Vec<Tensor<T>>, ModelError> {
        let gh = self.head.backward(&cache.head, &[grad_output])?;
        let steps = cache.layer2.len();
        let mut dh2 = vec![vec![T::zero(); LSTM_HIDDEN]; steps];
        dh2[steps - 1] = gh.input;
        let (dh1, g2) = self.layer2.backward_sequence(&cache.layer2, &dh2)?;
        let (_, g1) = self.layer1.backward_sequence(&cache.layer1, &dh1)?;
        Ok(vec![g1.w_input, g1.w_hidden, g1.bias, g2.w_input, g2.w_hidden, g2.bias, gh.weights, gh.bias])
    }

    fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("lstm1.w_input", &self.layer1.w_input),
            ("lstm1.w_hidden", &self.layer1.w_hidden),
            ("lstm1.bias", &self.layer1.bias),
            ("lstm2.w_input", &self.layer2.w_input),
            ("lstm2.w_hidden", &self.layer2.w_hidden),
            ("lstm2.bias", &self.layer2.bias),
            ("head.weight", &self.head.weights),
            ("head.bias", &self.head.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let p = |name: &str, tensor| Param { name: name.to_string(), tensor };
        vec![
            p("lstm1.w_input", &mut self.layer1.w_input),
            p("lstm1.w_hidden", &mut self.layer1.w_hidden),
            p("lstm1.bias", &mut self.layer1.bias),
            p("lstm2.w_input", &mut self.layer2.w_input),
            p("lstm2.w_hidden", &mut self.layer2.w_hidden),
            p("lstm2.bias", &mut self.layer2.bias),
            p("head.weight", &mut self.head.weights),
            p("head.bias", &mut self.head.bias),
        ]
    }
}
