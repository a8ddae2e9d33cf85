//! Convolutional predictor:
//! `9x5x1 -conv3-> 7x3x64 -conv3-> 5x1x64 -flatten-> 320 (+2) -> 32 -> 1`.
//! ReLU after both convolutions and the hidden dense layer, sigmoid output.

use rand::Rng;

use super::{check_geometry, ContextMode, ModelError, ModelKind, Network};
use crate::nn::{glorot_uniform, Activation, Conv2d, ConvCache, ConvLayerSpec, Dense, DenseCache, Param, Tensor};
use crate::types::SnapshotInput;
use crate::Scalar;

pub const CNN_ROWS: usize = 9;
pub const CNN_COLS: usize = 5;
const FILTER: usize = 3;
const FILTERS: usize = 64;
const HIDDEN: usize = 32;

const CONV1: ConvLayerSpec = ConvLayerSpec { filter_size: FILTER, num_filters: FILTERS, in_channels: 1 };
const CONV2: ConvLayerSpec = ConvLayerSpec { filter_size: FILTER, num_filters: FILTERS, in_channels: FILTERS };

#[derive(Debug, Clone, PartialEq)]
pub struct CnnPredictor<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
    pub context_mode: ContextMode,
}

pub struct CnnCache<T> {
    conv1: ConvCache<T>,
    conv2: ConvCache<T>,
    fc1: DenseCache<T>,
    fc2: DenseCache<T>,
}

impl<T: Scalar> CnnPredictor<T> {
    /// Width of the flattened convolution output, `5 * 1 * 64`.
    pub fn conv_features() -> usize {
        let [h, w, _] = CONV1.output_shape(CNN_ROWS, CNN_COLS).expect("fits");
        let [h, w, f] = CONV2.output_shape(h, w).expect("fits");
        h * w * f
    }

    pub fn fc1_inputs(context_mode: ContextMode) -> usize {
        Self::conv_features()
            + match context_mode {
                ContextMode::None => 0,
                ContextMode::Concat => 2,
            }
    }

    pub fn zeros(context_mode: ContextMode) -> Self {
        CnnPredictor {
            conv1: Conv2d::zeros(CONV1, Activation::Relu),
            conv2: Conv2d::zeros(CONV2, Activation::Relu),
            fc1: Dense::zeros(Self::fc1_inputs(context_mode), HIDDEN, Activation::Relu),
            fc2: Dense::zeros(HIDDEN, 1, Activation::Sigmoid),
            context_mode,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(context_mode: ContextMode, rng: &mut R) -> Self {
        let mut m = Self::zeros(context_mode);
        let area = FILTER * FILTER;
        m.conv1.weights = glorot_uniform(rng, &CONV1.weight_shape(), area * CONV1.in_channels, area * FILTERS);
        m.conv2.weights = glorot_uniform(rng, &CONV2.weight_shape(), area * CONV2.in_channels, area * FILTERS);
        let fc1_in = Self::fc1_inputs(context_mode);
        m.fc1.weights = glorot_uniform(rng, &[HIDDEN, fc1_in], fc1_in, HIDDEN);
        m.fc2.weights = glorot_uniform(rng, &[1, HIDDEN], HIDDEN, 1);
        m
    }

    /// Layer output shapes, input first.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let [h1, w1, f1] = CONV1.output_shape(CNN_ROWS, CNN_COLS).expect("fits");
        let [h2, w2, f2] = CONV2.output_shape(h1, w1).expect("fits");
        vec![
            vec![CNN_ROWS, CNN_COLS],
            vec![h1, w1, f1],
            vec![h2, w2, f2],
            vec![self.fc1.inputs()],
            vec![self.fc1.outputs()],
            vec![self.fc2.outputs()],
        ]
    }
}

impl<T: Scalar> Network<T> for CnnPredictor<T> {
    type Cache = CnnCache<T>;

    fn kind(&self) -> ModelKind {
        ModelKind::Cnn
    }

    fn context_mode(&self) -> ContextMode {
        self.context_mode
    }

    fn forward(&self, input: &SnapshotInput) -> Result<(T, CnnCache<T>), ModelError> {
        check_geometry(input, CNN_ROWS, CNN_COLS)?;
        let x = Tensor::new(
            vec![CNN_ROWS, CNN_COLS, 1],
            input.values().iter().map(|c| T::of(c.value())).collect(),
        )?;
        let (a1, conv1) = self.conv1.forward(&x)?;
        let (a2, conv2) = self.conv2.forward(&a1)?;
        let mut flat = a2.into_data();
        if self.context_mode == ContextMode::Concat {
            flat.push(T::of(input.day_value));
            flat.push(T::of(input.time_value));
        }
        let (h, fc1) = self.fc1.forward(&flat)?;
        let (y, fc2) = self.fc2.forward(&h)?;
        Ok((y[0], CnnCache { conv1, conv2, fc1, fc2 }))
    }

    fn backward(&self, cache: &CnnCache<T>, grad_output: T) -> Result<Vec<Tensor<T>>, ModelError> {
        let g2 = self.fc2.backward(&cache.fc2, &[grad_output])?;
        let g1 = self.fc1.backward(&cache.fc1, &g2.input)?;
        let conv_out = cache.conv2.output().shape().to_vec();
        let d_conv2 = Tensor::new(conv_out, g1.input[..Self::conv_features()].to_vec())?;
        let c2 = self.conv2.backward(&cache.conv2, &d_conv2)?;
        let c1 = self.conv1.backward(&cache.conv1, &c2.input)?;
        Ok(vec![c1.weights, c1.bias, c2.weights, c2.bias, g1.weights, g1.bias, g2.weights, g2.bias])
    }

    fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("conv1.weight", &self.conv1.weights),
            ("conv1.bias", &self.conv1.bias),
            ("conv2.weight", &self.conv2.weights),
            ("conv2.bias", &self.conv2.bias),
            ("fc1.weight", &self.fc1.weights),
            ("fc1.bias", &self.fc1.bias),
            ("fc2.weight", &self.fc2.weights),
            ("fc2.bias", &self.fc2.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<Param<'_, T>> {
        let p = |name: &str, tensor| Param { name: name.to_string(), tensor };
        vec![
            p("conv1.weight", &mut self.conv1.weights),
            p("conv1.bias", &mut self.conv1.bias),
            p("conv2.weight", &mut self.conv2.weights),
            p("conv2.bias", &mut self.conv2.bias),
            p("fc1.weight", &mut self.fc1.weights),
            p("fc1.bias", &mut self.fc1.bias),
            p("fc2.weight", &mut self.fc2.weights),
            p("fc2.bias", &mut self.fc2.bias),
        ]
    }
}
