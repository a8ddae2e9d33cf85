//! Central finite differences against every analytic gradient.

#![allow(dead_code)]

use congestion_core::models::{CnnPredictor, ContextMode, LstmPredictor, Network};
use congestion_core::nn::{
    loss_backward, loss_forward, Activation, Conv2d, ConvLayerSpec, Dense, LossBatch, LossKind, LstmCell, LstmCellSpec,
    Tensor,
};
use congestion_core::{SnapshotInput, TrafficCondition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
pub const SEEDS: u64 = 20;

/// Largest relative error seen, with a description of where.
#[derive(Debug, Default)]
pub struct Worst {
    pub error: f64,
    pub at: String,
    pub checked: usize,
}

impl Worst {
    fn record(&mut self, e: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        if e > self.error || e.is_nan() {
            self.error = e;
            self.at = at();
        }
    }
}

/// Relative error; the denominator floor keeps near-zero gradients from
/// turning rounding noise into huge ratios.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks `analytic` against central differences of `objective` over every
/// entry of the buffer `get` exposes. `valid` can veto a coordinate whose
/// perturbation crosses a kink.
fn check<M>(
    worst: &mut Worst,
    label: &str,
    model: &mut M,
    analytic: &[f64],
    get: impl Fn(&mut M) -> &mut [f64],
    objective: impl Fn(&M) -> f64,
    valid: impl Fn(&M, &M) -> bool,
) where
    M: Clone,
{
    let n = get(model).len();
    assert_eq!(n, analytic.len(), "{label}: gradient length");
    for i in 0..n {
        let orig = get(model)[i];
        let mut plus = model.clone();
        get(&mut plus)[i] = orig + H;
        let mut minus = model.clone();
        get(&mut minus)[i] = orig - H;
        if !valid(&plus, &minus) {
            continue;
        }
        let numeric = (objective(&plus) - objective(&minus)) / (2.0 * H);
        worst.record(rel_err(analytic[i], numeric), || format!("{label}[{i}]: analytic {} numeric {numeric}", analytic[i]));
    }
}

#[derive(Clone)]
struct ConvCase {
    layer: Conv2d<f64>,
    input: Tensor<f64>,
    probe: Vec<f64>,
}

impl ConvCase {
    fn out(&self) -> Vec<f64> {
        self.layer.forward(&self.input).unwrap().0.into_data()
    }
    fn objective(&self) -> f64 {
        dot(&self.out(), &self.probe)
    }
}

fn same_relu_pattern(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

pub fn conv_layer() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for act in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
            let spec = ConvLayerSpec { filter_size: 3, num_filters: 3, in_channels: 2 };
            let weights = random_tensor(&mut rng, &spec.weight_shape(), 0.5);
            let bias = random_tensor(&mut rng, &[3], 0.2);
            let layer = Conv2d::new(spec, weights, bias, act).unwrap();
            let input = random_tensor(&mut rng, &[6, 5, 2], 1.0);
            let probe: Vec<f64> = (0..4 * 3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut case = ConvCase { layer, input, probe };
            let (out, cache) = case.layer.forward(&case.input).unwrap();
            let g_out = Tensor::new(out.shape().to_vec(), case.probe.clone()).unwrap();
            let g = case.layer.backward(&cache, &g_out).unwrap();
            let valid = |p: &ConvCase, m: &ConvCase| act != Activation::Relu || same_relu_pattern(&p.out(), &m.out());
            let tag = format!("seed {seed} {act:?}");
            check(&mut worst, &format!("{tag} conv.w"), &mut case, g.weights.data(), |c| c.layer.weights.data_mut(), ConvCase::objective, valid);
            check(&mut worst, &format!("{tag} conv.b"), &mut case, g.bias.data(), |c| c.layer.bias.data_mut(), ConvCase::objective, valid);
            check(&mut worst, &format!("{tag} conv.x"), &mut case, g.input.data(), |c| c.input.data_mut(), ConvCase::objective, valid);
        }
    }
    worst
}

#[derive(Clone)]
struct DenseCase {
    layer: Dense<f64>,
    input: Vec<f64>,
    probe: Vec<f64>,
}

impl DenseCase {
    fn out(&self) -> Vec<f64> {
        self.layer.forward(&self.input).unwrap().0
    }
    fn objective(&self) -> f64 {
        dot(&self.out(), &self.probe)
    }
}

pub fn dense_layer() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for act in [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
            let (ni, no) = (7, 4);
            let layer = Dense::new(random_tensor(&mut rng, &[no, ni], 0.6), random_tensor(&mut rng, &[no], 0.3), act).unwrap();
            let input: Vec<f64> = (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect();
            let probe: Vec<f64> = (0..no).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut case = DenseCase { layer, input, probe };
            let (_, cache) = case.layer.forward(&case.input).unwrap();
            let g = case.layer.backward(&cache, &case.probe).unwrap();
            let valid = |p: &DenseCase, m: &DenseCase| act != Activation::Relu || same_relu_pattern(&p.out(), &m.out());
            let tag = format!("seed {seed} {act:?}");
            check(&mut worst, &format!("{tag} dense.w"), &mut case, g.weights.data(), |c| c.layer.weights.data_mut(), DenseCase::objective, valid);
            check(&mut worst, &format!("{tag} dense.b"), &mut case, g.bias.data(), |c| c.layer.bias.data_mut(), DenseCase::objective, valid);
            check(&mut worst, &format!("{tag} dense.x"), &mut case, &g.input, |c| c.input.as_mut_slice(), DenseCase::objective, valid);
        }
    }
    worst
}

#[derive(Clone)]
struct LstmCase {
    cell: LstmCell<f64>,
    xs: Vec<Vec<f64>>,
    probes: Vec<Vec<f64>>,
}

impl LstmCase {
    fn objective(&self) -> f64 {
        let (hs, _) = self.cell.forward_sequence(&self.xs).unwrap();
        hs.iter().zip(&self.probes).map(|(h, p)| dot(h, p)).sum()
    }
}

pub fn lstm_cell_bptt() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let spec = LstmCellSpec { input_dim: 3, hidden_dim: 4 };
        let cell = LstmCell::new(
            spec,
            random_tensor(&mut rng, &[16, 3], 0.7),
            random_tensor(&mut rng, &[16, 4], 0.7),
            random_tensor(&mut rng, &[16], 0.3),
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let probes: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut case = LstmCase { cell, xs, probes };
        let (_, caches) = case.cell.forward_sequence(&case.xs).unwrap();
        let (dxs, g) = case.cell.backward_sequence(&caches, &case.probes).unwrap();
        let ok = |_: &LstmCase, _: &LstmCase| true;
        let tag = format!("seed {seed}");
        check(&mut worst, &format!("{tag} lstm.w_input"), &mut case, g.w_input.data(), |c| c.cell.w_input.data_mut(), LstmCase::objective, ok);
        check(&mut worst, &format!("{tag} lstm.w_hidden"), &mut case, g.w_hidden.data(), |c| c.cell.w_hidden.data_mut(), LstmCase::objective, ok);
        check(&mut worst, &format!("{tag} lstm.bias"), &mut case, g.bias.data(), |c| c.cell.bias.data_mut(), LstmCase::objective, ok);
        for t in 0..5 {
            check(&mut worst, &format!("{tag} lstm.x{t}"), &mut case, &dxs[t], |c| c.xs[t].as_mut_slice(), LstmCase::objective, ok);
        }
    }
    worst
}

#[derive(Clone)]
struct LossCase {
    preds: Vec<f64>,
    targets: Vec<f64>,
    kind: LossKind,
}

impl LossCase {
    fn objective(&self) -> f64 {
        loss_forward(self.kind, &LossBatch::new(&self.preds, &self.targets).unwrap())
    }
}

pub fn loss() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        for kind in [LossKind::Strict, LossKind::Rmse] {
            let n = 1 + (seed as usize % 9);
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let preds: Vec<f64> = targets
                .iter()
                .map(|&y| loop {
                    let x: f64 = rng.random_range(0.0..1.0);
                    if (x - y).abs() >= 1e-3 {
                        break x;
                    }
                })
                .collect();
            let mut case = LossCase { preds, targets, kind };
            let g = loss_backward(kind, &LossBatch::new(&case.preds, &case.targets).unwrap()).unwrap();
            check(
                &mut worst,
                &format!("seed {seed} {kind}"),
                &mut case,
                &g,
                |c| c.preds.as_mut_slice(),
                LossCase::objective,
                |_, _| true,
            );
        }
    }
    worst
}

fn random_input(rng: &mut ChaCha8Rng) -> SnapshotInput {
    let values = (0..45).map(|_| TrafficCondition::new(rng.random_range(0.0..1.0)).unwrap()).collect();
    SnapshotInput::new(9, 5, values, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap()
}

/// Whole-network check on a random sample of parameters per seed.
fn check_network<N: Network<f64>>(worst: &mut Worst, label: &str, model: &N, input: &SnapshotInput, rng: &mut ChaCha8Rng, samples: usize) {
    let (_, cache) = model.forward(input).unwrap();
    let grads = model.backward(&cache, 1.0).unwrap();
    let names: Vec<&str> = model.params().iter().map(|(n, _)| *n).collect();
    for _ in 0..samples {
        let p = rng.random_range(0..grads.len());
        let i = rng.random_range(0..grads[p].len());
        let eval = |delta: f64| {
            let mut m = model.clone();
            m.params_mut()[p].tensor.data_mut()[i] += delta;
            m.predict(input).unwrap()
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        let e = rel_err(grads[p].data()[i], numeric);
        // A ReLU flipping under the perturbation makes the difference
        // quotient meaningless; it shows up as a large second difference.
        let curvature = (eval(H) - 2.0 * eval(0.0) + eval(-H)).abs() / (H * H);
        if curvature > 1e3 {
            continue;
        }
        worst.record(e, || format!("{label} {}[{i}]: analytic {} numeric {numeric}", names[p], grads[p].data()[i]));
    }
}

pub fn whole_models() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let ctx = if seed % 2 == 0 { ContextMode::None } else { ContextMode::Concat };
        let cnn = CnnPredictor::<f64>::init(ctx, &mut rng);
        let lstm = LstmPredictor::<f64>::init(&mut rng);
        let input = random_input(&mut rng);
        check_network(&mut worst, &format!("seed {seed} cnn"), &cnn, &input, &mut rng, 40);
        check_network(&mut worst, &format!("seed {seed} lstm"), &lstm, &input, &mut rng, 40);
    }
    worst
}
