//! Both predictors against straightforward nested-loop reimplementations.

use congestion_core::models::{load, save, AnyModel, CnnPredictor, ContextMode, LstmPredictor, ModelKind, Network};
use congestion_core::{SnapshotInput, TrafficCondition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(rng: &mut ChaCha8Rng) -> SnapshotInput {
    let values = (0..45).map(|_| TrafficCondition::new(rng.random_range(0.0..1.0)).unwrap()).collect();
    SnapshotInput::new(9, 5, values, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `x[h][w][c]` convolved with weights `[f][a][b][c]`, valid padding, stride 1.
fn naive_conv(x: &[Vec<Vec<f64>>], w: &[f64], bias: &[f64], k: usize) -> Vec<Vec<Vec<f64>>> {
    let (h, wd, c) = (x.len(), x[0].len(), x[0][0].len());
    let nf = bias.len();
    let mut out = vec![vec![vec![0.0; nf]; wd - k + 1]; h - k + 1];
    for i in 0..=h - k {
        for j in 0..=wd - k {
            for f in 0..nf {
                let mut s = bias[f];
                for a in 0..k {
                    for b in 0..k {
                        for ch in 0..c {
                            s += w[((f * k + a) * k + b) * c + ch] * x[i + a][j + b][ch];
                        }
                    }
                }
                out[i][j][f] = relu(s);
            }
        }
    }
    out
}

fn naive_dense(x: &[f64], w: &[f64], b: &[f64], act: fn(f64) -> f64) -> Vec<f64> {
    (0..b.len()).map(|o| act(b[o] + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>())).collect()
}

fn naive_cnn(m: &CnnPredictor<f64>, input: &SnapshotInput) -> f64 {
    let x: Vec<Vec<Vec<f64>>> = (0..9).map(|r| (0..5).map(|c| vec![input.get(r, c).value()]).collect()).collect();
    let a1 = naive_conv(&x, m.conv1.weights.data(), m.conv1.bias.data(), 3);
    assert_eq!((a1.len(), a1[0].len(), a1[0][0].len()), (7, 3, 64));
    let a2 = naive_conv(&a1, m.conv2.weights.data(), m.conv2.bias.data(), 3);
    assert_eq!((a2.len(), a2[0].len(), a2[0][0].len()), (5, 1, 64));
    let mut flat: Vec<f64> = a2.iter().flatten().flatten().copied().collect();
    assert_eq!(flat.len(), 320);
    if m.context_mode == ContextMode::Concat {
        flat.extend([input.day_value, input.time_value]);
    }
    let h = naive_dense(&flat, m.fc1.weights.data(), m.fc1.bias.data(), relu);
    naive_dense(&h, m.fc2.weights.data(), m.fc2.bias.data(), sigmoid)[0]
}

/// Gates stacked as input, forget, output, candidate.
fn naive_lstm_layer(xs: &[Vec<f64>], wi: &[f64], wh: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    let nh = b.len() / 4;
    let ni = xs[0].len();
    let (mut h, mut c) = (vec![0.0; nh], vec![0.0; nh]);
    let mut out = Vec::new();
    for x in xs {
        let z = |r: usize| b[r] + (0..ni).map(|k| wi[r * ni + k] * x[k]).sum::<f64>() + (0..nh).map(|k| wh[r * nh + k] * h[k]).sum::<f64>();
        let mut nh_ = vec![0.0; nh];
        let mut nc = vec![0.0; nh];
        for u in 0..nh {
            let i = sigmoid(z(u));
            let f = sigmoid(z(nh + u));
            let o = sigmoid(z(2 * nh + u));
            let g = z(3 * nh + u).tanh();
            nc[u] = f * c[u] + i * g;
            nh_[u] = o * nc[u].tanh();
        }
        h = nh_;
        c = nc;
        out.push(h.clone());
    }
    out
}

fn naive_lstm(m: &LstmPredictor<f64>, input: &SnapshotInput) -> f64 {
    let xs: Vec<Vec<f64>> = (0..5).map(|c| (0..9).map(|r| input.get(r, c).value()).collect()).collect();
    let h1 = naive_lstm_layer(&xs, m.layer1.w_input.data(), m.layer1.w_hidden.data(), m.layer1.bias.data());
    let h2 = naive_lstm_layer(&h1, m.layer2.w_input.data(), m.layer2.w_hidden.data(), m.layer2.bias.data());
    naive_dense(h2.last().unwrap(), m.head.weights.data(), m.head.bias.data(), sigmoid)[0]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

#[test]
fn cnn_matches_nested_loops() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ctx in [ContextMode::None, ContextMode::Concat] {
            let m = CnnPredictor::<f64>::init(ctx, &mut rng);
            let input = random_input(&mut rng);
            let (got, want) = (m.predict(&input).unwrap(), naive_cnn(&m, &input));
            assert!(close(got, want), "seed {seed} {ctx:?}: {got} vs {want}");
        }
    }
}

#[test]
fn lstm_matches_nested_loops() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let m = LstmPredictor::<f64>::init(&mut rng);
        let input = random_input(&mut rng);
        let (got, want) = (m.predict(&input).unwrap(), naive_lstm(&m, &input));
        assert!(close(got, want), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn lstm_reads_columns_in_time_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = LstmPredictor::<f64>::init(&mut rng);
    let input = random_input(&mut rng);
    let reversed: Vec<TrafficCondition> =
        (0..9).flat_map(|r| (0..5).rev().map(move |c| (r, c))).map(|(r, c)| input.get(r, c)).collect();
    let rev = SnapshotInput::new(9, 5, reversed, input.day_value, input.time_value).unwrap();
    assert_ne!(m.predict(&input).unwrap(), m.predict(&rev).unwrap());
}

#[test]
fn f32_models_track_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let m64 = AnyModel::<f64>::init(ModelKind::Cnn, ContextMode::None, &mut rng);
    let m32 = AnyModel::<f32>::from_params(&m64.to_params(0, "")).unwrap();
    for _ in 0..5 {
        let input = random_input(&mut rng);
        let (a, b) = (m64.predict(&input).unwrap(), m32.predict(&input).unwrap() as f64);
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn save_load_preserves_predictions_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (kind, ctx) in [(ModelKind::Cnn, ContextMode::None), (ModelKind::Cnn, ContextMode::Concat), (ModelKind::Lstm, ContextMode::None)] {
        let m = AnyModel::<f64>::init(kind, ctx, &mut rng);
        let back = AnyModel::<f64>::from_params(&load(&save(&m.to_params(5, "seed = 5"))).unwrap()).unwrap();
        for _ in 0..100 {
            let input = random_input(&mut rng);
            assert_eq!(m.predict(&input).unwrap().to_bits(), back.predict(&input).unwrap().to_bits());
        }
    }
}
