//! Backpropagation against central finite differences, in f64.

use depthmend_nn::conv::Geometry;
use depthmend_nn::model::{build_model, DenoiserModel, NetworkConfig};
use depthmend_nn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(model: &DenoiserModel<f64>, x: &Tensor<f64>, target: &[f64]) -> f64 {
    let (pred, _) = model.forward_aligned(x, false).unwrap();
    pred.data.iter().zip(target).map(|(p, t)| 0.5 * (p - t) * (p - t)).sum()
}

fn set(m: &mut DenoiserModel<f64>, k: usize, is_bias: bool, i: usize, delta: f64) {
    let l = &mut m.layers_mut()[k];
    if is_bias {
        l.bias[i] += delta;
    } else {
        l.weight[i] += delta;
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let cfg = NetworkConfig::default();
    let mut model = build_model::<f64>(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // Small positive biases keep most ReLUs away from their kink.
    for l in model.layers_mut() {
        for b in &mut l.bias {
            *b = rng.random_range(0.01..0.05);
        }
    }
    // The last layer starts at zero, which would hide every upstream gradient.
    for w in &mut model.layers_mut().last_mut().unwrap().weight {
        *w = rng.random_range(-0.05..0.05);
    }
    let (h, w) = (32, 32);
    let x = Tensor::from_vec(h, w, 3, (0..h * w * 3).map(|_| rng.random_range(0.2..0.8)).collect());
    let target: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.2..0.8)).collect();

    let (pred, trace) = model.forward_aligned(&x, true).unwrap();
    let dpred = Tensor::from_vec(h, w, 1, pred.data.iter().zip(&target).map(|(p, t)| p - t).collect());
    let mut grads = model.zero_grads();
    model.backward(&trace, &dpred, &mut grads);

    let eps = 1e-6;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    // Cover every geometry and both parameter kinds.
    let picks: Vec<(usize, bool)> = (0..model.layers().len()).step_by(2).map(|k| (k, k % 4 == 2)).collect();
    let geometries: Vec<Geometry> = picks.iter().map(|&(k, _)| model.layers()[k].geometry).collect();
    assert!(geometries.contains(&Geometry::Down) && geometries.contains(&Geometry::Up));
    for (k, is_bias) in picks {
        let n = if is_bias { model.layers()[k].bias.len() } else { model.layers()[k].weight.len() };
        let i = rng.random_range(0..n);
        let analytic = if is_bias { grads[k].bias[i] } else { grads[k].weight[i] };
        let up = {
            set(&mut model, k, is_bias, i, eps);
            loss(&model, &x, &target)
        };
        let down = {
            set(&mut model, k, is_bias, i, -2.0 * eps);
            loss(&model, &x, &target)
        };
        set(&mut model, k, is_bias, i, eps);
        let numeric = (up - down) / (2.0 * eps);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-7 { 0.0 } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
        assert!(rel < 1e-3, "layer {k} {} {i}: analytic {analytic} numeric {numeric}", if is_bias { "bias" } else { "weight" });
        checked += 1;
    }
    assert!(checked >= 10);
    eprintln!("checked {checked} parameters, worst relative error {worst:.2e}");
}
