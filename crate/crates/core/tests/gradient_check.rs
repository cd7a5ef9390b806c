//! Analytic LSTM gradients against central finite differences.

use evosts::lstm::{backward, forward, init_weights, mse_loss, LstmDims, LstmWeights};
use evosts::rng;
use rand::Rng;

const STEP: f64 = 1e-5;

fn loss_at(weights: &LstmWeights, x: &[f64], target: &[f64]) -> f64 {
    let (y, _) = forward(weights, x).unwrap();
    mse_loss(&y, target).unwrap()
}

/// Central differences over every parameter; independent of `backward`.
fn numeric_gradient(weights: &LstmWeights, x: &[f64], target: &[f64]) -> Vec<f64> {
    let mut probe = weights.clone();
    (0..weights.as_flat().len())
        .map(|k| {
            let orig = probe.as_flat()[k];
            probe.as_flat_mut()[k] = orig + STEP;
            let up = loss_at(&probe, x, target);
            probe.as_flat_mut()[k] = orig - STEP;
            let down = loss_at(&probe, x, target);
            probe.as_flat_mut()[k] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|)`, with differences below 1e-9 treated as
/// agreement so exactly-zero gradients (recurrent block, forget gate) do
/// not divide rounding noise by zero.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-9 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

pub fn max_relative_error(seed: u64) -> f64 {
    let dims = LstmDims::new(8, 4, 3).unwrap();
    let weights = init_weights(&dims, seed);
    let mut r = rng::stream(seed, 99);
    let x: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, cache) = forward(&weights, &x).unwrap();
    let analytic = backward(&weights, &x, &target, &cache).unwrap();
    let numeric = numeric_gradient(&weights, &x, &target);
    analytic
        .as_flat()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[test]
fn analytic_matches_finite_differences() {
    for seed in 0..20 {
        let err = max_relative_error(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn recurrent_and_forget_gradients_vanish() {
    use evosts::lstm::Gate;
    let dims = LstmDims::new(5, 3, 2).unwrap();
    let w = init_weights(&dims, 4);
    let x = [0.2, -0.4, 0.9, 0.1, -0.3];
    let (_, cache) = forward(&w, &x).unwrap();
    let g = backward(&w, &x, &[1.0, -1.0], &cache).unwrap();
    assert!(g.gate_bias(Gate::Forget).iter().all(|&v| v == 0.0));
    for gate in Gate::ALL {
        let m = g.gate_weight(gate);
        for row in m.rows() {
            assert!(row.iter().skip(5).all(|&v| v == 0.0));
        }
    }
}
