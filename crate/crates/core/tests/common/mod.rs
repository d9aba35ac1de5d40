//! Helpers shared by the integration test binaries.
#![allow(dead_code)]

use manifold_lab::nn::{mse, mse_grad, BiasPlacement, LabeledSample, ReluNetwork};
use manifold_lab::rng::LabRng;
use rand::Rng;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn gaussian_vec(dim: usize, rng: &mut LabRng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

pub fn random_batch(dim: usize, count: usize, rng: &mut LabRng) -> Vec<LabeledSample> {
    (0..count).map(|_| LabeledSample { x: gaussian_vec(dim, rng), y: rng.sample(rand_distr::StandardNormal) }).collect()
}

/// Largest relative gap between the analytic gradient and central
/// differences with step `h`. The denominator is `max(|analytic|, |numeric|, 1e-3)`.
pub fn gradient_check(net: &ReluNetwork, batch: &[LabeledSample], h: f64) -> f64 {
    let (_, grad) = mse_grad(net, batch).unwrap();
    let analytic = grad.flatten();
    let params = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_params(&p).unwrap();
        let up = mse(&probe, batch);
        p[i] = params[i] - h;
        probe.set_params(&p).unwrap();
        let down = mse(&probe, batch);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Count of pairs violating `|f(x) - f(x')| <= L |x - x'|`, sampling inputs
/// from a Gaussian of the given scale.
pub fn lipschitz_violations(net: &ReluNetwork, pairs: usize, scale: f64, rng: &mut LabRng) -> usize {
    let bound = net.lipschitz_bound();
    let dim = net.input_dim();
    (0..pairs)
        .filter(|_| {
            let x: Vec<f64> = gaussian_vec(dim, rng).iter().map(|v| v * scale).collect();
            // Half the pairs are close, where the ratio is largest.
            let r = if rng.random::<bool>() { 1e-3 } else { scale };
            let y: Vec<f64> = x.iter().zip(gaussian_vec(dim, rng)).map(|(a, b)| a + r * b).collect();
            (net.eval(&x) - net.eval(&y)).abs() > bound * dist(&x, &y) * (1.0 + 1e-12) + 1e-15
        })
        .count()
}

pub fn random_net(input: usize, hidden: &[usize], rng: &mut LabRng) -> ReluNetwork {
    let placement = if rng.random::<bool>() { BiasPlacement::AfterActivation } else { BiasPlacement::BeforeActivation };
    ReluNetwork::random_uniform(input, hidden, placement, rng).unwrap()
}
