#![allow(dead_code)]

use neuram::nn::{Network, OutputTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random network with 1..=3 hidden layers and a random output transform,
/// plus a random input inside `[-2, 2]^d`.
pub fn random_network(seed: u64) -> (Network, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let out = rng.random_range(1..=3);
    let mut sizes = vec![d];
    for _ in 0..rng.random_range(1..=3) {
        sizes.push(rng.random_range(1..=8));
    }
    sizes.push(out);
    let transform = if rng.random_bool(0.5) {
        OutputTransform::Identity
    } else {
        let lo: Vec<f64> = (0..out).map(|_| rng.random_range(-3.0..0.0)).collect();
        let hi = lo.iter().map(|l| l + rng.random_range(0.5..4.0)).collect();
        OutputTransform::BoxSquash { lo, hi }
    };
    let net = Network::glorot_with(sizes, transform, &mut rng).unwrap();
    let x = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    (net, x)
}

/// Largest scaled discrepancy `|ad - fd| / max(|fd|, 1e-3)` between reverse
/// mode partials and central differences, over inputs and weights of every
/// output.
pub fn gradient_discrepancy(net: &Network, x: &[f64]) -> f64 {
    let h = 1e-6;
    let jac = net.grad(x).unwrap();
    let mut worst: f64 = 0.0;
    let score = |ad: f64, fd: f64| (ad - fd).abs() / fd.abs().max(1e-3);
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (net.forward(&xp).unwrap(), net.forward(&xm).unwrap());
        for o in 0..fp.len() {
            worst = worst.max(score(jac.wrt_input[o][i], (fp[o] - fm[o]) / (2.0 * h)));
        }
    }
    let w = net.weights().to_vec();
    let mut probe = net.clone();
    for k in 0..w.len() {
        let mut wp = w.clone();
        wp[k] += h;
        probe.set_weights(&wp).unwrap();
        let fp = probe.forward(x).unwrap();
        wp[k] -= 2.0 * h;
        probe.set_weights(&wp).unwrap();
        let fm = probe.forward(x).unwrap();
        for o in 0..fp.len() {
            worst = worst.max(score(jac.wrt_weights[o][k], (fp[o] - fm[o]) / (2.0 * h)));
        }
    }
    worst
}
