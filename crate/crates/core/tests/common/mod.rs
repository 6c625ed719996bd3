#![allow(dead_code)]

use fedpgn_core::data::Dataset;
use fedpgn_core::numerics::{Activation, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random rows with uniformly drawn labels.
pub fn random_dataset(rng: &mut impl Rng, n: usize, n_in: usize, n_cls: usize) -> Dataset {
    let rows = (0..n).map(|_| gaussian(rng, n_in, 1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..n_cls)).collect();
    Dataset::from_rows(rows, labels, n_cls).unwrap()
}

pub fn random_model(rng: &mut impl Rng) -> Model {
    let n_in = rng.random_range(2..7);
    let n_cls = rng.random_range(2..5);
    if rng.random_bool(0.5) {
        Model::softmax(n_in, n_cls)
    } else {
        Model::mlp(n_in, rng.random_range(2..6), n_cls, Activation::Tanh)
    }
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn assert_bits_eq(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert_eq!(x.to_bits(), y.to_bits(), "coordinate {i}: {x} vs {y}");
    }
}

const MC_CHUNKS: usize = 64;

/// Monte-Carlo estimate of `E_{z~N(0,sigma^2)}[(1 - q + q exp((2z - 1) / (2 sigma^2)))^alpha]`
/// divided by `exp(log_scale)`, with its standard error in the same units.
///
/// Draws come from the equal-weight mixture of `N(k, sigma^2)`, `k = 0..=ceil(alpha)`,
/// and are reweighted by `phi_0 / proposal`. The integrand's mass sits near
/// those centres, so large orders are sampled where they matter while the
/// `k = 0` component keeps the weights bounded.
pub fn monte_carlo_moment(q: f64, sigma: f64, alpha: f64, log_scale: f64, samples: usize, seed: u64) -> (f64, f64) {
    let centres: Vec<f64> = (0..=alpha.ceil() as usize).map(|k| k as f64).collect();
    let var = sigma * sigma;
    let log_phi = |z: f64, m: f64| -(z - m) * (z - m) / (2.0 * var);
    let log_proposal = |z: f64| {
        let logs: Vec<f64> = centres.iter().map(|&m| log_phi(z, m)).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + (logs.iter().map(|l| (l - top).exp()).sum::<f64>() / centres.len() as f64).ln()
    };
    let per_chunk = samples / MC_CHUNKS;
    let (sum, sum_sq) = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..per_chunk {
                let m = centres[rng.random_range(0..centres.len())];
                let z = m + sigma * rng.sample::<f64, _>(StandardNormal);
                let log_ratio = (2.0 * z - 1.0) / (2.0 * var);
                let log_base = ((1.0 - q).ln()).max(q.ln() + log_ratio)
                    + (1.0 + (-((1.0 - q).ln() - q.ln() - log_ratio).abs()).exp()).ln();
                let v = (alpha * log_base + log_phi(z, 0.0) - log_proposal(z) - log_scale).exp();
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = (per_chunk * MC_CHUNKS) as f64;
    let mean = sum / n;
    let var_hat = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var_hat / n).sqrt())
}

/// Exact moment for integer orders via the binomial expansion
/// `sum_k C(a,k) (1-q)^(a-k) q^k exp(k(k-1) / (2 sigma^2))`, in log space.
pub fn binomial_log_moment(q: f64, sigma: f64, alpha: u32) -> f64 {
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    let mut log_binom = 0.0;
    for k in 0..=alpha {
        if k > 0 {
            log_binom += ((alpha - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        let log_keep = if alpha == k { 0.0 } else { (alpha - k) as f64 * (1.0 - q).ln() };
        terms.push(log_binom + log_keep + kf * q.ln() + kf * (kf - 1.0) / (2.0 * sigma * sigma));
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
