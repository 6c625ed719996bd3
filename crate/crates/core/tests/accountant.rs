mod common;

use common::{binomial_log_moment, monte_carlo_moment};
use fedpgn_core::accountant::{
    alpha_grid, calibrate_sigma, compose_and_convert, conversion_offset, log_moment, rdp_per_round, MixtureReading,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MC_SAMPLES: usize = 10_000_000;

#[test]
fn full_participation_is_the_gaussian_closed_form() {
    for sigma in [0.5, 0.8, 2.0] {
        for alpha in alpha_grid() {
            let rdp = rdp_per_round(1.0, sigma, alpha).unwrap();
            let exact = alpha / (2.0 * sigma * sigma);
            assert!(((rdp - exact) / exact).abs() <= 1e-6, "sigma={sigma} alpha={alpha}: {rdp} vs {exact}");
        }
    }
}

#[test]
fn quadrature_agrees_with_monte_carlo() {
    let mut r = ChaCha8Rng::seed_from_u64(51);
    let mut triples = vec![(0.1, 0.8, 8.0)];
    while triples.len() < 10 {
        triples.push((r.random_range(0.01..0.5), r.random_range(0.5..2.0), r.random_range(1.25..32.0)));
    }
    for (i, &(q, sigma, alpha)) in triples.iter().enumerate() {
        let log_quad = log_moment(q, sigma, alpha, MixtureReading::Standard).unwrap();
        let (mc, se) = monte_carlo_moment(q, sigma, alpha, log_quad, MC_SAMPLES, 100 + i as u64);
        assert!((1.0 - mc).abs() <= 3.0 * se, "q={q} sigma={sigma} alpha={alpha}: ratio {mc} +- {se}");
    }
}

#[test]
fn integer_orders_match_binomial_expansion() {
    for (q, sigma) in [(0.1, 0.8), (0.01, 0.5), (0.5, 1.5), (0.9, 3.0)] {
        for alpha in [2u32, 3, 7, 16, 32, 64] {
            let quad = log_moment(q, sigma, alpha as f64, MixtureReading::Standard).unwrap();
            let exact = binomial_log_moment(q, sigma, alpha);
            assert!((quad - exact).abs() <= 1e-9 * exact.abs().max(1e-3), "q={q} sigma={sigma} alpha={alpha}");
        }
    }
}

#[test]
fn composed_epsilon_matches_oracle_pipeline() {
    let (q, sigma, delta, rounds) = (0.1, 0.8, 1.0 / 500.0, 300u64);
    let grid = alpha_grid();
    let oracle = grid
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let log_m = if alpha.fract() == 0.0 {
                binomial_log_moment(q, sigma, alpha as u32)
            } else {
                monte_carlo_moment(q, sigma, alpha, 0.0, 2_000_000, 500 + i as u64).0.ln()
            };
            rounds as f64 * log_m / (alpha - 1.0) + conversion_offset(alpha, delta)
        })
        .fold(f64::INFINITY, f64::min);
    let got = compose_and_convert(q, sigma, delta, rounds, &grid).unwrap();
    assert!(((got.epsilon - oracle) / oracle).abs() <= 0.01, "{} vs oracle {oracle}", got.epsilon);
}

#[test]
fn epsilon_is_monotone_in_sigma_rate_and_rounds() {
    let grid = alpha_grid();
    let sigmas = [0.6, 1.0, 2.0];
    let rates = [0.01, 0.1, 0.5];
    let rounds = [1u64, 10, 100];
    let eps = |q: f64, s: f64, r: u64| compose_and_convert(q, s, 1e-3, r, &grid).unwrap().epsilon;
    for &q in &rates {
        for &s in &sigmas {
            for &r in &rounds {
                let e = eps(q, s, r);
                for &s2 in sigmas.iter().filter(|&&x| x > s) {
                    assert!(eps(q, s2, r) <= e);
                }
                for &q2 in rates.iter().filter(|&&x| x > q) {
                    assert!(eps(q2, s, r) >= e);
                }
                for &r2 in rounds.iter().filter(|&&x| x > r) {
                    assert!(eps(q, s, r2) >= e);
                }
            }
        }
    }
}

#[test]
fn zero_rounds_doubling_and_limits() {
    let grid = alpha_grid();
    let zero = compose_and_convert(0.1, 0.8, 1e-3, 0, &grid).unwrap();
    let offset = grid.iter().map(|&a| conversion_offset(a, 1e-3)).fold(f64::INFINITY, f64::min);
    assert_eq!(zero.epsilon, offset);
    let mut last = compose_and_convert(0.1, 0.8, 1e-3, 1, &grid).unwrap().epsilon;
    for r in [2u64, 4, 8, 16, 32, 64, 128, 256] {
        let e = compose_and_convert(0.1, 0.8, 1e-3, r, &grid).unwrap().epsilon;
        assert!(e > last);
        last = e;
    }
    assert!(rdp_per_round(1e-6, 0.8, 8.0).unwrap() < 1e-6);
    assert!(compose_and_convert(0.1, 0.0, 1e-3, 10, &grid).unwrap().is_unbounded());
    for alpha in [2.0, 64.0, 256.0] {
        assert!(log_moment(0.5, 0.3, alpha, MixtureReading::Standard).unwrap().is_finite());
    }
}

#[test]
fn calibration_round_trips_and_orders_targets() {
    let (q, rounds, delta) = (0.1, 300u64, 1.0 / 500.0);
    let grid = alpha_grid();
    let mut previous = f64::INFINITY;
    for target in [4.0, 6.0, 8.0, 10.0] {
        let sigma = calibrate_sigma(target, q, rounds, delta).unwrap();
        let eps = compose_and_convert(q, sigma, delta, rounds, &grid).unwrap().epsilon;
        assert!(((eps - target) / target).abs() <= 5e-3);
        assert!(sigma < previous);
        previous = sigma;
    }
    let frozen = 1.111472;
    let sigma8 = calibrate_sigma(8.0, q, rounds, delta).unwrap();
    assert!(((sigma8 - frozen) / frozen).abs() <= 1e-5, "sigma for epsilon 8 moved to {sigma8}");
    assert!(calibrate_sigma(1e9, q, rounds, delta).is_err());
}
