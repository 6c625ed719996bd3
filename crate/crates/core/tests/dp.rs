mod common;

use common::{gaussian, rng};
use fedpgn_core::dp::{clip, sensitivity};
use fedpgn_core::numerics::Params;
use rand::Rng;

fn mean_of(members: &[&Params<f64>], dim: usize, divisor: f64) -> Params<f64> {
    let mut total = Params::zeros(dim);
    for v in members {
        total.axpy(1.0, v).unwrap();
    }
    total.scale(1.0 / divisor)
}

fn subset(vs: &[Params<f64>], mask: u32) -> Vec<&Params<f64>> {
    vs.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, v)| v).collect()
}

/// Worst `|mean(D) - mean(D')|` over every set `D` of clipped updates and
/// every `D'` obtained by removing one client, with the mean taken over `s` slots.
fn brute_force_sensitivity(updates: &[Params<f64>], s: usize) -> f64 {
    let dim = updates[0].len();
    let mut worst: f64 = 0.0;
    for mask in 1u32..(1 << updates.len()) {
        let full = mean_of(&subset(updates, mask), dim, s as f64);
        for j in 0..updates.len() {
            if mask & (1 << j) == 0 {
                continue;
            }
            let reduced = mean_of(&subset(updates, mask & !(1 << j)), dim, s as f64);
            worst = worst.max(full.sub(&reduced).unwrap().l2_norm());
        }
    }
    worst
}

#[test]
fn mean_of_clipped_updates_moves_at_most_c_over_s() {
    let mut r = rng(31);
    for trial in 0..40 {
        let n = r.random_range(1..=6);
        let c = r.random_range(0.05..3.0);
        let dim = r.random_range(1..6);
        let updates: Vec<Params<f64>> = (0..n)
            .map(|_| {
                let scale = r.random_range(0.01..10.0);
                clip(&Params::from_vec(gaussian(&mut r, dim, scale)), c)
            })
            .collect();
        let bound = sensitivity(c, n);
        let worst = brute_force_sensitivity(&updates, n);
        assert!(worst <= bound + 1e-12, "trial {trial}: {worst} > {bound}");
    }
    assert_eq!(sensitivity(1.0, 10), 0.1);
    assert_eq!(sensitivity(0.5, 50), 0.01);
}

#[test]
fn subset_average_matches_sampling_identity() {
    let mut r = rng(32);
    for n in 2..=8usize {
        for s in 1..=n {
            let dim = 3;
            let vs: Vec<Params<f64>> = (0..n).map(|_| Params::from_vec(gaussian(&mut r, dim, 1.5))).collect();
            let mut total = 0.0;
            let mut count = 0usize;
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != s {
                    continue;
                }
                total += mean_of(&subset(&vs, mask), dim, s as f64).l2_norm_sq();
                count += 1;
            }
            let lhs = total / count as f64;
            let all: Vec<&Params<f64>> = vs.iter().collect();
            let vbar = mean_of(&all, dim, n as f64);
            let spread = vs.iter().map(|v| v.sub(&vbar).unwrap().l2_norm_sq()).sum::<f64>() / n as f64;
            let rhs = vbar.l2_norm_sq() + (n - s) as f64 / (s * (n - 1)) as f64 * spread;
            assert!((lhs - rhs).abs() <= 1e-10, "n={n} s={s}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn clipping_bound_and_idempotence_on_extreme_scales() {
    let mut r = rng(33);
    for _ in 0..500 {
        let dim = r.random_range(1..50);
        let scale = 10f64.powf(r.random_range(-8.0..8.0));
        let c = 10f64.powf(r.random_range(-6.0..6.0));
        let v = Params::from_vec(gaussian(&mut r, dim, scale));
        let once = clip(&v, c);
        assert!(once.l2_norm() <= c * (1.0 + 1e-15));
        common::assert_bits_eq(clip(&once, c).as_slice(), once.as_slice());
    }
}
