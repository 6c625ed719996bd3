//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! run with `--nocapture` to see them all.

mod common;

use std::time::{Duration, Instant};

use common::{assert_bits_eq, gaussian, monte_carlo_moment, random_dataset, random_model, rel_err, rng};
use fedpgn_core::accountant::{alpha_grid, log_moment, rdp_per_round, MixtureReading};
use fedpgn_core::dp::{clip, sensitivity, ClipMode};
use fedpgn_core::engine::{run, Algo, Engine, RunArtifacts, RunConfig};
use fedpgn_core::io::{metrics_csv, norms_csv};
use fedpgn_core::numerics::{checkpoint, Params};
use fedpgn_core::smoothing::smooth;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn small_federation(algo: Algo, rounds: usize) -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.algo = algo;
    cfg.federation.clients = 20;
    cfg.federation.clients_per_round = 5;
    cfg.train.rounds = rounds;
    cfg.train.local_steps = 5;
    cfg
}

fn reduction_equivalence() -> Outcome {
    let start = Instant::now();
    let mut pgn = small_federation(Algo::FedPgn, 20);
    pgn.beta = 1.0;
    pgn.rho = 0.0;
    let avg = RunConfig { algo: Algo::FedAvg, ..pgn.clone() };
    let a = metrics_csv(&run(&pgn).unwrap().metrics);
    let b = metrics_csv(&run(&avg).unwrap().metrics);
    let elapsed = start.elapsed();
    outcome(a == b && elapsed < Duration::from_secs(10), format!("metrics identical: {}, {elapsed:.2?}", a == b))
}

fn momentum_recursion() -> Outcome {
    let mut cfg = small_federation(Algo::FedPgn, 50);
    cfg.dp.clip = ClipMode::Fixed(f64::INFINITY);
    cfg.dp.noise_multiplier = 0.0;
    let mut engine = Engine::new(cfg.clone()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let report = engine.step_round().unwrap();
        let mut predicted = report.mean_step_grad(cfg.train.local_steps).unwrap().scale(cfg.beta);
        predicted.axpy(1.0 - cfg.beta, &report.g_prev).unwrap();
        let residual = report.g_next.sub(&predicted).unwrap().l2_norm() / report.g_next.l2_norm();
        worst = worst.max(residual);
    }
    outcome(worst <= 1e-12, format!("worst relative residual {worst:.2e}"))
}

fn accountant_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for sigma in [0.5, 0.8, 2.0] {
        for alpha in alpha_grid() {
            let exact = alpha / (2.0 * sigma * sigma);
            worst = worst.max(((rdp_per_round(1.0, sigma, alpha).unwrap() - exact) / exact).abs());
        }
    }
    outcome(worst <= 1e-6, format!("worst relative error {worst:.2e}"))
}

fn accountant_monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(81);
    let mut worst_z: f64 = 0.0;
    for i in 0..10 {
        let (q, sigma, alpha) = (r.random_range(0.01..0.5), r.random_range(0.5..2.0), r.random_range(1.25..32.0));
        let log_quad = log_moment(q, sigma, alpha, MixtureReading::Standard).unwrap();
        let (ratio, se) = monte_carlo_moment(q, sigma, alpha, log_quad, 10_000_000, 900 + i);
        worst_z = worst_z.max((ratio - 1.0).abs() / se);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_z <= 3.0 && elapsed < Duration::from_secs(120),
        format!("worst deviation {worst_z:.2} SE, {elapsed:.2?}"),
    )
}

fn sensitivity_brute_force() -> Outcome {
    let mut r = rng(82);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = r.random_range(1..=6usize);
        let c = r.random_range(0.05..3.0);
        let dim = r.random_range(1..6);
        let updates: Vec<Params<f64>> = (0..n)
            .map(|_| {
                let scale = r.random_range(0.01..10.0);
                clip(&Params::from_vec(gaussian(&mut r, dim, scale)), c)
            })
            .collect();
        for mask in 1u32..(1 << n) {
            for j in (0..n).filter(|j| mask & (1 << j) != 0) {
                let mut diff = Params::zeros(dim);
                for (i, u) in updates.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        diff.axpy(1.0 / n as f64, u).unwrap();
                    }
                    if (mask & !(1 << j)) & (1 << i) != 0 {
                        diff.axpy(-1.0 / n as f64, u).unwrap();
                    }
                }
                worst_excess = worst_excess.max(diff.l2_norm() - sensitivity(c, n));
            }
        }
    }
    outcome(worst_excess <= 1e-12, format!("largest excess over C/S {worst_excess:.2e}"))
}

fn sampling_identity() -> Outcome {
    let mut r = rng(83);
    let mut worst: f64 = 0.0;
    for n in 2..=8usize {
        for s in 1..=n {
            let vs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut r, 3, 1.5)).collect();
            let mean_sq = |idx: &[usize], div: f64| -> f64 {
                (0..3).map(|k| idx.iter().map(|&i| vs[i][k]).sum::<f64>() / div).map(|m| m * m).sum()
            };
            let (mut total, mut count) = (0.0, 0usize);
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize == s {
                    let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                    total += mean_sq(&idx, s as f64);
                    count += 1;
                }
            }
            let all: Vec<usize> = (0..n).collect();
            let vbar: Vec<f64> = (0..3).map(|k| vs.iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
            let spread =
                vs.iter().map(|v| (0..3).map(|k| (v[k] - vbar[k]).powi(2)).sum::<f64>()).sum::<f64>() / n as f64;
            let rhs = mean_sq(&all, n as f64) + (n - s) as f64 / (s * (n - 1)) as f64 * spread;
            worst = worst.max((total / count as f64 - rhs).abs());
        }
    }
    outcome(worst <= 1e-10, format!("worst absolute gap {worst:.2e}"))
}

fn smoothing_exactness() -> Outcome {
    let mut r = rng(84);
    let (mut solve_gap, mut mean_gap): (f64, f64) = (0.0, 0.0);
    let mut identity = true;
    for d in [4usize, 8, 17, 256] {
        let sigma = 0.01;
        let v = gaussian(&mut r, d, 1.0);
        let fast = smooth(&Params::from_vec(v.clone()), sigma).unwrap();
        let mut a = DMatrix::<f64>::identity(d, d);
        for i in 0..d {
            a[(i, i)] += 2.0 * sigma;
            a[(i, (i + 1) % d)] -= sigma;
            a[(i, (i + d - 1) % d)] -= sigma;
        }
        let dense = a.lu().solve(&DVector::from_vec(v.clone())).unwrap();
        solve_gap = solve_gap.max((0..d).map(|i| (fast[i] - dense[i]).abs()).fold(0.0, f64::max));
        mean_gap = mean_gap.max((fast.mean() - v.iter().sum::<f64>() / d as f64).abs());
        let same = smooth(&Params::from_vec(v.clone()), 0.0).unwrap();
        identity &= same.iter().zip(&v).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    outcome(
        solve_gap <= 1e-10 && mean_gap <= 1e-12 && identity,
        format!("solve gap {solve_gap:.2e}, mean gap {mean_gap:.2e}, zero-coefficient identity {identity}"),
    )
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(10_000 + seed);
        let model = random_model(&mut r);
        let n = r.random_range(1..12);
        let ds = random_dataset(&mut r, n, model.n_in, model.n_cls);
        let batch = ds.full_batch();
        let x = Params::from_vec(gaussian(&mut r, model.dim(), 0.5));
        let (_, grad) = model.loss_and_grad(&x, &batch).unwrap();
        let j = r.random_range(0..model.dim());
        let (mut plus, mut minus) = (x.clone(), x.clone());
        plus[j] += 1e-6;
        minus[j] -= 1e-6;
        let fd = (model.loss(&plus, &batch).unwrap() - model.loss(&minus, &batch).unwrap()) / 2e-6;
        worst = worst.max(rel_err(grad[j], fd, 1e-5));
    }
    outcome(worst <= 1e-4, format!("worst relative error {worst:.2e} over 100 checks"))
}

struct TrendRuns {
    fedavg: Vec<RunArtifacts>,
    fedpgn: Vec<RunArtifacts>,
    fedpgn_ls: Vec<RunArtifacts>,
    elapsed: Duration,
}

fn desk_benchmark(algo: Algo, seed: u64) -> RunArtifacts {
    let mut cfg = RunConfig::desk();
    cfg.algo = algo;
    cfg.dp.clip = ClipMode::Median;
    cfg.dp.noise_multiplier = 0.8;
    cfg.seeds.data = 100 + seed;
    cfg.seeds.partition = 200 + seed;
    cfg.seeds.training = 300 + seed;
    run(&cfg).unwrap()
}

fn trend_runs() -> TrendRuns {
    let start = Instant::now();
    let arm = |algo| (0..5).map(|s| desk_benchmark(algo, s)).collect::<Vec<_>>();
    let fedavg = arm(Algo::FedAvg);
    let fedpgn = arm(Algo::FedPgn);
    let elapsed = start.elapsed();
    let fedpgn_ls = arm(Algo::FedPgnLs);
    TrendRuns { fedavg, fedpgn, fedpgn_ls, elapsed }
}

fn directional_trend(runs: &TrendRuns) -> Outcome {
    let acc = |r: &RunArtifacts| r.final_metrics().test_acc;
    let norm = |r: &RunArtifacts| r.mean_preclip_norm().unwrap();
    let acc_wins = runs.fedpgn.iter().zip(&runs.fedavg).filter(|(p, a)| acc(p) >= acc(a)).count();
    let norm_wins = runs.fedpgn.iter().zip(&runs.fedavg).filter(|(p, a)| norm(p) < norm(a)).count();
    let pairs: Vec<String> =
        runs.fedpgn.iter().zip(&runs.fedavg).map(|(p, a)| format!("{:.3}/{:.3}", acc(p), acc(a))).collect();
    outcome(
        acc_wins >= 4 && norm_wins >= 4 && runs.elapsed < Duration::from_secs(300),
        format!(
            "accuracy pgn>=avg in {acc_wins}/5 [{}], lower norm in {norm_wins}/5, {:.2?}",
            pairs.join(" "),
            runs.elapsed
        ),
    )
}

fn smoothing_trend(runs: &TrendRuns) -> Outcome {
    let mean = |rs: &[RunArtifacts]| rs.iter().map(|r| r.final_metrics().test_acc).sum::<f64>() / rs.len() as f64;
    let (ls, plain) = (mean(&runs.fedpgn_ls), mean(&runs.fedpgn));
    outcome(ls >= plain - 0.005, format!("mean accuracy ls {:.4} vs plain {:.4}", ls, plain))
}

fn determinism() -> Outcome {
    let cfg = small_federation(Algo::FedPgnLs, 10);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    let metrics = metrics_csv(&a.metrics) == metrics_csv(&b.metrics);
    let norms = norms_csv(&a.norms) == norms_csv(&b.norms);
    let ckpt = checkpoint::encode(&a.final_params) == checkpoint::encode(&b.final_params);
    assert_bits_eq(a.final_params.as_slice(), b.final_params.as_slice());
    outcome(metrics && norms && ckpt, format!("metrics {metrics}, norms {norms}, checkpoint {ckpt}"))
}

#[test]
fn acceptance() {
    let trend = trend_runs();
    let results = [
        ("1 reduction equivalence", reduction_equivalence()),
        ("2 momentum recursion", momentum_recursion()),
        ("3 accountant closed form", accountant_closed_form()),
        ("4 accountant vs Monte Carlo", accountant_monte_carlo()),
        ("5 sensitivity brute force", sensitivity_brute_force()),
        ("6 subset sampling identity", sampling_identity()),
        ("7 smoothing exactness", smoothing_exactness()),
        ("8 gradient correctness", gradient_correctness()),
        ("9 directional trend", directional_trend(&trend)),
        ("10 smoothing trend", smoothing_trend(&trend)),
        ("11 determinism", determinism()),
    ];
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
