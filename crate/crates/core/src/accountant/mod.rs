//! Rényi-DP accounting for repeated subsampled Gaussian rounds.
//!
//! Per-round RDP of order `alpha` is
//! `1/(alpha-1) ln E_{z~mu0} [(1 - q + q mu1(z)/mu0(z))^alpha]`
//! with `mu0 = N(0, sigma^2)` and `mu1 = N(1, sigma^2)`, evaluated by
//! quadrature. Rounds compose additively and the total is converted to
//! `(epsilon, delta)` with
//! `eps = R*rdp + ((alpha-1) ln(1-1/alpha) - ln alpha - ln delta) / (alpha-1)`,
//! minimized over a fixed grid of orders.

mod quadrature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quadrature::{gauss_legendre, log_add_exp, log_integrate, log_sum_exp};

/// Half-width of the integration window in units of sigma.
pub const WINDOW_SIGMAS: f64 = 20.0;
/// Minimum number of quadrature panels.
pub const MIN_PANELS: usize = 2000;
const MAX_PANELS: usize = 400_000;

pub const SIGMA_BRACKET: (f64, f64) = (1e-2, 1e3);
pub const CALIBRATION_TOLERANCE: f64 = 5e-3;

pub const CAVEAT_FIXED_SIZE_SAMPLING: &str = "fixed-size client sampling is accounted as subsampling with rate q = S/N";
pub const CAVEAT_MEDIAN_CLIP: &str = "clip_mode=median: the clipping threshold is data-dependent, epsilon is nominal";
pub const CAVEAT_LITERAL_MIXTURE: &str =
    "mu1 taken literally as the mixture q N(1,sigma^2) + (1-q) N(0,sigma^2); equivalent to rate q^2";

/// How the alternative density `mu1` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureReading {
    /// `mu1 = N(1, sigma^2)`; the integrand itself forms the mixture.
    #[default]
    Standard,
    /// `mu1 = q N(1, sigma^2) + (1 - q) N(0, sigma^2)`.
    Literal,
}

/// Candidate Rényi orders.
pub fn alpha_grid() -> Vec<f64> {
    let mut grid = vec![1.25, 1.5, 1.75, 2.25, 2.5, 2.75, 3.5, 4.5, 5.5];
    grid.extend((2..=64).map(f64::from));
    grid.extend([72.0, 80.0, 96.0, 128.0, 192.0, 256.0]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn check_args(q: f64, sigma: f64, alpha: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::config(format!("sampling rate q must lie in (0, 1] (got {q})")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("noise multiplier must be finite and >= 0 (got {sigma})")));
    }
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::config(format!("Renyi order must be > 1 (got {alpha})")));
    }
    Ok(())
}

/// `ln E_{z~mu0}[(1 - q + q mu1/mu0)^alpha]`.
pub fn log_moment(q: f64, sigma: f64, alpha: f64, reading: MixtureReading) -> Result<f64> {
    check_args(q, sigma, alpha)?;
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    let q = match reading {
        MixtureReading::Standard => q,
        MixtureReading::Literal => q * q,
    };
    let var = sigma * sigma;
    let log_norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let log_keep = (1.0 - q).ln();
    let log_q = q.ln();
    let lo = -1.0 - WINDOW_SIGMAS * sigma;
    let hi = alpha + 1.0 + WINDOW_SIGMAS * sigma;
    let panels = (((hi - lo) / (0.25 * sigma)).ceil() as usize).clamp(MIN_PANELS, MAX_PANELS);
    let value = log_integrate(lo, hi, panels, |z| {
        let log_ratio = (2.0 * z - 1.0) / (2.0 * var);
        let inner = if q == 1.0 { log_ratio } else { log_add_exp(log_keep, log_q + log_ratio) };
        log_norm - z * z / (2.0 * var) + alpha * inner
    });
    Ok(value.max(0.0))
}

/// RDP of order `alpha` spent by one round; `+inf` when `sigma == 0`.
pub fn rdp_per_round(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    rdp_per_round_with(q, sigma, alpha, MixtureReading::Standard)
}

pub fn rdp_per_round_with(q: f64, sigma: f64, alpha: f64, reading: MixtureReading) -> Result<f64> {
    Ok(log_moment(q, sigma, alpha, reading)? / (alpha - 1.0))
}

/// RDP-to-DP conversion term added to the composed RDP. It can be slightly
/// negative for large orders and tiny RDP; converted epsilons are floored at 0.
pub fn conversion_offset(alpha: f64, delta: f64) -> f64 {
    ((alpha - 1.0) * (1.0 - 1.0 / alpha).ln() - alpha.ln() - delta.ln()) / (alpha - 1.0)
}

/// Result of composing `R` rounds and converting to `(epsilon, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    /// `+inf` when unbounded.
    #[serde(with = "crate::numerics::extended")]
    pub epsilon: f64,
    #[serde(with = "crate::numerics::extended")]
    pub alpha_star: f64,
    /// Composed RDP at `alpha_star`.
    #[serde(with = "crate::numerics::extended")]
    pub epsilon_bar: f64,
}

impl Conversion {
    pub fn is_unbounded(&self) -> bool {
        !self.epsilon.is_finite()
    }
}

/// Per-order RDP of one round, evaluated once and reused across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    pub alphas: Vec<f64>,
    pub per_round: Vec<f64>,
}

impl RdpCurve {
    pub fn new(q: f64, sigma: f64, grid: &[f64], reading: MixtureReading) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::config("empty Renyi order grid"));
        }
        let per_round =
            grid.par_iter().map(|&a| rdp_per_round_with(q, sigma, a, reading)).collect::<Result<Vec<_>>>()?;
        Ok(Self { alphas: grid.to_vec(), per_round })
    }

    pub fn convert(&self, rounds: u64, delta: f64) -> Result<Conversion> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1) (got {delta})")));
        }
        let mut best: Option<Conversion> = None;
        for (&alpha, &rdp) in self.alphas.iter().zip(&self.per_round) {
            let epsilon_bar = if rounds == 0 { 0.0 } else { rounds as f64 * rdp };
            let epsilon = (epsilon_bar + conversion_offset(alpha, delta)).max(0.0);
            let better = match best {
                None => true,
                Some(b) => epsilon < b.epsilon,
            };
            if better {
                best = Some(Conversion { epsilon, alpha_star: alpha, epsilon_bar });
            }
        }
        Ok(best.expect("grid is non-empty"))
    }
}

/// `(epsilon, alpha*)` after `rounds` rounds, minimized over `grid`.
pub fn compose_and_convert(q: f64, sigma: f64, delta: f64, rounds: u64, grid: &[f64]) -> Result<Conversion> {
    RdpCurve::new(q, sigma, grid, MixtureReading::Standard)?.convert(rounds, delta)
}

/// Noise multiplier whose `rounds`-round epsilon is within
/// [`CALIBRATION_TOLERANCE`] (relative) of `target_epsilon`, by bisection on
/// `ln sigma` over [`SIGMA_BRACKET`].
pub fn calibrate_sigma(target_epsilon: f64, q: f64, rounds: u64, delta: f64) -> Result<f64> {
    if !(target_epsilon > 0.0) || !target_epsilon.is_finite() {
        return Err(Error::config(format!("target epsilon must be > 0 (got {target_epsilon})")));
    }
    if rounds == 0 {
        return Err(Error::config("calibration needs at least one round"));
    }
    let grid = alpha_grid();
    let eps = |sigma: f64| -> Result<f64> { Ok(compose_and_convert(q, sigma, delta, rounds, &grid)?.epsilon) };
    let (mut lo, mut hi) = SIGMA_BRACKET;
    let (eps_lo, eps_hi) = (eps(lo)?, eps(hi)?);
    let mid = (lo * hi).sqrt();
    let eps_mid = eps(mid)?;
    if !(eps_lo >= eps_mid && eps_mid >= eps_hi) {
        return Err(Error::non_finite(format!(
            "epsilon is not monotone in sigma over the bracket ({eps_lo}, {eps_mid}, {eps_hi})"
        )));
    }
    if target_epsilon > eps_lo || target_epsilon < eps_hi {
        return Err(Error::Unreachable(format!(
            "target {target_epsilon} outside [{eps_hi}, {eps_lo}] reachable for sigma in {SIGMA_BRACKET:?}"
        )));
    }
    for _ in 0..200 {
        let sigma = (lo * hi).sqrt();
        let e = eps(sigma)?;
        if ((e - target_epsilon) / target_epsilon).abs() <= CALIBRATION_TOLERANCE * 0.02 || hi / lo < 1.0 + 1e-12 {
            return Ok(sigma);
        }
        if e > target_epsilon {
            lo = sigma;
        } else {
            hi = sigma;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Running privacy account of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub sigma: f64,
    pub q: f64,
    pub delta: f64,
    pub rounds_consumed: u64,
    pub reading: MixtureReading,
    /// `None` until a round has been consumed.
    pub best: Option<Conversion>,
    pub caveats: Vec<String>,
    #[serde(skip)]
    curve: Option<RdpCurve>,
}

impl PrivacyLedger {
    pub fn new(sigma: f64, q: f64, delta: f64, reading: MixtureReading) -> Result<Self> {
        let curve = RdpCurve::new(q, sigma, &alpha_grid(), reading)?;
        let mut caveats = vec![CAVEAT_FIXED_SIZE_SAMPLING.to_string()];
        if reading == MixtureReading::Literal {
            caveats.push(CAVEAT_LITERAL_MIXTURE.to_string());
        }
        Ok(Self { sigma, q, delta, rounds_consumed: 0, reading, best: None, caveats, curve: Some(curve) })
    }

    pub fn add_caveat(&mut self, caveat: &str) {
        if !self.caveats.iter().any(|c| c == caveat) {
            self.caveats.push(caveat.to_string());
        }
    }

    pub fn record_round(&mut self) -> Result<()> {
        self.rounds_consumed += 1;
        let curve = match &self.curve {
            Some(c) => c,
            None => {
                self.curve = Some(RdpCurve::new(self.q, self.sigma, &alpha_grid(), self.reading)?);
                self.curve.as_ref().unwrap()
            }
        };
        self.best = Some(curve.convert(self.rounds_consumed, self.delta)?);
        Ok(())
    }

    /// Cumulative epsilon so far (0 before the first round).
    pub fn epsilon(&self) -> f64 {
        self.best.map_or(0.0, |b| b.epsilon)
    }
}
