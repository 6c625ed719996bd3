//! Client sampling and server aggregation.

use rand::seq::index::sample;

use super::{AlgorithmSpec, ClientUpdate, RoundState, SmoothingBlocks};
use crate::error::{Error, Result};
use crate::numerics::{Model, Params, StreamRng};
use crate::smoothing::{smooth, smooth_blocks};

/// Uniform sample of `sampled` distinct client ids out of `total`, ascending.
pub fn sample_clients(total: usize, sampled: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if sampled == 0 || sampled > total {
        return Err(Error::config(format!("cannot sample {sampled} of {total} clients")));
    }
    let mut ids = sample(rng, total, sampled).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Server step parameters of one round.
#[derive(Debug, Clone, Copy)]
pub struct ServerStep {
    pub sampled: usize,
    pub local_steps: usize,
    pub local_lr: f64,
    pub global_lr: f64,
}

/// Pseudo-gradient `-(1 / (eta S K)) sum_i Delta_i` (optionally smoothed) and
/// the global step `x - gamma g`. Updates are reduced in ascending client id
/// order whatever order they arrive in.
pub fn aggregate(
    updates: &[ClientUpdate],
    state: &RoundState,
    spec: &AlgorithmSpec,
    model: &Model,
    step: ServerStep,
) -> Result<(Params<f64>, Params<f64>)> {
    if updates.len() != step.sampled {
        return Err(Error::config(format!("expected {} client updates, received {}", step.sampled, updates.len())));
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client);
    let mut total = Params::zeros(state.x_global.len());
    for u in ordered {
        total.axpy(1.0, &u.restored)?;
    }
    let mut g_next = total.scale(-1.0 / (step.local_lr * step.sampled as f64 * step.local_steps as f64));
    if let Some(sigma_ls) = spec.laplacian {
        g_next = match spec.smoothing_blocks {
            SmoothingBlocks::Whole => smooth(&g_next, sigma_ls)?,
            SmoothingBlocks::Layer => smooth_blocks(&g_next, sigma_ls, &model.blocks())?,
        };
    }
    let mut x_next = state.x_global.clone();
    x_next.axpy(-step.global_lr, &g_next)?;
    if !x_next.is_finite() || !g_next.is_finite() {
        return Err(Error::non_finite(format!("global model diverged in round {}", state.round + 1)));
    }
    Ok((x_next, g_next))
}
