//! Client-side work of one round: local steps and the update pipeline.

use serde::Serialize;

use super::{AlgorithmSpec, RoundState, Variant};
use crate::data::{next_batch, Dataset, Partition};
use crate::dp::{add_noise, clip, NoiseSpec};
use crate::error::{Error, Result};
use crate::numerics::{ascent_shift, Model, Params, Purpose, Streams};

/// What a client needs besides the round state.
#[derive(Clone, Copy)]
pub struct LocalContext<'a> {
    pub model: &'a Model,
    pub train: &'a Dataset,
    pub partition: &'a Partition,
    pub streams: Streams,
    pub local_steps: usize,
    pub batch_size: usize,
    /// Local learning rate for this round.
    pub lr: f64,
}

/// Result of the K local steps.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub client: usize,
    pub x_final: Params<f64>,
    /// Sum over steps of the stochastic gradients taken at the perturbed points.
    pub grad_sum: Params<f64>,
    pub step_losses: Vec<f64>,
}

/// A client's contribution through its four stages.
#[derive(Debug, Clone, Serialize)]
pub struct ClientUpdate {
    pub client: usize,
    /// `x_K - x + (1 - beta) K eta g`
    pub raw: Params<f64>,
    pub clipped: Params<f64>,
    pub noised: Params<f64>,
    /// `noised - (1 - beta) K eta g`
    pub restored: Params<f64>,
    pub preclip_norm: f64,
}

/// Runs the local steps of `client` from the round's global model.
///
/// * PGN: `g_k = beta * grad F(x_k + delta) + (1 - beta) * g_server`, with
///   `delta = rho * g_server / |g_server|` fixed for the round.
/// * SAM: `delta` is recomputed every step from the minibatch gradient and
///   `g_k = grad F(x_k + delta)`.
/// * FedAvg: the PGN rule with `beta = 1`, `rho = 0`.
pub fn local_train(
    state: &RoundState,
    spec: &AlgorithmSpec,
    client: usize,
    ctx: &LocalContext<'_>,
) -> Result<LocalOutcome> {
    let dim = state.x_global.len();
    let round = state.round as u64;
    let mut rng = ctx.streams.stream(Purpose::Batch, round, client as u64);
    let mut x = state.x_global.clone();
    let mut grad_sum = Params::zeros(dim);
    let mut step_losses = Vec::with_capacity(ctx.local_steps);
    let beta = spec.effective_beta();
    let rho = spec.effective_rho();
    let context = |k: usize, e: Error| match e {
        Error::NonFinite(m) => Error::non_finite(format!("round {round}, client {client}, local step {k}: {m}")),
        other => other,
    };

    let server_shift = match spec.variant {
        Variant::FedSam => None,
        Variant::FedAvg | Variant::FedPgn => ascent_shift(&state.g_server, rho)?,
    };

    for k in 0..ctx.local_steps {
        let batch = next_batch(ctx.train, ctx.partition, client, ctx.batch_size, &mut rng)?;
        let (loss, step_grad) = match spec.variant {
            Variant::FedSam => {
                let (loss, g) = ctx.model.loss_and_grad(&x, &batch).map_err(|e| context(k, e))?;
                match ascent_shift(&g, rho)? {
                    None => (loss, g),
                    Some(shift) => {
                        let g = ctx.model.loss_and_grad(&x.add(&shift)?, &batch).map_err(|e| context(k, e))?.1;
                        (loss, g)
                    }
                }
            }
            Variant::FedAvg | Variant::FedPgn => {
                let (loss, g) = match &server_shift {
                    None => ctx.model.loss_and_grad(&x, &batch),
                    Some(shift) => ctx.model.loss_and_grad(&x.add(shift)?, &batch),
                }
                .map_err(|e| context(k, e))?;
                (loss, g)
            }
        };
        let mut direction = step_grad.scale(beta);
        direction.axpy(1.0 - beta, &state.g_server)?;
        x.axpy(-ctx.lr, &direction)?;
        if !x.is_finite() {
            return Err(context(k, Error::non_finite("local model diverged")));
        }
        grad_sum.axpy(1.0, &step_grad)?;
        step_losses.push(loss);
    }
    Ok(LocalOutcome { client, x_final: x, grad_sum, step_losses })
}

/// Momentum term `(1 - beta) K eta g_server` excluded from (and later restored to) the update.
pub fn momentum_term(state: &RoundState, spec: &AlgorithmSpec, local_steps: usize, lr: f64) -> Params<f64> {
    state.g_server.scale((1.0 - spec.effective_beta()) * local_steps as f64 * lr)
}

/// `x_K - x_global + (1 - beta) K eta g_server`
pub fn make_raw_update(
    x_final: &Params<f64>,
    state: &RoundState,
    spec: &AlgorithmSpec,
    local_steps: usize,
    lr: f64,
) -> Result<Params<f64>> {
    x_final.sub(&state.x_global)?.add(&momentum_term(state, spec, local_steps, lr))
}

/// Clips, noises and restores one raw update.
#[allow(clippy::too_many_arguments)]
pub fn privatize(
    client: usize,
    raw: Params<f64>,
    momentum: &Params<f64>,
    clip_threshold: f64,
    noise: NoiseSpec,
    sampled: usize,
    streams: Streams,
    round: usize,
) -> Result<ClientUpdate> {
    let preclip_norm = raw.l2_norm();
    let clipped = clip(&raw, clip_threshold);
    let mut rng = streams.stream(Purpose::Noise, round as u64, client as u64);
    let noised = add_noise(&clipped, noise, clip_threshold, sampled, &mut rng)?;
    let restored = noised.sub(momentum)?;
    Ok(ClientUpdate { client, raw, clipped, noised, restored, preclip_norm })
}
