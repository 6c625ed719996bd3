//! The federated training loop.
//!
//! Each round samples S of N clients, runs K local steps per sampled client
//! (in parallel), clips and noises the updates, and folds them into the next
//! global model and server pseudo-gradient. All randomness is addressed by
//! `(seed, purpose, round, client)` and every reduction runs in ascending
//! client order, so results do not depend on the thread schedule.

mod config;
mod local;
mod server;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    Algo, AlgorithmSpec, DataSpec, DpConfig, FederationConfig, ModelSpec, ProbeConfig, RunConfig, Seeds,
    SmoothingBlocks, TrainConfig, Variant,
};
pub use local::{local_train, make_raw_update, momentum_term, privatize, ClientUpdate, LocalContext, LocalOutcome};
pub use server::{aggregate, sample_clients, ServerStep};

use crate::accountant::{PrivacyLedger, CAVEAT_MEDIAN_CLIP};
use crate::data::{
    dirichlet_partition, ingest_csv, min_client_size, synth_clusters_stream, CsvSchema, Dataset, Partition,
};
use crate::dp::{lower_median, resolve_clip_threshold, ClipMode, NoiseSpec};
use crate::error::{Error, Result};
use crate::numerics::{Model, Params, Purpose, Streams};

/// Global state between rounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundState {
    pub round: usize,
    pub x_global: Params<f64>,
    /// Server pseudo-gradient; zero before the first round.
    pub g_server: Params<f64>,
    pub ledger: PrivacyLedger,
}

/// Everything that happened in one round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub selected: Vec<usize>,
    pub clip_threshold: f64,
    pub local_lr: f64,
    pub global_lr: f64,
    pub outcomes: Vec<LocalOutcome>,
    pub updates: Vec<ClientUpdate>,
    /// Pseudo-gradient the round started from.
    pub g_prev: Params<f64>,
    pub g_next: Params<f64>,
}

impl RoundReport {
    /// `(1 / (S K)) sum_i sum_k grad F_i(x_i^k + delta; xi)`
    pub fn mean_step_grad(&self, local_steps: usize) -> Result<Params<f64>> {
        let dim = self.g_next.len();
        let total = crate::numerics::sum_in_order(dim, self.outcomes.iter().map(|o| &o.grad_sum))?;
        Ok(total.scale(1.0 / (self.outcomes.len() * local_steps) as f64))
    }

    pub fn preclip_norms(&self) -> Vec<f64> {
        self.updates.iter().map(|u| u.preclip_norm).collect()
    }
}

/// One line of `metrics.csv`; row `r` describes the model after `r` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    #[serde(with = "crate::numerics::extended")]
    pub train_loss: f64,
    pub test_acc: f64,
    pub grad_norm: f64,
    pub mean_preclip_norm: Option<f64>,
    pub median_preclip_norm: Option<f64>,
    pub clip_c: Option<f64>,
    #[serde(with = "crate::numerics::extended")]
    pub epsilon: f64,
}

/// One line of `norms.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub round: usize,
    pub client: usize,
    pub preclip_norm: f64,
}

/// Builds the train and test sets described by a config.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSpec::Synthetic { n_cls, n_in, per_class, test_per_class, spread } => {
            let train = synth_clusters_stream(*n_cls, *n_in, *per_class, *spread, cfg.seeds.data, 0)?;
            let test = synth_clusters_stream(*n_cls, *n_in, *test_per_class, *spread, cfg.seeds.data, 1)?;
            Ok((train, test))
        }
        DataSpec::Csv { train_path, test_path, n_in, n_cls, header } => {
            let schema = CsvSchema { n_in: *n_in, n_cls: *n_cls, header: *header };
            for (field, path) in [("data.train_path", Some(train_path)), ("data.test_path", test_path.as_ref())] {
                if let Some(p) = path.filter(|p| !p.is_file()) {
                    return Err(Error::config(format!("{field}: missing dataset path {}", p.display())));
                }
            }
            let train = ingest_csv(train_path, schema)?;
            let test = match test_path {
                Some(p) => ingest_csv(p, schema)?,
                None => train.clone(),
            };
            Ok((train, test))
        }
    }
}

/// Recorded when a CSV run has no held-out file.
pub const CAVEAT_NO_TEST_SPLIT: &str = "no test_path given: test accuracy is measured on the training rows";

/// A configured federation with its data, ready to run rounds.
pub struct Engine {
    cfg: RunConfig,
    spec: AlgorithmSpec,
    model: Model,
    train: Dataset,
    test: Dataset,
    partition: Partition,
    streams: Streams,
    state: RoundState,
}

impl Engine {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, test) = load_data(&cfg)?;
        let partition = dirichlet_partition(
            &train,
            cfg.federation.clients,
            cfg.federation.dirichlet_alpha,
            cfg.seeds.partition,
            min_client_size(cfg.train.batch_size),
        )?;
        let no_test_split = matches!(cfg.data, DataSpec::Csv { test_path: None, .. });
        let mut engine = Self::with_data(cfg, train, test, partition)?;
        if no_test_split {
            engine.state.ledger.add_caveat(CAVEAT_NO_TEST_SPLIT);
        }
        Ok(engine)
    }

    pub fn with_data(cfg: RunConfig, train: Dataset, test: Dataset, partition: Partition) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model();
        if train.n_in() != model.n_in || test.n_in() != model.n_in {
            return Err(Error::config("data: feature width does not match the model"));
        }
        if partition.num_clients() != cfg.federation.clients {
            return Err(Error::config(format!(
                "federation.clients: partition has {} clients but config asks for {}",
                partition.num_clients(),
                cfg.federation.clients
            )));
        }
        partition.check_cover(train.len())?;
        if partition.clients.iter().any(Vec::is_empty) {
            return Err(Error::config("partition: every client needs a non-empty shard"));
        }
        let streams = Streams::new(cfg.seeds.training);
        let x0 = model.init::<f64>(&mut streams.stream(Purpose::Init, 0, 0));
        let mut ledger = PrivacyLedger::new(cfg.dp.noise_multiplier, cfg.sampling_rate(), cfg.delta(), cfg.dp.mixture)?;
        if cfg.dp.clip == ClipMode::Median {
            ledger.add_caveat(CAVEAT_MEDIAN_CLIP);
        }
        let dim = model.dim();
        let state = RoundState { round: 0, x_global: x0, g_server: Params::zeros(dim), ledger };
        let spec = cfg.algorithm_spec();
        Ok(Self { cfg, spec, model, train, test, partition, streams, state })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &AlgorithmSpec {
        &self.spec
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    fn local_context(&self, lr: f64) -> LocalContext<'_> {
        LocalContext {
            model: &self.model,
            train: &self.train,
            partition: &self.partition,
            streams: self.streams,
            local_steps: self.cfg.train.local_steps,
            batch_size: self.cfg.train.batch_size,
            lr,
        }
    }

    /// Runs one full round and advances the state.
    pub fn step_round(&mut self) -> Result<RoundReport> {
        let r = self.state.round;
        let local_lr = self.cfg.local_lr(r);
        let global_lr = self.cfg.global_lr(r);
        let k = self.cfg.train.local_steps;
        let sampled = self.cfg.federation.clients_per_round;
        let selected = sample_clients(
            self.cfg.federation.clients,
            sampled,
            &mut self.streams.stream(Purpose::ClientSampling, r as u64, 0),
        )?;

        let ctx = self.local_context(local_lr);
        let state = &self.state;
        let spec = &self.spec;
        let outcomes: Vec<LocalOutcome> =
            selected.par_iter().map(|&c| local_train(state, spec, c, &ctx)).collect::<Result<_>>()?;
        let raws: Vec<Params<f64>> =
            outcomes.iter().map(|o| make_raw_update(&o.x_final, state, spec, k, local_lr)).collect::<Result<_>>()?;
        let norms: Vec<f64> = raws.iter().map(|v| v.l2_norm()).collect();
        if let Some(i) = norms.iter().position(|n| !n.is_finite()) {
            return Err(Error::non_finite(format!("round {}, client {}: update norm overflowed", r + 1, selected[i])));
        }
        let clip_threshold = resolve_clip_threshold(&norms, self.cfg.dp.clip)?;
        let momentum = momentum_term(state, spec, k, local_lr);
        let noise = NoiseSpec { sigma: self.cfg.dp.noise_multiplier };
        let streams = self.streams;
        let updates: Vec<ClientUpdate> = outcomes
            .par_iter()
            .zip(raws)
            .map(|(o, raw)| privatize(o.client, raw, &momentum, clip_threshold, noise, sampled, streams, r))
            .collect::<Result<_>>()?;
        let step = ServerStep { sampled, local_steps: k, local_lr, global_lr };
        let (x_next, g_next) = aggregate(&updates, state, spec, &self.model, step)?;

        let g_prev = std::mem::replace(&mut self.state.g_server, g_next.clone());
        self.state.x_global = x_next;
        self.state.round += 1;
        self.state.ledger.record_round()?;
        Ok(RoundReport { round: r, selected, clip_threshold, local_lr, global_lr, outcomes, updates, g_prev, g_next })
    }

    /// Train loss over the whole training set and test accuracy of the current global model.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let loss = self.model.loss(&self.state.x_global, &self.train.full_batch())?;
        let acc = self.model.accuracy(&self.state.x_global, &self.test);
        Ok((loss, acc))
    }

    pub fn metrics_row(&self, report: Option<&RoundReport>) -> Result<MetricsRow> {
        let (train_loss, test_acc) = self.evaluate()?;
        let norms = report.map(RoundReport::preclip_norms);
        Ok(MetricsRow {
            round: self.state.round,
            train_loss,
            test_acc,
            grad_norm: self.state.g_server.l2_norm(),
            mean_preclip_norm: norms.as_ref().map(|n| n.iter().sum::<f64>() / n.len() as f64),
            median_preclip_norm: norms.as_ref().map(|n| lower_median(n)),
            clip_c: report.map(|r| r.clip_threshold),
            epsilon: self.state.ledger.epsilon(),
        })
    }
}

/// Outputs of a complete run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub metrics: Vec<MetricsRow>,
    pub norms: Vec<NormRecord>,
    pub final_params: Params<f64>,
    pub final_state: RoundState,
    pub partition_attempt: u64,
}

impl RunArtifacts {
    pub fn final_metrics(&self) -> &MetricsRow {
        self.metrics.last().expect("metrics always hold the initial row")
    }

    /// Mean pre-clip update norm over every client update of the run.
    pub fn mean_preclip_norm(&self) -> Option<f64> {
        if self.norms.is_empty() {
            return None;
        }
        Some(self.norms.iter().map(|n| n.preclip_norm).sum::<f64>() / self.norms.len() as f64)
    }
}

/// Runs `cfg.train.rounds` rounds from scratch.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    run_engine(Engine::new(cfg.clone())?)
}

pub fn run_engine(mut engine: Engine) -> Result<RunArtifacts> {
    let mut metrics = vec![engine.metrics_row(None)?];
    let mut norms = Vec::new();
    for _ in 0..engine.cfg.train.rounds {
        let report = engine.step_round()?;
        norms.extend(report.updates.iter().map(|u| NormRecord {
            round: report.round,
            client: u.client,
            preclip_norm: u.preclip_norm,
        }));
        metrics.push(engine.metrics_row(Some(&report))?);
    }
    Ok(RunArtifacts {
        config: engine.cfg.clone(),
        metrics,
        norms,
        final_params: engine.state.x_global.clone(),
        partition_attempt: engine.partition.attempt,
        final_state: engine.state,
    })
}
