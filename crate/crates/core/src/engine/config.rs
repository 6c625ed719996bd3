use serde::{Deserialize, Serialize};

use crate::accountant::MixtureReading;
use crate::dp::ClipMode;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Model, ModelKind};

/// Local update rule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dp-fedavg")]
    FedAvg,
    /// Ascent step along the local minibatch gradient before every step.
    #[serde(rename = "dp-fedsam")]
    FedSam,
    /// Ascent step along the server pseudo-gradient, blended with it.
    #[serde(rename = "dp-fedpgn")]
    FedPgn,
}

/// Named algorithm as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "dp-fedavg")]
    FedAvg,
    #[serde(rename = "dp-fedavg-ls")]
    FedAvgLs,
    #[serde(rename = "dp-fedsam")]
    FedSam,
    #[serde(rename = "dp-fedpgn")]
    FedPgn,
    #[serde(rename = "dp-fedpgn-ls")]
    FedPgnLs,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::FedAvg => "dp-fedavg",
            Algo::FedAvgLs => "dp-fedavg-ls",
            Algo::FedSam => "dp-fedsam",
            Algo::FedPgn => "dp-fedpgn",
            Algo::FedPgnLs => "dp-fedpgn-ls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingBlocks {
    /// The flattened parameter vector is one signal.
    #[default]
    Whole,
    /// Each layer is smoothed separately.
    Layer,
}

/// Resolved per-run algorithm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub rho: f64,
    pub beta: f64,
    /// Laplacian smoothing coefficient, `None` when smoothing is off.
    pub laplacian: Option<f64>,
    pub smoothing_blocks: SmoothingBlocks,
}

impl AlgorithmSpec {
    pub fn fedavg() -> Self {
        Self {
            variant: Variant::FedAvg,
            rho: 0.0,
            beta: 1.0,
            laplacian: None,
            smoothing_blocks: SmoothingBlocks::Whole,
        }
    }

    pub fn fedsam(rho: f64) -> Self {
        Self { variant: Variant::FedSam, rho, beta: 1.0, laplacian: None, smoothing_blocks: SmoothingBlocks::Whole }
    }

    pub fn fedpgn(rho: f64, beta: f64) -> Self {
        Self { variant: Variant::FedPgn, rho, beta, laplacian: None, smoothing_blocks: SmoothingBlocks::Whole }
    }

    pub fn with_laplacian(mut self, sigma_ls: f64) -> Self {
        self.laplacian = Some(sigma_ls);
        self
    }

    /// Momentum weight actually applied: only the PGN rule blends with the
    /// server pseudo-gradient.
    pub fn effective_beta(&self) -> f64 {
        match self.variant {
            Variant::FedPgn => self.beta,
            Variant::FedAvg | Variant::FedSam => 1.0,
        }
    }

    /// Ascent radius actually applied.
    pub fn effective_rho(&self) -> f64 {
        match self.variant {
            Variant::FedAvg => 0.0,
            Variant::FedSam | Variant::FedPgn => self.rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::config(format!("rho: must be finite and >= 0 (got {})", self.rho)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!("beta: must lie in (0, 1] (got {})", self.beta)));
        }
        if let Some(s) = self.laplacian {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::config(format!("sigma_ls: must be finite and >= 0 (got {s})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    /// Gaussian clusters; the test split comes from a second stream of the data seed.
    Synthetic { n_cls: usize, n_in: usize, per_class: usize, test_per_class: usize, spread: f64 },
    /// CSV files of `label,f1,...`; the training file doubles as the test set when
    /// no test file is given.
    Csv {
        train_path: std::path::PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<std::path::PathBuf>,
        n_in: usize,
        n_cls: usize,
        #[serde(default)]
        header: bool,
    },
}

impl DataSpec {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            DataSpec::Synthetic { n_cls, n_in, .. } => (n_in, n_cls),
            DataSpec::Csv { n_in, n_cls, .. } => (n_in, n_cls),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Softmax,
    Mlp {
        hidden: usize,
        #[serde(default)]
        activation: Activation,
    },
}

impl ModelSpec {
    pub fn build(&self, n_in: usize, n_cls: usize) -> Model {
        let kind = match *self {
            ModelSpec::Softmax => ModelKind::Softmax,
            ModelSpec::Mlp { hidden, activation } => ModelKind::Mlp { hidden, activation },
        };
        Model { kind, n_in, n_cls }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    /// Total clients N.
    pub clients: usize,
    /// Clients sampled per round S.
    pub clients_per_round: usize,
    pub dirichlet_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub rounds: usize,
    /// Local steps K per round.
    pub local_steps: usize,
    pub batch_size: usize,
    /// Local learning rate at round 0.
    pub lr: f64,
    /// Per-round multiplicative learning-rate decay.
    pub lr_decay: f64,
    /// Global learning rate at round 0; tracks `lr * local_steps` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub clip: ClipMode,
    pub noise_multiplier: f64,
    /// Defaults to `1 / clients`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub mixture: MixtureReading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub partition: u64,
    pub training: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Emit `landscape.csv` for the final model.
    pub landscape: bool,
    pub resolution: usize,
    pub lim: f64,
    pub two_d: bool,
    pub eval_size: usize,
    pub seed: u64,
    pub sharpness_radius: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { landscape: false, resolution: 41, lim: 1.0, two_d: true, eval_size: 512, seed: 0, sharpness_radius: 0.5 }
    }
}

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Algo,
    pub rho: f64,
    pub beta: f64,
    pub sigma_ls: f64,
    #[serde(default)]
    pub smoothing_blocks: SmoothingBlocks,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub federation: FederationConfig,
    pub train: TrainConfig,
    pub dp: DpConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl RunConfig {
    /// Full-size federation: 500 clients, 10% participation, B=50, K=50,
    /// R=300, sigma=0.8, median clipping, rho=0.2, beta=0.3, decay 0.998.
    ///
    /// Uses the milder Dirichlet split (0.6): at 0.1 no draw over 500 clients
    /// leaves every client with a full batch.
    pub fn paper() -> Self {
        Self {
            algo: Algo::FedPgn,
            rho: 0.2,
            beta: 0.3,
            sigma_ls: 0.01,
            smoothing_blocks: SmoothingBlocks::Whole,
            model: ModelSpec::Softmax,
            data: DataSpec::Synthetic { n_cls: 10, n_in: 32, per_class: 30000, test_per_class: 200, spread: 0.6 },
            federation: FederationConfig { clients: 500, clients_per_round: 50, dirichlet_alpha: 0.6 },
            train: TrainConfig {
                rounds: 300,
                local_steps: 50,
                batch_size: 50,
                lr: 0.1,
                lr_decay: 0.998,
                global_lr: None,
            },
            dp: DpConfig {
                clip: ClipMode::Median,
                noise_multiplier: 0.8,
                delta: None,
                mixture: MixtureReading::Standard,
            },
            seeds: Seeds { data: 1, partition: 2, training: 3 },
            probe: ProbeConfig::default(),
        }
    }

    /// Desk-scale preset: 50 clients at Dirichlet 0.1, 100 rounds, B=10.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.data = DataSpec::Synthetic { n_cls: 10, n_in: 32, per_class: 1000, test_per_class: 100, spread: 0.6 };
        cfg.federation = FederationConfig { clients: 50, clients_per_round: 10, dirichlet_alpha: 0.1 };
        cfg.train =
            TrainConfig { rounds: 100, local_steps: 20, batch_size: 10, lr: 0.1, lr_decay: 0.998, global_lr: None };
        cfg
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn algorithm_spec(&self) -> AlgorithmSpec {
        let spec = match self.algo {
            Algo::FedAvg | Algo::FedAvgLs => AlgorithmSpec::fedavg(),
            Algo::FedSam => AlgorithmSpec::fedsam(self.rho),
            Algo::FedPgn | Algo::FedPgnLs => AlgorithmSpec::fedpgn(self.rho, self.beta),
        };
        let spec = AlgorithmSpec { smoothing_blocks: self.smoothing_blocks, ..spec };
        match self.algo {
            Algo::FedAvgLs | Algo::FedPgnLs => spec.with_laplacian(self.sigma_ls),
            _ => spec,
        }
    }

    pub fn model(&self) -> Model {
        let (n_in, n_cls) = self.data.dims();
        self.model.build(n_in, n_cls)
    }

    pub fn sampling_rate(&self) -> f64 {
        self.federation.clients_per_round as f64 / self.federation.clients as f64
    }

    pub fn delta(&self) -> f64 {
        self.dp.delta.unwrap_or(1.0 / self.federation.clients as f64)
    }

    /// Local learning rate in round `r`.
    pub fn local_lr(&self, round: usize) -> f64 {
        self.train.lr * self.train.lr_decay.powi(round as i32)
    }

    /// Global learning rate in round `r`.
    pub fn global_lr(&self, round: usize) -> f64 {
        match self.train.global_lr {
            Some(g) => g * self.train.lr_decay.powi(round as i32),
            None => self.local_lr(round) * self.train.local_steps as f64,
        }
    }

    /// Field-level validation; messages start with the offending key.
    pub fn validate(&self) -> Result<()> {
        let f = &self.federation;
        let t = &self.train;
        if f.clients < 2 {
            return Err(Error::config(format!("federation.clients: must be >= 2 (got {})", f.clients)));
        }
        if f.clients_per_round < 1 || f.clients_per_round > f.clients {
            return Err(Error::config(format!(
                "federation.clients_per_round: must lie in [1, {}] (got {})",
                f.clients, f.clients_per_round
            )));
        }
        if !(f.dirichlet_alpha > 0.0) || !f.dirichlet_alpha.is_finite() {
            return Err(Error::config(format!("federation.dirichlet_alpha: must be > 0 (got {})", f.dirichlet_alpha)));
        }
        if t.local_steps < 1 {
            return Err(Error::config("train.local_steps: must be >= 1"));
        }
        if t.batch_size < 1 {
            return Err(Error::config("train.batch_size: must be >= 1"));
        }
        if !(t.lr > 0.0) || !t.lr.is_finite() {
            return Err(Error::config(format!("train.lr: must be > 0 (got {})", t.lr)));
        }
        if !(t.lr_decay > 0.0) || !t.lr_decay.is_finite() {
            return Err(Error::config(format!("train.lr_decay: must be > 0 (got {})", t.lr_decay)));
        }
        if let Some(g) = t.global_lr {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::config(format!("train.global_lr: must be > 0 (got {g})")));
            }
        }
        if !(self.dp.noise_multiplier >= 0.0) || !self.dp.noise_multiplier.is_finite() {
            return Err(Error::config(format!("dp.noise_multiplier: must be >= 0 (got {})", self.dp.noise_multiplier)));
        }
        self.dp.clip.validate().map_err(|e| Error::config(format!("dp.clip: {e}")))?;
        if let crate::dp::ClipMode::Fixed(c) = self.dp.clip {
            if c.is_infinite() && self.dp.noise_multiplier > 0.0 {
                return Err(Error::config("dp.clip: an unbounded threshold cannot be combined with noise"));
            }
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("dp.delta: must lie in (0, 1) (got {delta})")));
        }
        self.algorithm_spec().validate()?;
        self.model().validate().map_err(|e| Error::config(format!("model: {e}")))?;
        match &self.data {
            DataSpec::Synthetic { per_class, test_per_class, spread, .. } => {
                if *per_class < 1 || *test_per_class < 1 {
                    return Err(Error::config("data.per_class: synthetic splits need >= 1 example per class"));
                }
                if !(*spread >= 0.0) {
                    return Err(Error::config(format!("data.spread: must be >= 0 (got {spread})")));
                }
            }
            DataSpec::Csv { train_path, .. } => {
                if train_path.as_os_str().is_empty() {
                    return Err(Error::config("data.train_path: missing dataset path"));
                }
            }
        }
        let p = &self.probe;
        if p.resolution < 3 || p.resolution.is_multiple_of(2) {
            return Err(Error::config(format!("probe.resolution: must be odd and >= 3 (got {})", p.resolution)));
        }
        if !(p.lim > 0.0) || p.eval_size < 1 || !(p.sharpness_radius > 0.0) {
            return Err(Error::config("probe: lim, eval_size and sharpness_radius must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::paper().validate().unwrap();
        RunConfig::desk().validate().unwrap();
        assert_eq!(RunConfig::paper().sampling_rate(), 0.1);
        assert_eq!(RunConfig::paper().delta(), 1.0 / 500.0);
    }

    #[test]
    fn gamma_tracks_eta_k() {
        let cfg = RunConfig::paper();
        assert_eq!(cfg.global_lr(0), 0.1 * 50.0);
        assert!((cfg.local_lr(10) - 0.1 * 0.998f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn algorithm_specs() {
        let mut cfg = RunConfig::desk();
        cfg.algo = Algo::FedPgnLs;
        let s = cfg.algorithm_spec();
        assert_eq!(s.variant, Variant::FedPgn);
        assert_eq!(s.laplacian, Some(0.01));
        cfg.algo = Algo::FedAvg;
        let s = cfg.algorithm_spec();
        assert_eq!((s.effective_beta(), s.effective_rho(), s.laplacian), (1.0, 0.0, None));
        cfg.algo = Algo::FedSam;
        assert_eq!(cfg.algorithm_spec().effective_beta(), 1.0);
        assert_eq!(cfg.algorithm_spec().effective_rho(), 0.2);
    }

    #[test]
    fn field_level_messages() {
        let mut cfg = RunConfig::desk();
        cfg.federation.clients_per_round = 51;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("federation.clients_per_round"), "{msg}");
        let mut cfg = RunConfig::desk();
        cfg.beta = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("beta"));
        let mut cfg = RunConfig::desk();
        cfg.dp.clip = ClipMode::Fixed(f64::INFINITY);
        assert!(cfg.validate().is_err());
        cfg.dp.noise_multiplier = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(RunConfig::desk()).unwrap();
        v["train"]["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
