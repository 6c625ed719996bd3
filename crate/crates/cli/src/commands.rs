use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fedpgn_core::accountant::{
    alpha_grid, calibrate_sigma, Conversion, MixtureReading, RdpCurve, CAVEAT_FIXED_SIZE_SAMPLING,
    CAVEAT_LITERAL_MIXTURE,
};
use fedpgn_core::data::{dirichlet_partition, min_client_size};
use fedpgn_core::engine::{load_data, run_engine, Engine};
use fedpgn_core::io::{landscape_csv, metrics_csv, norms_csv, Summary};
use fedpgn_core::numerics::{checkpoint, BatchObjective, Purpose, Streams};
use fedpgn_core::probes::{eval_sample, landscape_slice, sharpness_proxy, GridSpec};
use fedpgn_core::{Partition, RunConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::settings;

/// Where the run configuration comes from.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file layered over the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in defaults to start from: `paper` or `desk`.
    #[arg(long, default_value = "paper")]
    pub profile: String,
    /// Dotted `key=value` override, repeatable; the last one wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        settings::resolve(&self.profile, self.config.as_deref(), &self.sets)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite files in an existing non-empty run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mixture {
    Standard,
    Literal,
}

impl From<Mixture> for MixtureReading {
    fn from(m: Mixture) -> Self {
        match m {
            Mixture::Standard => MixtureReading::Standard,
            Mixture::Literal => MixtureReading::Literal,
        }
    }
}

#[derive(Debug, Args)]
pub struct AccountantArgs {
    /// Sampling rate; alternatively give --clients and --sampled.
    #[arg(long, conflicts_with_all = ["clients", "sampled"])]
    pub q: Option<f64>,
    #[arg(long, requires = "sampled")]
    pub clients: Option<usize>,
    #[arg(long, requires = "clients")]
    pub sampled: Option<usize>,
    /// Noise multiplier (ignored with --calibrate).
    #[arg(long, required_unless_present = "calibrate")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rounds: u64,
    /// Failure probability; defaults to 1/clients.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Search for the noise multiplier reaching --target-eps.
    #[arg(long, requires = "target_eps")]
    pub calibrate: bool,
    #[arg(long)]
    pub target_eps: Option<f64>,
    #[arg(long, value_enum, default_value = "standard")]
    pub mixture: Mixture,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "landscape.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub lim: Option<f64>,
    /// Single random direction instead of a plane.
    #[arg(long)]
    pub one_d: bool,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))
}

fn prepare_run_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::OutputExists(dir.display().to_string()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn run(args: RunArgs) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    prepare_run_dir(&args.out, args.force)?;
    write_file(&args.out.join("config.resolved"), settings::to_toml(&cfg)?)?;

    let artifacts = run_engine(Engine::new(cfg.clone())?)?;
    let (train, _) = load_data(&cfg)?;
    let model = cfg.model();
    let sample = eval_sample(&train, cfg.probe.eval_size, cfg.probe.seed);
    let objective = BatchObjective { model: &model, batch: &sample };
    let probes = Streams::new(cfg.probe.seed);
    let sharpness = sharpness_proxy(
        &objective,
        &artifacts.final_params,
        cfg.probe.sharpness_radius,
        cfg.probe.seed,
        &mut probes.stream(Purpose::Probe, 1, 0),
    )?;

    write_file(&args.out.join("metrics.csv"), metrics_csv(&artifacts.metrics))?;
    write_file(&args.out.join("norms.csv"), norms_csv(&artifacts.norms))?;
    write_file(&args.out.join("checkpoint.fpgn"), checkpoint::encode(&artifacts.final_params))?;
    if cfg.probe.landscape {
        let grid = GridSpec { resolution: cfg.probe.resolution, lim: cfg.probe.lim, two_d: cfg.probe.two_d };
        let slice =
            landscape_slice(&objective, &artifacts.final_params, grid, &mut probes.stream(Purpose::Probe, 0, 0))?;
        write_file(&args.out.join("landscape.csv"), landscape_csv(&slice))?;
    }
    write_file(&args.out.join("summary.json"), Summary::new(&artifacts, Some(sharpness)).to_json())?;

    let last = artifacts.final_metrics();
    println!(
        "{}: {} rounds, test_acc {:.4}, train_loss {:.4}, epsilon {:.4} -> {}",
        cfg.algo.name(),
        last.round,
        last.test_acc,
        last.train_loss,
        last.epsilon,
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AccountantReport {
    #[serde(flatten)]
    conversion: Conversion,
    sigma: f64,
    q: f64,
    rounds: u64,
    delta: f64,
    caveats: Vec<&'static str>,
}

pub fn accountant(args: AccountantArgs) -> CliResult<()> {
    let q = match (args.q, args.clients, args.sampled) {
        (Some(q), _, _) => q,
        (None, Some(n), Some(s)) if n > 0 => s as f64 / n as f64,
        _ => return Err(CliError::Config("give either --q or both --clients and --sampled".into())),
    };
    let delta = match (args.delta, args.clients) {
        (Some(d), _) => d,
        (None, Some(n)) => 1.0 / n as f64,
        (None, None) => return Err(CliError::Config("--delta is required when --clients is not given".into())),
    };
    let reading = MixtureReading::from(args.mixture);
    let mut caveats = vec![CAVEAT_FIXED_SIZE_SAMPLING];
    let sigma = if args.calibrate {
        let target = args.target_eps.expect("clap enforces --target-eps");
        let rate = match reading {
            MixtureReading::Standard => q,
            MixtureReading::Literal => q * q,
        };
        calibrate_sigma(target, rate, args.rounds, delta)?
    } else {
        args.sigma.expect("clap enforces --sigma")
    };
    if reading == MixtureReading::Literal {
        caveats.push(CAVEAT_LITERAL_MIXTURE);
    }
    let conversion = RdpCurve::new(q, sigma, &alpha_grid(), reading)?.convert(args.rounds, delta)?;
    let report = AccountantReport { conversion, sigma, q, rounds: args.rounds, delta, caveats };
    emit(&to_json(&report)?)
}

#[derive(Serialize)]
struct LandscapeReport {
    center_loss: f64,
    checkpoint_loss: f64,
    resolution: usize,
    lim: f64,
    out: String,
}

pub fn landscape(args: LandscapeArgs) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    let params = checkpoint::read(&args.checkpoint)?;
    let model = cfg.model();
    if params.len() != model.dim() {
        return Err(fedpgn_core::Error::DimensionMismatch { expected: model.dim(), found: params.len() }.into());
    }
    let (train, _) = load_data(&cfg)?;
    let sample = eval_sample(&train, cfg.probe.eval_size, cfg.probe.seed);
    let objective = BatchObjective { model: &model, batch: &sample };
    let grid = GridSpec {
        resolution: args.resolution.unwrap_or(cfg.probe.resolution),
        lim: args.lim.unwrap_or(cfg.probe.lim),
        two_d: !args.one_d && cfg.probe.two_d,
    };
    let mut rng = Streams::new(cfg.probe.seed).stream(Purpose::Probe, 0, 0);
    let slice = landscape_slice(&objective, &params, grid, &mut rng)?;
    write_file(&args.out, landscape_csv(&slice))?;
    let report = LandscapeReport {
        center_loss: slice.center_loss(),
        checkpoint_loss: model.loss(&params, &sample)?,
        resolution: grid.resolution,
        lim: grid.lim,
        out: args.out.display().to_string(),
    };
    emit(&to_json(&report)?)
}

#[derive(Serialize)]
struct PartitionReport {
    #[serde(flatten)]
    partition: Partition,
    sizes: Vec<usize>,
    label_diversity: Vec<usize>,
}

pub fn partition(args: PartitionArgs) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    let (train, _) = load_data(&cfg)?;
    let partition = dirichlet_partition(
        &train,
        args.clients.unwrap_or(cfg.federation.clients),
        args.alpha.unwrap_or(cfg.federation.dirichlet_alpha),
        args.seed.unwrap_or(cfg.seeds.partition),
        min_client_size(cfg.train.batch_size),
    )?;
    let report = PartitionReport {
        sizes: partition.clients.iter().map(Vec::len).collect(),
        label_diversity: partition.label_diversity(&train),
        partition,
    };
    let json = to_json(&report)?;
    match &args.out {
        Some(path) => write_file(path, json),
        None => emit(&json),
    }
}
