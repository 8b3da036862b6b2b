use std::path::PathBuf;
use std::process::ExitCode;

use alime::dataset::Schema;
use alime::explain::Method;
use alime::AlimeError;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{
    default_data_path, BenchmarkConfig, BenchmarkKind, DataConfig, ExplainConfig, RunConfig, TrainAeConfig,
    TrainBlackboxConfig, TrainingConfig,
};

/// Train black boxes and autoencoders, explain instances with LIME or ALIME,
/// and run fidelity/stability sweeps. Every output directory receives a
/// config echo that `--config` accepts for an exact rerun.
#[derive(Parser)]
#[command(name = "alime", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the feed-forward classifier that plays the black box.
    TrainBlackbox(TrainArgs),
    /// Train the denoising autoencoder used for ALIME's latent distances.
    TrainAe(TrainAeArgs),
    /// Explain one test instance and write the explanation plus bar-chart CSV.
    Explain(ExplainArgs),
    /// Run both explainers over an n sweep and write combined reports.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config echo from an earlier run; flags given alongside it take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// breast_cancer, hepatitis or liver.
    #[arg(long)]
    dataset: Option<Schema>,
    /// CSV file; defaults to data/<dataset>.csv.
    #[arg(long)]
    data_path: Option<PathBuf>,
    /// Fraction of rows held out for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Seeds the split and the weight initialisation.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl DataArgs {
    fn apply(self, data: &mut DataConfig, training: &mut TrainingConfig) {
        if let Some(d) = self.dataset {
            data.dataset = d;
            if self.data_path.is_none() {
                data.data_path = default_data_path(d);
            }
        }
        set(&mut data.data_path, self.data_path);
        set(&mut data.test_fraction, self.test_fraction);
        if let Some(s) = self.seed {
            data.split_seed = s;
            training.seed = s;
        }
        set(&mut training.epochs, self.epochs);
        set(&mut training.learning_rate, self.lr);
        set(&mut training.batch_size, self.batch_size);
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TrainAeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Bottleneck width; defaults to min(K - 1, 8).
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Std of the Gaussian corruption applied during training.
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory with blackbox.json (and autoencoder.json for alime).
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// lime or alime.
    #[arg(long)]
    method: Option<Method>,
    /// Position of the instance within the test set.
    #[arg(long)]
    instance: Option<usize>,
    /// Points used by the surrogate.
    #[arg(long)]
    n: Option<usize>,
    /// Ridge penalty.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pool size drawn for alime when no pool file is given.
    #[arg(long)]
    m: Option<usize>,
    /// Reuse a pool file written by an earlier run.
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    kind: Option<BenchmarkKind>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Test-set position for stability; drawn from the seed when omitted.
    #[arg(long)]
    instance: Option<usize>,
    #[arg(long)]
    pool: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn base_config(path: Option<&PathBuf>, fallback: RunConfig) -> alime::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(fallback);
    };
    let loaded = RunConfig::load(path)?;
    if loaded.command() != fallback.command() {
        return Err(AlimeError::config(format!(
            "{} is a {} config, not {}",
            path.display(),
            loaded.command(),
            fallback.command()
        )));
    }
    Ok(loaded)
}

fn resolve(command: Command) -> alime::Result<RunConfig> {
    Ok(match command {
        Command::TrainBlackbox(args) => {
            let RunConfig::TrainBlackbox(mut cfg) = base_config(
                args.common.config.as_ref(),
                RunConfig::TrainBlackbox(TrainBlackboxConfig::default()),
            )?
            else {
                unreachable!()
            };
            args.data.apply(&mut cfg.data, &mut cfg.training);
            set(&mut cfg.out, args.common.out);
            RunConfig::TrainBlackbox(cfg)
        }
        Command::TrainAe(args) => {
            let RunConfig::TrainAe(mut cfg) =
                base_config(args.common.config.as_ref(), RunConfig::TrainAe(TrainAeConfig::default()))?
            else {
                unreachable!()
            };
            args.data.apply(&mut cfg.data, &mut cfg.training);
            if args.latent_dim.is_some() {
                cfg.latent_dim = args.latent_dim;
            }
            set(&mut cfg.noise_sigma, args.noise_sigma);
            set(&mut cfg.out, args.common.out);
            RunConfig::TrainAe(cfg)
        }
        Command::Explain(args) => {
            let RunConfig::Explain(mut cfg) =
                base_config(args.common.config.as_ref(), RunConfig::Explain(ExplainConfig::default()))?
            else {
                unreachable!()
            };
            set(&mut cfg.model_dir, args.model_dir);
            set(&mut cfg.method, args.method);
            set(&mut cfg.instance, args.instance);
            set(&mut cfg.n, args.n);
            set(&mut cfg.alpha, args.alpha);
            set(&mut cfg.seed, args.seed);
            set(&mut cfg.m, args.m);
            if args.pool.is_some() {
                cfg.pool = args.pool;
            }
            set(&mut cfg.out, args.common.out);
            RunConfig::Explain(cfg)
        }
        Command::Benchmark(args) => {
            let RunConfig::Benchmark(mut cfg) =
                base_config(args.common.config.as_ref(), RunConfig::Benchmark(BenchmarkConfig::default()))?
            else {
                unreachable!()
            };
            set(&mut cfg.kind, args.kind);
            set(&mut cfg.model_dir, args.model_dir);
            set(&mut cfg.n_values, args.n_values);
            set(&mut cfg.alpha, args.alpha);
            set(&mut cfg.seed, args.seed);
            set(&mut cfg.m, args.m);
            set(&mut cfg.iterations, args.iterations);
            if args.instance.is_some() {
                cfg.instance = args.instance;
            }
            if args.pool.is_some() {
                cfg.pool = args.pool;
            }
            set(&mut cfg.out, args.common.out);
            RunConfig::Benchmark(cfg)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match resolve(cli.command).and_then(|cfg| commands::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
