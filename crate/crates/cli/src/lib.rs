//! `detnet` command-line driver.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use detnet_core::{FixedChannelSpec, SystemDims};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "detnet", version, about = "Train and evaluate DetNet MIMO detectors")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the training and sweep seeds of the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write its checkpoint and training log.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to write (default: output.checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training log CSV (default: output.train_log).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the configured detectors over SNR and write a BER CSV.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to read (default: output.checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Results CSV (default: output.results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add a row for every DetNet stopped after this layer.
        #[arg(long)]
        exit_layer: Option<usize>,
    },
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to check.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Build a fixed correlated channel and save it.
    MakeChannel {
        /// Take the fixed-channel spec from this config.
        #[arg(long, conflicts_with_all = ["k", "n", "rho", "channel_seed"])]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0.55)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        channel_seed: u64,
        /// Channel file to write (default: the config's channel_file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

/// Runs a parsed command, writing human-readable progress to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only when a pool already exists, which then stays in use.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train { config, checkpoint, out: log } => {
            let cfg = load(&config)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.output.checkpoint.clone());
            let log = log.unwrap_or_else(|| cfg.output.train_log.clone());
            commands::cmd_train(&cfg, &checkpoint, &log, out)?;
        }
        Command::Eval {
            config,
            checkpoint,
            out: results,
            exit_layer,
        } => {
            let cfg = load(&config)?;
            let results = results.unwrap_or_else(|| cfg.output.results.clone());
            commands::cmd_eval(&cfg, checkpoint.as_deref(), &results, exit_layer, out)?;
        }
        Command::Gradcheck { k, n, layers, seed, seeds } => {
            let dims = SystemDims::new(k, n).map_err(|e| CliError::Usage(e.to_string()))?;
            if layers == 0 {
                return Err(CliError::Usage("--layers must be at least 1".into()));
            }
            commands::cmd_gradcheck(dims, layers, seed, seeds, out)?;
        }
        Command::MakeChannel {
            config,
            k,
            n,
            rho,
            channel_seed,
            out: path,
        } => {
            let (spec, default_path) = match config {
                Some(p) => {
                    let cfg = ExperimentConfig::load(&p)?;
                    let spec = *cfg
                        .fixed_spec()
                        .ok_or_else(|| CliError::Config("make-channel needs a fixed channel_mode".into()))?;
                    (spec, cfg.channel_file)
                }
                None => {
                    let dims = SystemDims::new(k, n).map_err(|e| CliError::Usage(e.to_string()))?;
                    let spec = FixedChannelSpec {
                        rho,
                        dims,
                        seed: channel_seed,
                    };
                    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                    (spec, None)
                }
            };
            let path = path
                .or(default_path)
                .ok_or_else(|| CliError::Usage("make-channel needs --out or a config channel_file".into()))?;
            commands::make_channel(&spec, &path)?;
            let _ = writeln!(out, "wrote {}x{} channel to {}", spec.dims.n_rx, spec.dims.k_tx, path.display());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command. Help and version requests return
/// `Ok` after printing.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    execute(cli, out)
}
