use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "extprob", version, about = "Extended probabilities for quantum histories")]
pub struct Cli {
    /// Decoherence tolerance (and greedy-search target for `coarsen`).
    #[arg(long, global = true, default_value_t = extprob::histories::DEFAULT_DECOHERENCE_TOL)]
    pub tol: f64,

    /// Directory for artifacts and `manifest.json`. Without it the primary artifact goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Seed for a random model, used when `--model` is absent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Hilbert-space dimension of a random model.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,

    /// Number of time slots of a random model.
    #[arg(long, default_value_t = 2)]
    pub slots: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extended and DH probabilities for every history.
    Eval(ModelArgs),
    /// Decoherence functional and flags, optionally after coarse graining.
    Decohere {
        #[command(flatten)]
        model: ModelArgs,
        /// Named partition from the model, or a literal such as `[[0],[1,2]]`.
        #[arg(long)]
        partition: Option<String>,
    },
    /// Construct strong records and verify them.
    Records {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        partition: Option<String>,
    },
    /// Apply a partition, or run the greedy decohering search with target `--tol`.
    Coarsen {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        partition: Option<String>,
    },
    /// Product-rule report for a composite model.
    Composite {
        #[arg(long)]
        model: PathBuf,
    },
    /// Fundamental distribution w(h) and cylinder consistency.
    Finegrained {
        #[arg(long)]
        model: PathBuf,
    },
    /// Two-slit curves, binned values and a bin-width sweep.
    Twoslit {
        /// Bin width times k.
        #[arg(long = "kDelta", conflicts_with = "bins")]
        k_delta: Option<f64>,
        /// Number of equal bins on the screen range.
        #[arg(long)]
        bins: Option<usize>,
        /// Comma-separated kΔ values for the sweep.
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20,25,50")]
        sweep: Vec<f64>,
        /// Samples of the density curve.
        #[arg(long, default_value_t = 1001)]
        samples: usize,
        /// Quadrature panels per bin (a multiple of 8).
        #[arg(long, default_value_t = 128)]
        panels: usize,
    },
    /// The three-box table.
    Threebox,
    /// Gains table for bets on A and not-A.
    Dutchbook {
        #[arg(long = "pA", allow_hyphen_values = true)]
        p_a: Option<f64>,
        #[arg(long = "pNotA", allow_hyphen_values = true)]
        p_not_a: Option<f64>,
        #[arg(long = "stakeA", allow_hyphen_values = true, default_value_t = 1.0)]
        stake_a: f64,
        #[arg(long = "stakeNotA", allow_hyphen_values = true, default_value_t = 0.0)]
        stake_not_a: f64,
    },
    /// Re-run the invocation recorded in a manifest.
    Run {
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> extprob::Result<()> {
    if let Command::Run { manifest } = &cli.command {
        let m = RunManifest::read(manifest)?;
        let cli = Cli::try_parse_from(&m.argv).map_err(|e| extprob::Error::InvalidConfig(e.to_string()))?;
        if matches!(cli.command, Command::Run { .. }) {
            return Err(extprob::Error::InvalidConfig("manifest cannot invoke `run`".into()));
        }
        return execute(cli, m.argv);
    }
    let artifacts = commands::run(&cli)?;
    match &cli.out {
        Some(dir) => {
            let manifest = RunManifest::new(&cli, argv, &artifacts);
            manifest::write_artifacts(dir, &artifacts, &manifest)
        }
        None => {
            if let Some(first) = artifacts.first() {
                print!("{}", first.contents);
            }
            Ok(())
        }
    }
}
