use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fedsl", version, about = "Federated split learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by `run` and every sweep.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` config file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global seed. Overrides any `seed` key in the config.
    #[arg(long)]
    pub seed: u64,
    /// Override a config key, e.g. `--set rho_f=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory. Overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated settings to sweep instead of the defaults.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment; writes metrics.csv and report.json.
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Record per-round weight snapshots (snapshot.bin) and add the
        /// deviation check to report.json.
        #[arg(long)]
        snapshot: bool,
    },
    /// Final sparsity rho_f (default 0,0.35,0.5,0.7).
    SweepPrune(SweepArgs),
    /// Quantizer bits q, 0 = off (default 0,4,8).
    SweepQuant(SweepArgs),
    /// Aggregation interval I (default 1,5,10).
    SweepAgg(SweepArgs),
    /// Split layer L_c (default every valid split).
    SweepSplit(SweepArgs),
    /// Number of clients K (default 2,5,10).
    SweepClients(SweepArgs),
    /// Dropout rate p (default 0,0.3,0.5,0.7).
    SweepDropout(SweepArgs),
    /// Evaluate the convergence bound for a parameter file and print how it
    /// moves with I, rho_f, L_c and q.
    Bound {
        file: PathBuf,
    },
    /// Check the client-deviation bound on a recorded snapshot.
    CheckLemma2 {
        /// Config the snapshot was produced with.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Multiplier applied to the estimated constants.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Where to write the JSON report; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
