mod commands;
mod options;

use anyhow::Result;
use clap::Parser;
use options::{Cli, Command};

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { experiment, snapshot } => commands::run(&experiment, snapshot),
        Command::SweepPrune(args) => commands::sweep(&args, "rho_f", &["0", "0.35", "0.5", "0.7"]),
        Command::SweepQuant(args) => commands::sweep(&args, "q", &["0", "4", "8"]),
        Command::SweepAgg(args) => commands::sweep(&args, "I", &["1", "5", "10"]),
        Command::SweepSplit(args) => commands::sweep_split(&args),
        Command::SweepClients(args) => commands::sweep(&args, "K", &["2", "5", "10"]),
        Command::SweepDropout(args) => commands::sweep(&args, "p", &["0", "0.3", "0.5", "0.7"]),
        Command::Bound { file } => commands::bound(&file),
        Command::CheckLemma2 {
            config,
            snapshot,
            scale,
            out,
        } => commands::check_lemma2(&config, &snapshot, scale, out.as_deref()),
    }
}
