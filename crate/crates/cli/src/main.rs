use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use erd_cli::config::PropcheckConfig;
use erd_cli::io::read_json;
use erd_cli::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "erd",
    version,
    about = "Novelty detection by ensembles with regularized disagreement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and its labeled/unlabeled/test split.
    Gen(Io),
    /// Train the classifier on the labeled set.
    Pretrain(Io),
    /// Fine-tune the disagreement ensemble.
    Erd(Io),
    /// Train a vanilla ensemble or a binary discriminator.
    Baseline(Io),
    /// Score the test mixture and report AUROC, TNR@95 and thresholds.
    Eval(Io),
    /// Repeat the disagreement pipeline along one configuration axis.
    Sweep(Io),
    /// Check the early-stopping property on clusterable data with the shallow model.
    Propcheck(Io),
}

fn run(cmd: &Command) -> Result<String, CliError> {
    fn go<C: serde::de::DeserializeOwned>(
        io: &Io,
        f: impl FnOnce(&C, &Path) -> Result<String, CliError>,
    ) -> Result<String, CliError> {
        let config: C = read_json(&io.config)?;
        f(&config, &io.out)
    }
    match cmd {
        Command::Gen(io) => go(io, commands::gen),
        Command::Pretrain(io) => go(io, commands::pretrain),
        Command::Erd(io) => go(io, commands::erd),
        Command::Baseline(io) => go(io, commands::baseline),
        Command::Eval(io) => go(io, commands::eval),
        Command::Sweep(io) => go(io, commands::sweep),
        Command::Propcheck(io) => go::<PropcheckConfig>(io, commands::propcheck),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
