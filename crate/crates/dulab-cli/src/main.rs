use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dulab_cli::{table1, CliError, CliResult, Overrides};

#[derive(Parser)]
#[command(name = "dulab", version, about = "Dual-unitary circuit experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare saturated multipartite-profile runs with the reference table.
    Table1 {
        /// Sidecars, CSV files, or directories holding them.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Accept runs covering only some of the four (L, q) combinations.
        #[arg(long)]
        partial: bool,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Run { config, seed, workers, out } => {
            if workers == Some(0) {
                return Err(CliError::Validation("workers: must be >= 1".into()));
            }
            let files = dulab_cli::run_config(&config, &Overrides { seed, workers, out })?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Cmd::Table1 { runs, partial, csv } => {
            let t = table1::build_table1(&runs, partial)?;
            print!("{}", t.render());
            if let Some(p) = csv {
                t.to_table().write(&p)?;
            }
        }
    }
    Ok(())
}
