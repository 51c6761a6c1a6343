use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfg_lab_cli::{run, validate, CliError, Kind, LoadedConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "mfg-lab",
    version,
    about = "Mean field game experiments on the flat torus",
    override_usage = "mfg-lab <KIND> --config <PATH> [--output <DIR>] [--seed <U64>] [--threads <N>]\n       mfg-lab validate --config <PATH>",
    after_help = "Kinds: solve, fictitious-play, stability, isolation, nonuniqueness, convergence-study.\nMFG_LAB_THREADS is used when --threads is absent."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config without solving anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    #[command(external_subcommand)]
    Run(Vec<String>),
}

#[derive(Parser)]
#[command(name = "mfg-lab <kind>")]
struct RunArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "MFG_LAB_THREADS")]
    threads: Option<usize>,
}

fn report(e: CliError) -> ExitCode {
    eprintln!("mfg-lab: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let loaded = match LoadedConfig::read(&config) {
                Ok(c) => c,
                Err(e) => return report(e),
            };
            match validate(&loaded) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
                    if r.passed() {
                        ExitCode::SUCCESS
                    } else {
                        report(CliError::Validation(r.failures))
                    }
                }
                Err(e) => report(e),
            }
        }
        Command::Run(args) => {
            let args = match RunArgs::try_parse_from(std::iter::once("mfg-lab".to_string()).chain(args)) {
                Ok(a) => a,
                Err(e) => e.exit(),
            };
            let loaded = match LoadedConfig::read(&args.config) {
                Ok(c) => c,
                Err(e) => return report(e),
            };
            let opts = RunOptions { output: args.output, seed: args.seed, threads: args.threads };
            let start = std::time::Instant::now();
            match run(&loaded, args.kind, &opts) {
                Ok(out) => {
                    eprintln!("mfg-lab: {} finished in {:.1?}, wrote {}", args.kind.name(), start.elapsed(), out.output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => report(e),
            }
        }
    }
}
