use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polarsim::harness::{commands, Config};

#[derive(Parser)]
#[command(name = "polarsim", version, about = "Polarforming-antenna ISAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localization error against pilot SNR.
    Localize(Common),
    /// One location interval of the two-timescale design.
    Optimize(Common),
    /// Scheme comparison along a swept parameter.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, args): (fn(&Config, &std::path::Path, u64) -> polarsim::Result<()>, Common) = match cli.command {
        Command::Localize(a) => (commands::localize, a),
        Command::Optimize(a) => (commands::optimize, a),
        Command::Sweep(a) => (commands::sweep, a),
    };
    let result = Config::load(&args.config)
        .map_err(|e| e.in_stage("config"))
        .and_then(|cfg| run(&cfg, &args.out, args.seed));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
