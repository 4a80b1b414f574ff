//! `sgn <command> --config <path> [--out <dir>] [--seed <u64>]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sgn_cli::{run, Command, RunConfig, Status};

#[derive(Parser, Debug)]
#[command(name = "sgn", version, about = "Preconditioned SGN solver benchmarks and simulations")]
struct Args {
    /// One of pcg-bench, eig-study, quasi-opt, converge, simulate.
    command: String,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random right-hand sides; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(status) => match status {
            Status::Failed => ExitCode::from(3),
            _ => ExitCode::SUCCESS,
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> sgn_cli::CliResult<Status> {
    let command: Command = args.command.parse()?;
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = args.out.clone().or_else(|| cfg.output.dir.clone());
    let rec = run(command, &cfg, out.as_deref())?;
    for d in &rec.diagnostics {
        eprintln!("warning: {d}");
    }
    match &out {
        Some(dir) => println!("{command}: {:?}, record written to {}", rec.status, dir.join("record.json").display()),
        None => println!("{command}: {:?}", rec.status),
    }
    for (k, v) in &rec.summary {
        println!("  {k} = {v}");
    }
    Ok(rec.status)
}
