use std::path::PathBuf;

use clap::Parser;
use weinstein_lab::cli::{execute, Command};

#[derive(Parser)]
#[command(name = "weinstein-lab", version, about = "Numerical checks of Weinstein structures near normal crossings")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; takes precedence over WEINSTEIN_LAB_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    std::process::exit(execute(args.command, &args.config, args.seed, args.out.as_deref()));
}
