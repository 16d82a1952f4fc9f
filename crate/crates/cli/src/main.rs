use std::process::ExitCode;

use clap::Parser;
use log::{error, warn};

use unionclust_cli::cli::{run, Cli};

fn configure_threads() {
    let Ok(raw) = std::env::var("UNIONCLUST_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                warn!("could not size the thread pool: {e}");
            }
        }
        _ => warn!("ignoring UNIONCLUST_THREADS={raw:?}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
