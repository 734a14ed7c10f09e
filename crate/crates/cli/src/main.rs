use std::process::ExitCode;

use clap::Parser;
use ptg_cli::{commands::exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            let mut last = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !last.contains(&text) {
                    msg.push_str(if msg.is_empty() { "" } else { ": " });
                    msg.push_str(&text);
                }
                last = text;
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
