//! `tsrcdf` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 encoder provider
//! or service error. Failures print one JSON line on stderr.

mod args;
mod commands;
mod config;
mod error;

use clap::error::ErrorKind;
use clap::Parser;

use crate::error::CliError;

fn run(argv: Vec<String>) -> i32 {
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(first).to_json_line());
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("TSRCDF_LOG").try_init();

    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.code()
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args().collect()));
}
