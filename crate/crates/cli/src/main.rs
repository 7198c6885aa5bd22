use std::process::ExitCode;

use clap::Parser;

#[tokio::main]
async fn main() -> ExitCode {
    sentinel_cli::run(sentinel_cli::config::Cli::parse()).await
}
