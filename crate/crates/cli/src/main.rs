//! `seaice`: synthetic data, tiling, splitting, statistics, training and
//! evaluation for the sea-ice patch classifier.
//!
//! Every subcommand accepts `--config <json>`; keys mirror the long flag
//! names with `-` replaced by `_`, and flags given on the command line win.

mod args;
mod commands;
mod error;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::Tile(a) => commands::tile(a),
        Command::Split(a) => commands::split(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
