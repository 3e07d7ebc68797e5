//! Command-line front end for `hybridsurf`: grid ingestion, configuration
//! and the `fit`, `simulate`, `study` and `threshold` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

use config::{Cli, Command, FileConfig, FitConfig, SimulateConfig, StudyConfig, ThresholdConfig};
use error::Result;

/// Resolves the configuration and runs the chosen subcommand.
pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Fit(a) => commands::fit(&FitConfig::resolve(a, file.fit)?),
        Command::Simulate(a) => commands::simulate(&SimulateConfig::resolve(a, file.simulate)?),
        Command::Study(a) => commands::study(&StudyConfig::resolve(a, file.study)?),
        Command::Threshold(a) => commands::threshold(&ThresholdConfig::resolve(a, file.threshold)?),
    }
}
