//! Reproducible command-line runs over the soundocc library.

mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use soundocc::occupancy::Method;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "soundocc",
    version,
    about = "Room occupancy detection from sound-sensor histograms"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: soundocc::Error| e.to_string())
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true, env = "SOUNDOCC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for synthesis, data splits and weight init.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated room ids to process.
    #[arg(long, global = true, value_delimiter = ',')]
    pub rooms: Vec<String>,
    /// threshold, cluster, classifier or semi; repeatable or comma-separated.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    /// Output root; runs land in <out>/<command>/<tag>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run directory name; defaults to a UTC timestamp.
    #[arg(long, global = true)]
    pub tag: Option<String>,
    /// Abort on the first malformed input row.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Offset for office hours: UTC, Z or ±HH:MM.
    #[arg(long, global = true)]
    pub tz: Option<String>,
    /// Slot file, CSV or JSONL.
    #[arg(long, global = true)]
    pub slots: Option<PathBuf>,
    /// Ground-truth occupancy CSV.
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    /// Verdict file written by detect.
    #[arg(long, global = true)]
    pub verdicts: Option<PathBuf>,
    /// Trained classifier JSON.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// JSON array of room thresholds.
    #[arg(long, global = true)]
    pub room_config: Option<PathBuf>,
    /// Rooms whose threshold labels train the models.
    #[arg(long, global = true, value_delimiter = ',')]
    pub train_rooms: Vec<String>,
    /// Rooms held out for transfer evaluation.
    #[arg(long, global = true, value_delimiter = ',')]
    pub test_rooms: Vec<String>,
    /// Cluster all rooms together rather than per room.
    #[arg(long, global = true)]
    pub pool: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic slots, ground truth and calibrated thresholds.
    Synth {
        /// Weekdays to generate.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train the autoencoder and classifier on threshold labels.
    Train,
    /// Run the selected detection methods.
    Detect {
        /// Train the classifier inline when no model is given.
        #[arg(long)]
        train: bool,
    },
    /// Attribute cooling energy to occupied and unoccupied slots.
    Energy,
    /// Score verdicts against ground truth, or run a cross-room transfer
    /// when test rooms are given.
    Evaluate,
}

impl CommonArgs {
    /// Apply flags over the loaded (or default) config.
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if !self.rooms.is_empty() {
            c.select_rooms = self.rooms.clone();
        }
        if !self.method.is_empty() {
            c.methods = self.method.clone();
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        c.strict |= self.strict;
        if self.tz.is_some() {
            c.timezone = self.tz.clone();
        }
        for (flag, field) in [
            (&self.slots, &mut c.slots),
            (&self.truth, &mut c.truth),
            (&self.verdicts, &mut c.verdicts),
            (&self.model, &mut c.model),
            (&self.room_config, &mut c.room_config),
        ] {
            if flag.is_some() {
                *field = flag.clone();
            }
        }
        if !self.train_rooms.is_empty() {
            c.train_rooms = self.train_rooms.clone();
        }
        if !self.test_rooms.is_empty() {
            c.test_rooms = self.test_rooms.clone();
        }
        c.cluster.pooled |= self.pool;
        Ok(c)
    }
}

/// Execute one command and return its run directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let mut config = cli.common.config()?;
    if let Command::Synth { days: Some(d) } = &cli.command {
        config.days = *d;
    }
    let config = config.resolve()?;
    let tag = cli.common.tag.as_deref();
    match &cli.command {
        Command::Synth { .. } => commands::synth(&config, tag),
        Command::Train => commands::train(&config, tag),
        Command::Detect { train } => commands::detect(&config, tag, *train),
        Command::Energy => commands::energy(&config, tag),
        Command::Evaluate => commands::evaluate(&config, tag),
    }
}
