//! The `depthmend` command line: registration, target generation, training,
//! restoration, evaluation, synthetic corruption and benchmarking.
//!
//! Settings come from a `key = value` file (`--config`) and `--section.key`
//! flags; see [`config::SCHEMA`]. Exit codes: 0 success, 2 configuration
//! error, 3 data error, 4 numeric failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod scene;

use config::{extract_overrides, PipelineConfig, Values};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "depthmend", version, about = "Self-supervised depth video restoration")]
#[command(after_help = "Any configuration key can also be given as --section.key VALUE.")]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; recorded in each output header.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Resample color frames onto the depth grid and write coverage masks.
    Register,
    /// Write color-guided inpainted targets for every training window.
    MakeTargets,
    /// Train a denoiser and write the best checkpoint and a loss log.
    Train,
    /// Restore every frame from t = 2 on with a trained model.
    Restore,
    /// Compute the metric report and the temporal difference series.
    Evaluate,
    /// Corrupt a clean sequence with the synthetic sensor noise model.
    SynthNoise,
    /// Time inference at several resolutions and fit the scaling exponent.
    Bench,
    /// Write a procedural RGB-D sequence with its rig file.
    SynthScene,
    /// List every configuration key with its default.
    Keys,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Register => "register",
            Command::MakeTargets => "make-targets",
            Command::Train => "train",
            Command::Restore => "restore",
            Command::Evaluate => "evaluate",
            Command::SynthNoise => "synth-noise",
            Command::Bench => "bench",
            Command::SynthScene => "synth-scene",
            Command::Keys => "keys",
        }
    }
}

/// Run with full argument list (program name first); returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = match extract_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("depthmend: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("depthmend: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, overrides: Values) -> CliResult<()> {
    let mut values = match &cli.config {
        Some(p) => Values::load(p)?,
        None => Values::default(),
    };
    values.merge(overrides);
    let cfg = PipelineConfig::new(values, cli.seed)?;
    if cli.jobs > 0 {
        // Fails only if the global pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let ctx = commands::Ctx {
        cfg,
        out: cli.out.clone(),
        command: cli.command.name(),
    };
    match cli.command {
        Command::Register => commands::register(&ctx),
        Command::MakeTargets => commands::make_targets(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Restore => commands::restore(&ctx),
        Command::Evaluate => commands::evaluate(&ctx),
        Command::SynthNoise => commands::synth_noise(&ctx),
        Command::Bench => bench::command(&ctx),
        Command::SynthScene => commands::synth_scene(&ctx),
        Command::Keys => {
            for k in config::SCHEMA {
                println!("{:<28} {:<8} {:<34} {}", k.name, k.kind.to_string(), k.default.unwrap_or("-"), k.help);
            }
            Ok(())
        }
    }
}
