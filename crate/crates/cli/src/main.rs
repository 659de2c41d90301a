//! `svshape`: analyze checkpoints, characterize them, run the distribution
//! generator and reshape LoRA initializations.
//!
//! Exit codes: 0 success, 1 error, 2 usage error, 3 artifacts written but a
//! validation failed.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use svshape::characterize::PRESETS;

pub const VALIDATION_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "svshape", version, about = "Singular-value distance statistics and LoRA initialization shaping")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "svshape-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MSVs, distance pools, fits and histograms of a checkpoint.
    Analyze(AnalyzeArgs),
    /// Referenced-weight groups of a checkpoint.
    Characterize(CharacterizeArgs),
    /// Generator matrices and the class of their distance pool.
    Generate(GenerateArgs),
    /// LoRA initialization shaped by a characteristic table.
    Reshape(ReshapeArgs),
    /// Shape, digest and distribution checks of an exported adapter.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// Checkpoint file or directory; relative names are also looked up in
    /// the cache directory.
    pub model: PathBuf,

    #[arg(long, default_value_t = svshape::spectral::DEFAULT_RANK)]
    pub rank: usize,

    /// Clamp the rank to the smallest projection dimension.
    #[arg(long)]
    pub clamp_rank: bool,

    /// JSON name schema for non-standard tensor names.
    #[arg(long)]
    pub names: Option<PathBuf>,

    /// Directory holding downloaded checkpoints.
    #[arg(long, env = "SVSHAPE_CACHE")]
    #[serde(skip)]
    pub cache: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, default_value_t = 50)]
    pub bins: usize,

    #[arg(long, default_value_t = 36)]
    pub sectors: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CharacterizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Reference-kind preference.
    #[arg(long, default_value = "default", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawArg {
    Pareto,
    Gaussian,
    Constant,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    /// Generator config JSON; overrides `--law`, `--n` and `--m`.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Count law with its default parameters.
    #[arg(long, value_enum, default_value = "pareto")]
    pub law: LawArg,

    #[arg(long, default_value_t = 64)]
    pub n: usize,

    #[arg(long, default_value_t = 64)]
    pub m: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
pub enum ModeArg {
    #[value(name = "paper")]
    Paper,
    #[value(name = "zero-b")]
    ZeroB,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
pub enum TargetPreset {
    #[value(name = "llama-3.2-1b")]
    Llama32_1b,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReshapeArgs {
    /// Characteristic table JSON of the reference model.
    #[arg(long)]
    pub table: PathBuf,

    /// Target spec JSON.
    #[arg(long, required_unless_present = "target_preset", conflicts_with = "target_preset")]
    pub target: Option<PathBuf>,

    /// Built-in target dims instead of `--target`.
    #[arg(long, value_enum)]
    pub target_preset: Option<TargetPreset>,

    /// Generator config JSON (default: Pareto law, n = 64).
    #[arg(long)]
    pub generator: Option<PathBuf>,

    /// Overrides the target's mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Overrides the target's rank.
    #[arg(long)]
    pub rank: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ValidateArgs {
    /// Adapter safetensors with its JSON sidecar.
    #[arg(long)]
    pub adapter: PathBuf,

    #[arg(long)]
    pub table: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a, &cli.out, cli.seed),
        Command::Characterize(a) => commands::characterize(a, &cli.out, cli.seed),
        Command::Generate(a) => commands::generate(a, &cli.out, cli.seed),
        Command::Reshape(a) => commands::reshape(a, &cli.out, cli.seed),
        Command::Validate(a) => commands::validate(a, &cli.out, cli.seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VALIDATION_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
