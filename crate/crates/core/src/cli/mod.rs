//! Command-line front end.
//!
//! Every subcommand builds a [`Report`], prints a one-line-per-check
//! summary (or the JSON itself with `--json`), writes `report.json` and any
//! CSV tables under `--out`, and exits 1 when a check fails.

mod config;
mod run;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::Report;
use crate::rotation::Profile;

pub use config::merge_config;

#[derive(Parser, Debug)]
#[command(name = "cocycles", version, about = "Skew-product cocycle constructions and certificate checks")]
pub struct Cli {
    /// Seed for every random choice; reports are reproducible per seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for report.json and CSV tables.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// Override the default numerical tolerance of the subcommand.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Plain-text `key = value` file; keys mirror the long flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Canonical and balanced difference blocks.
    Blocks(BlocksArgs),
    /// Squashable product cocycle over a mixed-radix odometer.
    Odometer(OdometerArgs),
    /// Smooth cocycle over a rational approximation of a rotation.
    Rotation(RotationArgs),
    /// Finite essential value certificate on a built system.
    Evc(EvcArgs),
    /// Maharam skew product and its dilation flow.
    Maharam(MaharamArgs),
}

#[derive(Args, Debug, Clone)]
pub struct BlocksArgs {
    /// Targets gamma_1..gamma_m.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub gamma: Vec<f64>,
    /// Check witness counts and the tail bound.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OdometerArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub mu: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub nu: Vec<u64>,
    /// Squash constant, in (1, e).
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Random points for the defect checks.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Also certify the rigid essential value condition at every level.
    #[arg(long)]
    pub evc: bool,
    /// Radius of the target window around g_k.
    #[arg(long, default_value_t = 1e-6)]
    pub radius: f64,
    /// Length of the CSV orbit trace.
    #[arg(long, default_value_t = 64)]
    pub trace: u64,
}

#[derive(Args, Debug, Clone)]
pub struct RotationArgs {
    /// Partial quotients a_1..a_N.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pq: Vec<u64>,
    /// Indices of the huge quotients, one per level; chosen greedily when omitted.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Smoothness of the bumps.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Toy)]
    pub profile: ProfileArg,
    /// Random points for the coboundary identity.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileArg {
    Toy,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Toy => Profile::Toy,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Odometer,
    Rotation,
}

#[derive(Args, Debug, Clone)]
pub struct EvcArgs {
    #[arg(long, value_enum)]
    pub system: SystemKind,
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub pq: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Toy)]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Target value; defaults to g_k (odometer) or q_(n_1 - 1) d_1 (rotation).
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Allowed deficiency per cell, relative to the cell mass.
    #[arg(long, default_value_t = 0.6)]
    pub eps: f64,
    /// Largest return time N.
    #[arg(long, default_value_t = 64)]
    pub bound: u64,
    /// Partition level (odometer) or number of arcs (rotation).
    #[arg(long, default_value_t = 1)]
    pub depth: u64,
    /// Radius of the target window.
    #[arg(long, default_value_t = 1e-6)]
    pub radius: f64,
}

#[derive(Args, Debug, Clone)]
pub struct MaharamArgs {
    /// JSON file with `masses` (fraction strings) and `perm`.
    #[arg(long)]
    pub system: PathBuf,
    /// Flow times.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub t: Vec<f64>,
    /// Random boxes per flow time.
    #[arg(long, default_value_t = 1000)]
    pub boxes: usize,
}

/// Output of one subcommand: the report and named CSV tables.
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<(String, Vec<u8>)>,
}

/// Parses `args` (including the program name), runs the subcommand and
/// writes its outputs. Returns whether every check passed.
pub fn main_with_args(args: &[String]) -> anyhow::Result<bool> {
    let args = merge_config(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(true);
        }
        Err(e) => {
            let text = e.render().to_string();
            return Err(anyhow::anyhow!(text.trim_start_matches("error: ").trim_end().to_string()));
        }
    };
    let outcome = run::run(&cli)?;
    if let Some(dir) = &cli.out {
        write_outputs(dir, &outcome)?;
    }
    if cli.json {
        println!("{}", outcome.report.to_json());
    } else {
        print!("{}", outcome.report.summary());
    }
    Ok(outcome.report.pass)
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("report.json");
    outcome
        .report
        .write_json(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    for (name, bytes) in &outcome.tables {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
