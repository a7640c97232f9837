use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use strider_cli::{Overrides, EvalArgs};
use strider_core::env::TerrainChoice;
use strider_core::sim2sim::VariantId;

#[derive(Parser)]
#[command(name = "strider", version, about = "Biped simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run config (TOML); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Robot description (TOML) instead of the built-in one.
    #[arg(long)]
    robot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum TerrainArg {
    Flat,
    Rough,
    Slope,
}

#[derive(Subcommand)]
enum Cmd {
    /// Distinct link components per leg configuration.
    Counts,
    /// Train a policy with PPO.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        num_envs: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Velocity-tracking evaluation in variant A, B or both.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Both variants and a comparison when omitted.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        /// "default", "zero" or a TOML profile file.
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, value_enum)]
        terrain: Option<TerrainArg>,
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Compare two stored tracking reports.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the CAN frames for a CSV of joint targets as hex.
    Dump {
        /// CSV with 10 joint targets (rad) per row.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn overrides(c: Common) -> Overrides {
    Overrides {
        config: c.config,
        seed: c.seed,
        robot: c.robot,
        ..Overrides::default()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    match cli.cmd {
        Cmd::Counts => print!("{}", strider_cli::counts_table()),
        Cmd::Train {
            common,
            num_envs,
            iterations,
            out: dir,
        } => {
            let ov = Overrides {
                num_envs,
                iterations,
                ..overrides(common)
            };
            strider_cli::train(&ov, &dir, &mut io::stderr())?;
        }
        Cmd::Eval {
            common,
            checkpoint,
            variant,
            profile,
            terrain,
            out: dir,
        } => {
            let args = EvalArgs {
                overrides: overrides(common),
                checkpoint,
                variant: variant.map(|v| match v {
                    Variant::A => VariantId::A,
                    Variant::B => VariantId::B,
                }),
                profile,
                terrain: terrain.map(|t| match t {
                    TerrainArg::Flat => TerrainChoice::Flat,
                    TerrainArg::Rough => TerrainChoice::Rough,
                    TerrainArg::Slope => TerrainChoice::Slope,
                }),
            };
            strider_cli::eval(&args, &dir, &mut out)?;
        }
        Cmd::Compare { report_a, report_b, out: dir } => strider_cli::compare(&report_a, &report_b, &dir, &mut out)?,
        Cmd::Dump { input, common } => strider_cli::dump::dump(&input, &overrides(common), &mut out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
