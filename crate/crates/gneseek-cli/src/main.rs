//! Command-line entry point: `run` executes one scenario, `compare` runs
//! both communication modes with the same seed and reports the saving.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gneseek::dynamics::Mode;
use gneseek::scenario::load_scenario;
use gneseek_cli::{compare_modes, render_compare, render_summary, run, Overrides};

#[derive(Parser)]
#[command(
    name = "gneseek",
    version,
    about = "Simulates distributed equilibrium seeking in online games with coupling constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write CSV, SVG, and manifest artifacts
    Run(RunArgs),
    /// Run both communication modes with identical seeds and compare them
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Event,
}

impl From<ModeArg> for Mode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Continuous => Mode::Continuous,
            ModeArg::Event => Mode::Event,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Builtin scenario id ("paper5") or path to a scenario TOML file
    #[arg(long)]
    scenario: String,
    /// Integrator step size
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time span
    #[arg(long)]
    horizon: Option<f64>,
    /// Multiplier consensus gain
    #[arg(long = "k-mu")]
    k_mu: Option<f64>,
    /// Upper cap on the exponential consensus gain
    #[arg(long = "gain-cap")]
    gain_cap: Option<f64>,
    /// Initial value of every player's beta internal variable
    #[arg(long)]
    beta0: Option<f64>,
    /// Initial value of every player's gamma internal variable
    #[arg(long)]
    gamma0: Option<f64>,
    /// Seed for the initial action draw
    #[arg(long)]
    seed: Option<u64>,
    /// Record every k-th step in the sampled outputs
    #[arg(long = "sample-stride")]
    sample_stride: Option<usize>,
    /// Directory artifacts are written into
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: PathBuf,
}

impl CommonArgs {
    fn overrides(&self, mode: Option<ModeArg>) -> Overrides {
        Overrides {
            mode: mode.map(Mode::from),
            dt: self.dt,
            horizon: self.horizon,
            k_mu: self.k_mu,
            gain_cap: self.gain_cap,
            beta0: self.beta0,
            gamma0: self.gamma0,
            seed: self.seed,
            sample_stride: self.sample_stride,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Communication mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let scenario = load_scenario(&args.common.scenario)
                .with_context(|| format!("loading scenario {}", args.common.scenario))?;
            let artifacts = run(&scenario, &args.common.overrides(args.mode), &args.common.out_dir)?;
            print!("{}", render_summary(&artifacts.summary));
            println!("artifacts in {}", artifacts.out_dir.display());
        }
        Command::Compare(args) => {
            let scenario = load_scenario(&args.common.scenario)
                .with_context(|| format!("loading scenario {}", args.common.scenario))?;
            let report = compare_modes(&scenario, &args.common.overrides(None), &args.common.out_dir)?;
            print!("{}", render_compare(&report));
            println!("artifacts in {}", args.common.out_dir.display());
        }
    }
    Ok(())
}
