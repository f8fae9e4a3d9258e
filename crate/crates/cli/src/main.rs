//! `sectionflow` — command-line front end for transmission-section power flow
//! adjustment: case ingestion, scenario generation, agent training,
//! evaluation, solver export, and a forward-pass scaling benchmark.

mod artifacts;
mod clock;
mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::RunPaths;
use config::{ConfigFile, Overrides};

#[derive(Parser)]
#[command(
    name = "sectionflow",
    version,
    about = "Learned generator re-dispatch for transmission-section power flow adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by train and evaluate. Precedence: command-line flag, then
/// config-file key of the same name, then built-in default.
#[derive(Args, Debug)]
struct RunArgs {
    /// Case file path, or builtin:<two_bus|nine_bus|bench30>
    #[arg(long)]
    case: String,
    /// Section config path, or builtin:<nine_bus|bench30>
    #[arg(long)]
    sections: String,
    /// Scenario file written by `generate`
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: PathBuf,
    /// key = value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// powerformer | concat | soft_attention | powerformer_E | powerformer_S | powerformer_M
    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total environment steps to train
    #[arg(long)]
    steps: Option<u64>,
    /// Metrics cadence in environment steps
    #[arg(long)]
    eval_interval: Option<u64>,
    /// Moving-average window for the learning-curve plot
    #[arg(long)]
    smooth_window: Option<usize>,
    /// Hidden dimension d
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    enc_hidden: Option<usize>,
    #[arg(long)]
    value_hidden: Option<usize>,
    #[arg(long)]
    adv_hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eps_start: Option<f64>,
    #[arg(long)]
    eps_end: Option<f64>,
    #[arg(long)]
    eps_horizon: Option<u64>,
    #[arg(long)]
    target_interval: Option<u64>,
    /// Replay buffer capacity (transitions)
    #[arg(long)]
    buffer: Option<usize>,
    /// Environment steps per gradient update
    #[arg(long)]
    update_every: Option<u64>,
    /// Episode window for the trailing success rate
    #[arg(long)]
    trailing_window: Option<usize>,
    /// Weight of the economic reward component
    #[arg(long)]
    w_ed: Option<f64>,
    /// Per-episode step limit
    #[arg(long)]
    step_limit: Option<usize>,
    /// Require reactive bounds (when declared) for success
    #[arg(long)]
    strict_q: bool,
    /// Record real wall time in the metrics CSV (breaks byte-reproducibility)
    #[arg(long)]
    timing: bool,
    /// Active-power-only section encoding (length m instead of 4m)
    #[arg(long)]
    z_active_only: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<(RunPaths, config::RunSettings)> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            steps: self.steps,
            eval_interval: self.eval_interval,
            smooth_window: self.smooth_window,
            d: self.d,
            layers: self.layers,
            enc_hidden: self.enc_hidden,
            value_hidden: self.value_hidden,
            adv_hidden: self.adv_hidden,
            batch: self.batch,
            gamma: self.gamma,
            lr: self.lr,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_horizon: self.eps_horizon,
            target_interval: self.target_interval,
            buffer: self.buffer,
            update_every: self.update_every,
            trailing_window: self.trailing_window,
            w_ed: self.w_ed,
            step_limit: self.step_limit,
        };
        let settings = config::resolve(
            &file,
            overrides,
            self.network.as_deref(),
            self.strict_q,
            self.timing,
            self.z_active_only,
        )?;
        let paths = RunPaths {
            case: self.case.clone(),
            sections: self.sections.clone(),
            scenarios: self.scenarios.clone(),
            out: self.out.clone(),
        };
        Ok((paths, settings))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw insecure operating scenarios and write the scenario file
    Generate {
        /// Case file path, or builtin:<name>
        #[arg(long)]
        case: String,
        /// Section config path, or builtin:<name>
        #[arg(long)]
        sections: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: usize,
        /// Scenario file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent; writes checkpoint.bin, metrics.csv, curve.svg
    Train(RunArgs),
    /// Greedy evaluation of a checkpoint; writes report.txt,
    /// per_scenario.csv, embeddings.csv
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Solve one power flow and export bus/branch CSV tables
    Solve {
        /// Case file path, or builtin:<name>
        #[arg(long)]
        case: String,
        /// Use the linear DC model instead of the AC solver
        #[arg(long)]
        dc: bool,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Time one forward pass across graph sizes and fit the scaling exponent
    Bench {
        /// Comma-separated node counts
        #[arg(long, default_value = "50,100,200,400,800")]
        sizes: String,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long, default_value_t = 9)]
        reps: usize,
        /// CSV file to write
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            case,
            sections,
            seed,
            count,
            out,
        } => commands::cmd_generate(&case, &sections, seed, count, &out),
        Command::Train(args) => {
            let (paths, settings) = args.resolve()?;
            commands::cmd_train(&paths, &settings)
        }
        Command::Evaluate { run, checkpoint } => {
            let (paths, settings) = run.resolve()?;
            commands::cmd_evaluate(&paths, &settings, &checkpoint)
        }
        Command::Solve { case, dc, out } => commands::cmd_solve(&case, dc, &out),
        Command::Bench { sizes, d, reps, out } => {
            let sizes: Result<Vec<usize>, _> =
                sizes.split(',').map(|s| s.trim().parse::<usize>()).collect();
            let sizes = sizes.map_err(|_| anyhow::anyhow!("bad --sizes list"))?;
            commands::cmd_bench(&sizes, d, reps, &out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
