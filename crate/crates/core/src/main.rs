use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zerodyn::cli::{
    cmd_analyze, cmd_simulate, cmd_transform, cmd_verify, cmd_zero_dynamics, RunConfig,
    SimulatePolicy,
};

#[derive(Parser)]
#[command(
    name = "zerodyn",
    version,
    about = "Closed-form normal coordinates and zero dynamics for mechanical-class nonlinear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Registered model name
    #[arg(long, default_value = "spacecraft")]
    model: String,
    /// JSON parameter file overriding the model defaults
    #[arg(long)]
    params: Option<PathBuf>,
    /// Seed for all random sampling
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random sample states
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Integration step (seconds)
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Integration horizon (seconds)
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Output directory for reports and trajectories
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn into_config(self) -> RunConfig {
        RunConfig {
            model: self.model,
            params_path: self.params,
            seed: self.seed,
            samples: self.samples,
            step: self.step,
            horizon: self.horizon,
            out_dir: self.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions of a model and report them
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Print the null basis and normal coordinates at a given state
    Transform {
        #[command(flatten)]
        common: Common,
        /// Comma-separated state (n entries, or a full trajectory CSV row)
        #[arg(long)]
        state: String,
    },
    /// Integrate the closed loop and export the trajectory
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Control policy: "linearizing" or "open-loop"
        #[arg(long, default_value = "linearizing")]
        policy: String,
        /// Constant commanded output acceleration (comma-separated, linearizing)
        #[arg(long)]
        v: Option<String>,
        /// Constant input (comma-separated, open-loop)
        #[arg(long)]
        tau: Option<String>,
        /// Initial state (comma-separated; defaults to a seeded draw)
        #[arg(long)]
        x0: Option<String>,
    },
    /// Compare the closed-form zero dynamics against constrained simulation
    ZeroDynamics {
        #[command(flatten)]
        common: Common,
        /// Initial internal state (comma-separated; defaults to a seeded draw)
        #[arg(long)]
        eta0: Option<String>,
    },
    /// Run the full invariant suite
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_vec(text: &str) -> Result<Vec<f64>, zerodyn::Error> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| zerodyn::Error::Config(format!("cannot parse vector: {e}")))
}

fn run() -> Result<i32, zerodyn::Error> {
    match Cli::parse().command {
        Command::Analyze { common } => cmd_analyze(&common.into_config()),
        Command::Transform { common, state } => cmd_transform(&common.into_config(), &state),
        Command::Simulate {
            common,
            policy,
            v,
            tau,
            x0,
        } => {
            let opts = SimulatePolicy {
                kind: policy,
                v: v.as_deref().map(parse_vec).transpose()?,
                tau: tau.as_deref().map(parse_vec).transpose()?,
                x0: x0.as_deref().map(parse_vec).transpose()?,
            };
            cmd_simulate(&common.into_config(), &opts)
        }
        Command::ZeroDynamics { common, eta0 } => {
            cmd_zero_dynamics(&common.into_config(), eta0.as_deref())
        }
        Command::Verify { common } => cmd_verify(&common.into_config()),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
