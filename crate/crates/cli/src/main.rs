mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use su2drift::constants::{DEFAULT_OPT_TOL, DEFAULT_RESTARTS, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "su2drift", version, about = "Collective SU(2) diffusion noise on qubits")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed for every random stream.
    #[arg(long, global = true, env = "SU2DRIFT_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Optimizer restarts.
    #[arg(long, global = true, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Optimizer simplex tolerance.
    #[arg(long = "opt-tol", global = true, default_value_t = DEFAULT_OPT_TOL)]
    pub opt_tol: f64,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clebsch–Gordan, 6j and recoupling coefficients (twice-j arguments).
    #[command(subcommand)]
    Wigner(WignerCmd),
    /// Heat-kernel density and exact samples.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Apply the channel, build its Choi matrix, or compare with Monte Carlo.
    #[command(subcommand)]
    Channel(ChannelCmd),
    /// Three-qubit fidelity, capacity sweeps and the coherent-information
    /// threshold.
    #[command(subcommand)]
    Three(ThreeCmd),
    /// Run the invariant suite.
    Verify(VerifyArgs),
}

#[derive(Subcommand, Debug)]
pub enum WignerCmd {
    /// <j1 m1; j2 m2 | J M>
    Cg {
        #[arg(long, allow_hyphen_values = true)]
        tj1: i32,
        #[arg(long, allow_hyphen_values = true)]
        tm1: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj2: i32,
        #[arg(long, allow_hyphen_values = true)]
        tm2: i32,
        #[arg(long = "tJ", allow_hyphen_values = true)]
        tj: i32,
        #[arg(long = "tM", allow_hyphen_values = true)]
        tm: i32,
    },
    /// {j1 j2 j3; j4 j5 j6}
    Sixj {
        #[arg(long, allow_hyphen_values = true)]
        tj1: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj2: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj3: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj4: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj5: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj6: i32,
    },
    /// U(j1, j2, J, j3; j12, j23)
    U {
        #[arg(long, allow_hyphen_values = true)]
        tj1: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj2: i32,
        #[arg(long = "tJ", allow_hyphen_values = true)]
        tj: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj3: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj12: i32,
        #[arg(long, allow_hyphen_values = true)]
        tj23: i32,
    },
}

#[derive(Subcommand, Debug)]
pub enum KernelCmd {
    /// Density at class angle xi.
    Eval {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        xi: f64,
    },
    /// Exact samples as CSV: index, xi, qw, qx, qy, qz.
    Sample {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        n: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ChoiModeArg {
    Full,
    Qutrit,
}

#[derive(Subcommand, Debug)]
pub enum ChannelCmd {
    /// Apply the channel to a density matrix in JSON form.
    Apply {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choi matrix as JSON.
    Choi {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "full")]
        mode: ChoiModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the channel with its Monte Carlo average.
    McCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Input state; a seeded random state when absent.
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ThreeCmd {
    /// Fidelity of a qubit-block state, the optimum and the sphere average.
    Fidelity {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 0.0)]
        phi: f64,
        /// Emit a theta-phi grid as CSV instead.
        #[arg(long)]
        grid: bool,
        #[arg(long, default_value_t = 32)]
        grid_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One quantity over a diffusion-time grid.
    Sweep {
        #[arg(long)]
        quantity: su2drift::SweepQuantity,
        #[arg(long = "t-from")]
        t_from: f64,
        #[arg(long = "t-to")]
        t_to: f64,
        #[arg(long = "t-steps")]
        t_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Diffusion time where the coherent information reaches zero.
    Threshold {
        #[arg(long, default_value_t = 0.2)]
        lo: f64,
        #[arg(long, default_value_t = 0.4)]
        hi: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Skip the 10^5-sample Monte Carlo gates.
    #[arg(long)]
    pub quick: bool,
    /// JSON report path (with manifest); the report goes to stdout otherwise.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Corrupt one log-factorial entry to exercise the suite.
    #[arg(long, hide = true)]
    pub inject_cg_fault: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
