use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfmpe_cli::{cmd_simulate, cmd_solve, cmd_verify, SimulateArgs};

#[derive(Parser)]
#[command(name = "mfmpe", version, about = "Markov perfect equilibria of discrete-time mean-field games")]
struct Cli {
    /// Worker threads for the solver, verifier and simulator.
    #[arg(long, global = true, env = "MFMPE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a configured game and write its strategy and value tables.
    Solve {
        /// JSON run configuration.
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(short, long)]
        out: PathBuf,
        /// Fail if any grid point does not reach the fixed-point tolerance.
        #[arg(long)]
        strict: bool,
    },
    /// Certify a stored solution by the deviation gap.
    Verify {
        config: PathBuf,
        /// Directory written by `solve`.
        #[arg(short, long)]
        solution: PathBuf,
        /// Overrides the configured or default tolerance.
        #[arg(long)]
        gap_tol: Option<f64>,
    },
    /// Play the N-agent game under a stored solution.
    Simulate {
        config: PathBuf,
        /// Directory written by `solve`.
        #[arg(short, long)]
        solution: PathBuf,
        /// Number of agents; overrides `simulate.n_agents`.
        #[arg(short = 'N', long = "agents")]
        agents: Option<usize>,
        /// Overrides `simulate.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Solve { config, out, strict } => cmd_solve(&config, &out, strict).map(|o| {
            for w in &o.report.warnings {
                eprintln!("warning: {w}");
            }
            match o.report.sweeps {
                Some(s) => println!(
                    "solved in {s} sweeps (final sup change {:e}), wrote {}",
                    o.report.final_sup_change.unwrap_or(f64::NAN),
                    out.display()
                ),
                None => println!("solved, wrote {}", out.display()),
            }
            true
        }),
        Command::Verify { config, solution, gap_tol } => cmd_verify(&config, &solution, gap_tol).map(|r| {
            println!(
                "max_gap {:e} (gap_tol {:e}, truncation bound {:e}, follow error {:e}): {}",
                r.max_gap,
                r.gap_tol,
                r.truncation_bound,
                r.max_follow_error,
                if r.certified { "certified" } else { "NOT certified" }
            );
            r.certified
        }),
        Command::Simulate { config, solution, agents, seed, out } => {
            let args = SimulateArgs { config, solution_dir: solution, out_dir: out, n_agents: agents, seed };
            cmd_simulate(&args).map(|s| {
                println!(
                    "N={} seed={} T={}: sup L1 error {:e}, mean reward {} +/- {}",
                    s.n_agents, s.seed, s.t_sim, s.sup_l1_error, s.mean_reward, s.reward_std_error
                );
                true
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
