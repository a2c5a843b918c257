use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mfmpe_core::{
    assemble_strategy, deviator_value, gap_tolerance, simulate_population, solve_finite, solve_infinite,
    DeviatorProblem, EquilibriumGenerator, GameModel, GapEntry, Horizon, MeanField, Method, PointDiagnostic,
    Prescription, SimplexGrid, SweepRecord, TerminalReward, ValueFunction, VerifyHorizon,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{load_config, Config};
use crate::error::{CliError, Result};
use crate::tables::{
    csv_err, read_theta, read_values, write_plotdata, write_theta, write_values, PLOT_FILE, THETA_FILE, VALUE_FILE,
};

pub const REPORT_FILE: &str = "report.json";
pub const VERIFY_FILE: &str = "verify_report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SIMULATE_FILE: &str = "simulate_summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub options: Value,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest(
    command: &'static str,
    path: &Path,
    bytes: &[u8],
    seed: Option<u64>,
    options: Value,
    started: f64,
) -> Manifest {
    Manifest {
        tool: "mfmpe",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_path: path.display().to_string(),
        config_sha256: sha256_hex(bytes),
        seed,
        threads: rayon::current_num_threads(),
        started_unix: started,
        finished_unix: now(),
        options,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// A solution as stored in a solution directory.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSolution {
    pub theta: EquilibriumGenerator,
    /// `[V]` for stationary solutions, `[V_1, .., V_{T+1}]` otherwise.
    pub values: Vec<ValueFunction>,
}

impl StoredSolution {
    pub fn is_stationary(&self) -> bool {
        self.theta.is_stationary()
    }

    /// Stage-1 table and value.
    pub fn first_stage(&self) -> (&[Prescription], &ValueFunction) {
        (&self.theta.tables()[0], &self.values[0])
    }
}

/// Per-point findings that the solve report lists.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: &'static str,
    pub error: Option<String>,
    pub horizon: Option<Horizon>,
    pub resolution: usize,
    pub grid_points: usize,
    pub sweeps: Option<usize>,
    pub final_sup_change: Option<f64>,
    pub history: Vec<SweepRecord>,
    pub max_residual: Option<f64>,
    pub method_counts: Value,
    pub unconverged: Vec<PointDiagnostic>,
    pub warnings: Vec<String>,
    pub manifest: Manifest,
}

/// Monotonicity of `gamma(1|x)` in `z(0)` for two-type, two-action tables.
/// Reported as warnings only.
pub fn monotonicity_warnings(table: &[Prescription], grid: &SimplexGrid) -> Vec<String> {
    let mut out = Vec::new();
    if grid.n_types() != 2 || table.first().is_none_or(|g| g.n_actions() != 2) {
        return out;
    }
    for x in 0..2 {
        for p in 1..table.len() {
            let drop = table[p - 1].prob(x, 1) - table[p].prob(x, 1);
            if drop > 1e-9 {
                out.push(format!(
                    "gamma(1|{x}) decreases by {drop:.3e} between z(0)={} and z(0)={}",
                    grid.point(p - 1)[0],
                    grid.point(p)[0]
                ));
            }
        }
    }
    out
}

fn method_counts(diagnostics: &[PointDiagnostic]) -> Value {
    let count = |m: Method| diagnostics.iter().filter(|d| d.method == m).count();
    json!({
        "iteration": count(Method::Iteration),
        "exhaustive_pure": count(Method::ExhaustivePure),
        "exhaustive_mixed": count(Method::ExhaustiveMixed),
    })
}

struct Solved {
    solution: StoredSolution,
    sweeps: Option<usize>,
    final_sup_change: Option<f64>,
    history: Vec<SweepRecord>,
    diagnostics: Vec<PointDiagnostic>,
}

fn run_solver(config: &Config, model: &GameModel, grid: &SimplexGrid, strict: bool) -> Result<Solved> {
    let opts = config.solver_options(strict);
    Ok(match config.horizon {
        Horizon::Finite(_) => {
            let sol = solve_finite(model, grid, &opts, &TerminalReward::zero(grid))?;
            Solved {
                solution: StoredSolution { theta: sol.theta, values: sol.values },
                sweeps: None,
                final_sup_change: None,
                history: Vec::new(),
                diagnostics: sol.diagnostics,
            }
        }
        Horizon::Infinite => {
            let sol = solve_infinite(model, grid, &opts, &config.outer_options())?;
            Solved {
                solution: StoredSolution { theta: sol.theta, values: vec![sol.value] },
                sweeps: Some(sol.sweeps),
                final_sup_change: Some(sol.final_sup_change),
                history: sol.history,
                diagnostics: sol.diagnostics,
            }
        }
    })
}

fn write_solution(out_dir: &Path, solved: &Solved, grid: &SimplexGrid) -> Result<()> {
    let sol = &solved.solution;
    write_theta(&out_dir.join(THETA_FILE), &sol.theta, grid)?;
    write_values(&out_dir.join(VALUE_FILE), &sol.values, sol.is_stationary(), grid)?;
    if grid.n_types() == 2 {
        let (table, value) = sol.first_stage();
        write_plotdata(&out_dir.join(PLOT_FILE), table, value, grid)?;
    }
    Ok(())
}

/// Outcome of `solve`, also written to `report.json`.
pub struct SolveOutcome {
    pub report: SolveReport,
    pub solution: StoredSolution,
}

/// Solves the configured model and writes `theta.csv`, `value.csv`,
/// `plotdata.csv` (two types only) and `report.json` into `out_dir`. On
/// failure the tables are removed and `report.json` records the error.
pub fn cmd_solve(config_path: &Path, out_dir: &Path, strict: bool) -> Result<SolveOutcome> {
    let started = now();
    let (config, bytes) = load_config(config_path)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let model = config.model()?;
    let grid = config.grid()?;
    let options = json!({ "solver": config.solver_options(strict), "outer": config.outer_options() });

    let result = run_solver(&config, &model, &grid, strict).and_then(|solved| {
        write_solution(out_dir, &solved, &grid)?;
        Ok(solved)
    });
    let mut report = SolveReport {
        status: "ok",
        error: None,
        horizon: Some(config.horizon),
        resolution: config.resolution,
        grid_points: grid.len(),
        sweeps: None,
        final_sup_change: None,
        history: Vec::new(),
        max_residual: None,
        method_counts: Value::Null,
        unconverged: Vec::new(),
        warnings: Vec::new(),
        manifest: manifest("solve", config_path, &bytes, None, options, started),
    };
    match result {
        Ok(solved) => {
            report.sweeps = solved.sweeps;
            report.final_sup_change = solved.final_sup_change;
            report.max_residual = Some(solved.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max));
            report.method_counts = method_counts(&solved.diagnostics);
            report.unconverged = solved.diagnostics.iter().filter(|d| !d.converged).cloned().collect();
            if !report.unconverged.is_empty() {
                report.warnings.push(format!("{} grid points did not converge", report.unconverged.len()));
            }
            report.warnings.extend(monotonicity_warnings(solved.solution.first_stage().0, &grid));
            report.history = solved.history;
            report.manifest.finished_unix = now();
            write_json(&out_dir.join(REPORT_FILE), &report)?;
            Ok(SolveOutcome { report, solution: solved.solution })
        }
        Err(e) => {
            for name in [THETA_FILE, VALUE_FILE, PLOT_FILE] {
                let _ = fs::remove_file(out_dir.join(name));
            }
            report.status = "failed";
            report.error = Some(e.to_string());
            if let CliError::Core(mfmpe_core::Error::Unconverged { failures }) = &e {
                report.warnings.push(format!("{} grid points did not converge", failures.len()));
            }
            report.manifest.finished_unix = now();
            write_json(&out_dir.join(REPORT_FILE), &report)?;
            Err(e)
        }
    }
}

/// Loads `theta.csv` and `value.csv` written by [`cmd_solve`].
pub fn load_solution(config: &Config, dir: &Path) -> Result<StoredSolution> {
    let grid = config.grid()?;
    let model = config.model()?;
    let theta = read_theta(&dir.join(THETA_FILE), &grid, model.n_actions())?;
    let (values, stationary) = read_values(&dir.join(VALUE_FILE), &grid)?;
    let expected = match config.horizon {
        Horizon::Infinite => (true, 1, 1),
        Horizon::Finite(t) => (false, t, t + 1),
    };
    if (theta.is_stationary(), theta.n_stages(), values.len()) != expected || stationary != expected.0 {
        return Err(CliError::Load(format!(
            "{} does not match the configured horizon {:?}",
            dir.display(),
            config.horizon
        )));
    }
    Ok(StoredSolution { theta, values })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub certified: bool,
    pub max_gap: f64,
    pub gap_tol: f64,
    pub max_follow_error: f64,
    pub max_advantage: f64,
    pub truncation_bound: f64,
    pub entries: Vec<GapEntry>,
    pub manifest: Manifest,
}

/// Runs the deviation-gap verifier on a stored solution from every grid
/// point and writes `verify_report.json` into `solution_dir`. The report's
/// `certified` flag is `max_gap <= gap_tol`.
pub fn cmd_verify(config_path: &Path, solution_dir: &Path, gap_tol: Option<f64>) -> Result<VerifyReport> {
    let started = now();
    let (config, bytes) = load_config(config_path)?;
    let model = config.model()?;
    let grid = config.grid()?;
    let solution = load_solution(&config, solution_dir)?;
    let policy = assemble_strategy(&solution.theta, &grid);
    let (horizon, terminal) = match config.horizon {
        Horizon::Finite(t) => (VerifyHorizon::Finite(t), solution.values.last()),
        Horizon::Infinite => (VerifyHorizon::Truncated(config.verify.truncation), None),
    };
    let report = deviator_value(&DeviatorProblem {
        policy: &policy,
        model: &model,
        grid: &grid,
        equilibrium: &solution.values[0],
        terminal,
        starts: (0..grid.len()).collect(),
        horizon,
    })?;
    let gap_tol =
        gap_tol.or(config.verify.gap_tol).unwrap_or_else(|| gap_tolerance(config.resolution, report.truncation_bound));
    let options = json!({ "horizon": horizon, "gap_tol": gap_tol });
    let out = VerifyReport {
        certified: report.max_gap <= gap_tol,
        max_gap: report.max_gap,
        gap_tol,
        max_follow_error: report.max_follow_error,
        max_advantage: report.max_advantage,
        truncation_bound: report.truncation_bound,
        entries: report.entries,
        manifest: manifest("verify", config_path, &bytes, None, options, started),
    };
    write_json(&solution_dir.join(VERIFY_FILE), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub n_agents: usize,
    pub seed: u64,
    pub t_sim: usize,
    pub z1: Vec<f64>,
    pub sup_l1_error: f64,
    pub mean_reward: f64,
    pub reward_std_error: f64,
    pub predicted_reward: f64,
    pub manifest: Manifest,
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub solution_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_agents: Option<usize>,
    pub seed: Option<u64>,
}

/// Plays the N-agent game under a stored solution. Writes `trajectory.csv`
/// (empirical and predicted population state per period) and
/// `simulate_summary.json` into `out_dir`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateSummary> {
    let started = now();
    let (config, bytes) = load_config(&args.config)?;
    let model = config.model()?;
    let grid = config.grid()?;
    let solution = load_solution(&config, &args.solution_dir)?;
    let sim = &config.simulate;
    let n_agents = args.n_agents.unwrap_or(sim.n_agents);
    let seed = args.seed.unwrap_or(sim.seed);
    if n_agents == 0 {
        return Err(CliError::Config("n_agents must be at least 1".into()));
    }
    let t_sim = match (sim.t_sim, config.horizon) {
        (Some(t), Horizon::Finite(h)) if t > h => {
            return Err(CliError::Config(format!("simulate: t_sim {t} exceeds the horizon {h}")))
        }
        (Some(t), _) => t,
        (None, Horizon::Finite(h)) => h,
        (None, Horizon::Infinite) => 100,
    };
    let z1 = match &sim.z1 {
        Some(z) => MeanField::new(z.clone())?,
        None => MeanField::uniform(grid.n_types()),
    };
    let policy = assemble_strategy(&solution.theta, &grid);
    let run = simulate_population(&model, &policy, n_agents, &z1, t_sim, seed, sim.init)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let path = args.out_dir.join(TRAJECTORY_FILE);
    let io = |e: csv::Error| csv_err(&path, e);
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    let n = grid.n_types();
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|x| format!("empirical_z{x}")));
    header.extend((0..n).map(|x| format!("predicted_z{x}")));
    header.push("l1_error".to_string());
    w.write_record(&header).map_err(io)?;
    for (t, (e, p)) in run.empirical.iter().zip(&run.predicted).enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(e.as_slice().iter().map(|v| v.to_string()));
        rec.extend(p.as_slice().iter().map(|v| v.to_string()));
        rec.push(e.l1_distance(p).to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let v1 = solution.values[0].interpolate_all(&grid, z1.as_slice())?;
    let predicted_reward = (0..n).map(|x| z1[x] * v1[x]).sum();
    let options = json!({ "t_sim": t_sim, "init": sim.init });
    let summary = SimulateSummary {
        n_agents,
        seed,
        t_sim,
        z1: z1.as_slice().to_vec(),
        sup_l1_error: run.sup_l1_error(),
        mean_reward: run.mean_reward(),
        reward_std_error: run.reward_std_error(),
        predicted_reward,
        manifest: manifest("simulate", &args.config, &bytes, Some(seed), options, started),
    };
    write_json(&args.out_dir.join(SIMULATE_FILE), &summary)?;
    Ok(summary)
}
