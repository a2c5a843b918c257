//! Python bindings: models, the simplex grid, the solvers, the verifier and
//! the N-agent simulator.

use mfmpe_core as core;
use mfmpe_core::{
    assemble_strategy, EquilibriumGenerator, FixedPointOptions, Horizon, InitMode, MeanField, OuterOptions,
    Prescription, SolverOptions, TerminalReward, TieBreak, ValueFunction, VerifyHorizon,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::NoConvergence { .. } | core::Error::Unconverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn horizon(h: Option<usize>) -> Horizon {
    h.map_or(Horizon::Infinite, Horizon::Finite)
}

fn mean_field(z: Vec<f64>) -> PyResult<MeanField> {
    MeanField::new(z).map_err(to_py)
}

/// Discrete-time mean-field game with finite type and action sets.
#[pyclass(name = "GameModel", frozen)]
struct PyGameModel {
    inner: core::GameModel,
}

#[pymethods]
impl PyGameModel {
    /// Malware repair game: types healthy/infected, actions wait/repair.
    #[staticmethod]
    #[pyo3(signature = (k, lambda_, q, discount, horizon=None))]
    fn malware(k: f64, lambda_: f64, q: f64, discount: f64, horizon: Option<usize>) -> PyResult<Self> {
        let inner = core::Malware::new(k, lambda_, q).model(discount, self::horizon(horizon)).map_err(to_py)?;
        Ok(PyGameModel { inner })
    }

    /// Kernel `sum_y z(y) kernels[y][x][a]`, reward `r0[x][a] + sum_y z(y) r1[x][a][y]`.
    #[staticmethod]
    #[pyo3(signature = (kernels, r0, r1, discount, horizon=None))]
    fn tabular_affine(
        kernels: Vec<Vec<Vec<Vec<f64>>>>,
        r0: Vec<Vec<f64>>,
        r1: Vec<Vec<Vec<f64>>>,
        discount: f64,
        horizon: Option<usize>,
    ) -> PyResult<Self> {
        let inner = core::TabularAffine { kernels, r0, r1 }.model(discount, self::horizon(horizon)).map_err(to_py)?;
        Ok(PyGameModel { inner })
    }

    #[getter]
    fn n_types(&self) -> usize {
        self.inner.n_types()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    /// Number of stages, or `None` for an infinite horizon.
    #[getter]
    fn horizon(&self) -> Option<usize> {
        match self.inner.horizon() {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }

    fn kernel(&self, x: usize, a: usize, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let n = self.inner.n_types();
        if x >= n || a >= self.inner.n_actions() {
            return Err(PyValueError::new_err(format!("(x={x}, a={a}) out of range")));
        }
        let z = mean_field(z)?;
        let mut row = vec![0.0; n];
        self.inner.kernel_row(x, a, z.as_slice(), &mut row).map_err(to_py)?;
        Ok(row)
    }

    fn reward(&self, x: usize, a: usize, z: Vec<f64>) -> PyResult<f64> {
        if x >= self.inner.n_types() || a >= self.inner.n_actions() {
            return Err(PyValueError::new_err(format!("(x={x}, a={a}) out of range")));
        }
        Ok(self.inner.reward(x, a, &mean_field(z)?))
    }

    /// One step of the population update under prescription `gamma[x][a]`.
    fn propagate(&self, z: Vec<f64>, gamma: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let gamma = Prescription::new(gamma).map_err(to_py)?;
        Ok(core::propagate(&mean_field(z)?, &gamma, &self.inner).map_err(to_py)?.into_vec())
    }
}

/// Uniform lattice of resolution `M` on the simplex over `n_types` types.
#[pyclass(name = "SimplexGrid", frozen)]
struct PySimplexGrid {
    inner: core::SimplexGrid,
}

#[pymethods]
impl PySimplexGrid {
    #[new]
    fn new(resolution: usize, n_types: usize) -> PyResult<Self> {
        Ok(PySimplexGrid { inner: core::SimplexGrid::new(resolution, n_types).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.inner.resolution()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().iter().map(|p| p.as_slice().to_vec()).collect()
    }

    fn index_of(&self, composition: Vec<usize>) -> Option<usize> {
        self.inner.index_of(&composition)
    }

    /// `[(grid index, weight), ..]` of the enclosing lattice simplex.
    fn barycentric(&self, z: Vec<f64>) -> PyResult<Vec<(usize, f64)>> {
        Ok(self.inner.barycentric(&z).map_err(to_py)?.vertices)
    }
}

/// Solved equilibrium: strategy tables and value functions on a grid.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    theta: EquilibriumGenerator,
    /// `[V]` when stationary, `[V_1, .., V_{T+1}]` otherwise.
    values: Vec<ValueFunction>,
    grid: core::SimplexGrid,
    #[pyo3(get)]
    sweeps: Option<usize>,
    #[pyo3(get)]
    final_sup_change: Option<f64>,
    #[pyo3(get)]
    max_residual: f64,
    #[pyo3(get)]
    unconverged: usize,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn stationary(&self) -> bool {
        self.theta.is_stationary()
    }

    #[getter]
    fn n_stages(&self) -> usize {
        self.theta.n_stages()
    }

    /// Value table of stage `t` (1-based; ignored when stationary) as
    /// `[point][type]`.
    #[pyo3(signature = (t=1))]
    fn value_table(&self, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let v = self.stage_value(t)?;
        Ok((0..v.n_points()).map(|p| v.row(p).to_vec()).collect())
    }

    /// Strategy table of stage `t` as `[point][type][action]`.
    #[pyo3(signature = (t=1))]
    fn strategy_table(&self, t: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let table = self.theta.table(t).map_err(to_py)?;
        Ok(table.iter().map(|g| g.rows().map(|r| r.to_vec()).collect()).collect())
    }

    /// Interpolated value `V_t(z, x)`.
    #[pyo3(signature = (z, x, t=1))]
    fn value(&self, z: Vec<f64>, x: usize, t: usize) -> PyResult<f64> {
        if x >= self.grid.n_types() {
            return Err(PyValueError::new_err(format!("type {x} out of range")));
        }
        self.stage_value(t)?.interpolate(&self.grid, &mean_field(z)?, x).map_err(to_py)
    }

    /// Interpolated prescription at stage `t` as `[type][action]`.
    #[pyo3(signature = (z, t=1))]
    fn prescription(&self, z: Vec<f64>, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let g = self.theta.prescription_at(&self.grid, t, &mean_field(z)?).map_err(to_py)?;
        Ok(g.rows().map(|r| r.to_vec()).collect())
    }
}

impl PySolution {
    fn stage_value(&self, t: usize) -> PyResult<&ValueFunction> {
        if self.theta.is_stationary() {
            return Ok(&self.values[0]);
        }
        t.checked_sub(1)
            .and_then(|i| self.values.get(i))
            .ok_or_else(|| PyValueError::new_err(format!("stage {t} outside 1..={}", self.values.len())))
    }
}

/// Solves the game on `grid`: backward recursion for finite horizons, value
/// iteration to `sup_tol` otherwise.
#[pyfunction]
#[pyo3(signature = (model, grid, *, damping=0.5, max_iters=50, tol=1e-10, uniform_ties=false, fallback=true,
                    sup_tol=1e-8, max_sweeps=2000, strict=false))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    model: &PyGameModel,
    grid: &PySimplexGrid,
    damping: f64,
    max_iters: usize,
    tol: f64,
    uniform_ties: bool,
    fallback: bool,
    sup_tol: f64,
    max_sweeps: usize,
    strict: bool,
) -> PyResult<PySolution> {
    let tie_break = if uniform_ties { TieBreak::UniformMix } else { TieBreak::LowestActionIndex };
    let opts = SolverOptions {
        fixed_point: FixedPointOptions { damping, max_iters, tol, tie_break, fallback },
        strict,
        parallel: true,
    };
    let (model, grid) = (&model.inner, &grid.inner);
    let solved = py.detach(|| match model.horizon() {
        Horizon::Finite(_) => core::solve_finite(model, grid, &opts, &TerminalReward::zero(grid)).map(|s| {
            let residual = s.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max);
            let unconverged = s.unconverged().count();
            (s.theta, s.values, None, None, residual, unconverged)
        }),
        Horizon::Infinite => core::solve_infinite(model, grid, &opts, &OuterOptions { max_sweeps, sup_tol }).map(|s| {
            let residual = s.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max);
            let unconverged = s.unconverged().count();
            (s.theta, vec![s.value], Some(s.sweeps), Some(s.final_sup_change), residual, unconverged)
        }),
    });
    let (theta, values, sweeps, final_sup_change, max_residual, unconverged) = solved.map_err(to_py)?;
    Ok(PySolution { theta, values, grid: grid.clone(), sweeps, final_sup_change, max_residual, unconverged })
}

/// Deviation gap of `solution` from every grid point. Infinite horizons are
/// truncated after `truncation` periods.
#[pyfunction]
#[pyo3(signature = (model, solution, *, truncation=200, gap_tol=None))]
fn verify<'py>(
    py: Python<'py>,
    model: &PyGameModel,
    solution: &PySolution,
    truncation: usize,
    gap_tol: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = &solution.grid;
    let policy = assemble_strategy(&solution.theta, grid);
    let (horizon, terminal) = match model.inner.horizon() {
        Horizon::Finite(t) => (VerifyHorizon::Finite(t), solution.values.last()),
        Horizon::Infinite => (VerifyHorizon::Truncated(truncation), None),
    };
    let problem = core::DeviatorProblem {
        policy: &policy,
        model: &model.inner,
        grid,
        equilibrium: &solution.values[0],
        terminal,
        starts: (0..grid.len()).collect(),
        horizon,
    };
    let report = py.detach(|| core::deviator_value(&problem)).map_err(to_py)?;
    let gap_tol = gap_tol.unwrap_or_else(|| core::gap_tolerance(grid.resolution(), report.truncation_bound));
    let out = PyDict::new(py);
    out.set_item("max_gap", report.max_gap)?;
    out.set_item("max_follow_error", report.max_follow_error)?;
    out.set_item("max_advantage", report.max_advantage)?;
    out.set_item("truncation_bound", report.truncation_bound)?;
    out.set_item("gap_tol", gap_tol)?;
    out.set_item("certified", report.max_gap <= gap_tol)?;
    let gaps: Vec<(usize, usize, f64)> = report.entries.iter().map(|e| (e.point, e.x, e.gap)).collect();
    out.set_item("gaps", gaps)?;
    Ok(out)
}

/// Plays the N-agent game with every agent following `solution`.
#[pyfunction]
#[pyo3(signature = (model, solution, n_agents, z1, t_sim, *, seed=0, rounded=false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyGameModel,
    solution: &PySolution,
    n_agents: usize,
    z1: Vec<f64>,
    t_sim: usize,
    seed: u64,
    rounded: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let z1 = mean_field(z1)?;
    let policy = assemble_strategy(&solution.theta, &solution.grid);
    let init = if rounded { InitMode::Rounded } else { InitMode::Iid };
    let run = py
        .detach(|| core::simulate_population(&model.inner, &policy, n_agents, &z1, t_sim, seed, init))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    let path = |zs: &[MeanField]| zs.iter().map(|z| z.as_slice().to_vec()).collect::<Vec<_>>();
    out.set_item("empirical", path(&run.empirical))?;
    out.set_item("predicted", path(&run.predicted))?;
    out.set_item("sup_l1_error", run.sup_l1_error())?;
    out.set_item("mean_reward", run.mean_reward())?;
    out.set_item("reward_std_error", run.reward_std_error())?;
    Ok(out)
}

#[pymodule]
fn mfmpe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGameModel>()?;
    m.add_class::<PySimplexGrid>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
