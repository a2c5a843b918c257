//! Backward recursion for finite horizons, coupled value/prescription
//! iteration for infinite horizons, and population trajectories induced by
//! a solved equilibrium generating function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{solve_stage_fixed_point, FixedPointOptions, FixedPointResult, Method, StageProblem};
use crate::model::{propagate, GameModel, Horizon, MeanField, Prescription};
use crate::simplex::SimplexGrid;
use crate::tables::{EquilibriumGenerator, TerminalReward, ValueFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub fixed_point: FixedPointOptions,
    /// Fail instead of flagging when a grid point does not converge.
    pub strict: bool,
    /// Solve grid points of one stage in parallel.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { fixed_point: FixedPointOptions::default(), strict: false, parallel: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterOptions {
    pub max_sweeps: usize,
    pub sup_tol: f64,
}

impl Default for OuterOptions {
    fn default() -> Self {
        OuterOptions { max_sweeps: 2000, sup_tol: 1e-8 }
    }
}

/// Summary of one stage fixed-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostic {
    /// Stage `t` (finite horizon) or `None` (stationary).
    pub stage: Option<usize>,
    pub point: usize,
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution {
    pub theta: EquilibriumGenerator,
    /// `values[t - 1]` is `V_t` for `t = 1..=T+1`; the last entry is the
    /// terminal reward.
    pub values: Vec<ValueFunction>,
    pub diagnostics: Vec<PointDiagnostic>,
}

impl FiniteSolution {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    /// `V_t`, 1-based.
    pub fn value(&self, t: usize) -> &ValueFunction {
        &self.values[t - 1]
    }

    pub fn unconverged(&self) -> impl Iterator<Item = &PointDiagnostic> {
        self.diagnostics.iter().filter(|d| !d.converged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sup_change: f64,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteSolution {
    pub theta: EquilibriumGenerator,
    pub value: ValueFunction,
    pub sweeps: usize,
    pub final_sup_change: f64,
    pub history: Vec<SweepRecord>,
    /// Diagnostics of the final sweep.
    pub diagnostics: Vec<PointDiagnostic>,
}

impl InfiniteSolution {
    pub fn unconverged(&self) -> impl Iterator<Item = &PointDiagnostic> {
        self.diagnostics.iter().filter(|d| !d.converged)
    }
}

/// Solves the stage fixed point at every grid point against `continuation`.
pub fn solve_grid_stage(
    model: &GameModel,
    grid: &SimplexGrid,
    continuation: &ValueFunction,
    opts: &SolverOptions,
) -> Result<Vec<FixedPointResult>> {
    let solve = |z: &MeanField| {
        let problem = StageProblem { z, continuation, model, grid };
        solve_stage_fixed_point(&problem, &opts.fixed_point)
    };
    if opts.parallel {
        grid.points().par_iter().map(solve).collect()
    } else {
        grid.points().iter().map(solve).collect()
    }
}

fn assemble(
    grid: &SimplexGrid,
    stage: Option<usize>,
    results: Vec<FixedPointResult>,
    diagnostics: &mut Vec<PointDiagnostic>,
) -> (Vec<Prescription>, ValueFunction) {
    let mut value = ValueFunction::zeros(grid.len(), grid.n_types());
    let mut table = Vec::with_capacity(results.len());
    for (point, r) in results.into_iter().enumerate() {
        for (x, v) in r.values.iter().enumerate() {
            value.set(point, x, *v);
        }
        diagnostics.push(PointDiagnostic {
            stage,
            point,
            residual: r.residual,
            iterations: r.iterations,
            method: r.method,
            converged: r.converged,
        });
        table.push(r.gamma);
    }
    (table, value)
}

fn check_strict(grid: &SimplexGrid, diagnostics: &[PointDiagnostic]) -> Result<()> {
    let failures: Vec<_> = diagnostics
        .iter()
        .filter(|d| !d.converged)
        .map(|d| (d.stage, grid.point(d.point).as_slice().to_vec()))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Unconverged { failures })
    }
}

fn check_dims(model: &GameModel, grid: &SimplexGrid) -> Result<()> {
    if grid.n_types() != model.n_types() {
        return Err(Error::DimensionMismatch { expected: model.n_types(), got: grid.n_types() });
    }
    Ok(())
}

/// Backward recursion from `V_{T+1} = terminal` down to stage 1.
pub fn solve_finite(
    model: &GameModel,
    grid: &SimplexGrid,
    opts: &SolverOptions,
    terminal: &TerminalReward,
) -> Result<FiniteSolution> {
    check_dims(model, grid)?;
    let horizon = match model.horizon() {
        Horizon::Finite(t) => t,
        Horizon::Infinite => return Err(Error::arg("solve_finite needs a finite-horizon model")),
    };
    if terminal.0.n_points() != grid.len() || terminal.0.n_types() != grid.n_types() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: terminal.0.n_points() });
    }
    let mut values = vec![terminal.0.clone()];
    let mut stages = Vec::with_capacity(horizon);
    let mut diagnostics = Vec::new();
    for t in (1..=horizon).rev() {
        let continuation = values.last().expect("terminal value present");
        let results = solve_grid_stage(model, grid, continuation, opts)?;
        let (table, value) = assemble(grid, Some(t), results, &mut diagnostics);
        stages.push(table);
        values.push(value);
    }
    stages.reverse();
    values.reverse();
    if opts.strict {
        check_strict(grid, &diagnostics)?;
    }
    Ok(FiniteSolution { theta: EquilibriumGenerator::finite(stages), values, diagnostics })
}

/// Value iteration with an embedded stage equilibrium solve at every grid
/// point, starting from `V = 0`, until the sup-norm change is at most
/// `outer.sup_tol`.
pub fn solve_infinite(
    model: &GameModel,
    grid: &SimplexGrid,
    opts: &SolverOptions,
    outer: &OuterOptions,
) -> Result<InfiniteSolution> {
    solve_infinite_from(model, grid, opts, outer, ValueFunction::zeros(grid.len(), grid.n_types()))
}

/// As [`solve_infinite`], starting the value iteration at `initial`.
pub fn solve_infinite_from(
    model: &GameModel,
    grid: &SimplexGrid,
    opts: &SolverOptions,
    outer: &OuterOptions,
    initial: ValueFunction,
) -> Result<InfiniteSolution> {
    check_dims(model, grid)?;
    if model.horizon() != Horizon::Infinite {
        return Err(Error::arg("solve_infinite needs an infinite-horizon model"));
    }
    if outer.max_sweeps == 0 || outer.sup_tol.is_nan() || outer.sup_tol <= 0.0 {
        return Err(Error::arg("max_sweeps and sup_tol must be positive"));
    }
    let mut value = initial;
    let mut history = Vec::new();
    for sweep in 1..=outer.max_sweeps {
        let results = solve_grid_stage(model, grid, &value, opts)?;
        let mut diagnostics = Vec::with_capacity(grid.len());
        let (table, next) = assemble(grid, None, results, &mut diagnostics);
        let sup_change = next.sup_distance(&value);
        history.push(SweepRecord {
            sup_change,
            min_value: next.as_flat().iter().copied().fold(f64::INFINITY, f64::min),
            max_value: next.max_value(),
        });
        value = next;
        if sup_change <= outer.sup_tol {
            if opts.strict {
                check_strict(grid, &diagnostics)?;
            }
            return Ok(InfiniteSolution {
                theta: EquilibriumGenerator::stationary(table),
                value,
                sweeps: sweep,
                final_sup_change: sup_change,
                history,
                diagnostics,
            });
        }
    }
    let last = history.last().map_or(f64::INFINITY, |h| h.sup_change);
    Err(Error::NoConvergence {
        context: format!("value iteration did not reach sup change {} in {} sweeps", outer.sup_tol, outer.max_sweeps),
        best_residual: last,
    })
}

/// A Markov strategy for the whole population: stage and population state
/// to prescription.
pub trait MarkovPolicy: Sync {
    /// Prescription at stage `t` (1-based) and population state `z`.
    fn prescription(&self, t: usize, z: &MeanField) -> Result<Prescription>;

    /// Number of stages for finite-horizon policies.
    fn stages(&self) -> Option<usize>;

    /// `sigma_t(. | z, x)`.
    fn action_probs(&self, t: usize, z: &MeanField, x: usize) -> Result<Vec<f64>> {
        Ok(self.prescription(t, z)?.row(x).to_vec())
    }
}

/// Strategy that interpolates the stored prescriptions of `theta`. It
/// depends on the history only through `(t, z_t, x_t)`.
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedPolicy<'a> {
    pub theta: &'a EquilibriumGenerator,
    pub grid: &'a SimplexGrid,
}

impl MarkovPolicy for InterpolatedPolicy<'_> {
    fn prescription(&self, t: usize, z: &MeanField) -> Result<Prescription> {
        self.theta.prescription_at(self.grid, t, z)
    }

    fn stages(&self) -> Option<usize> {
        (!self.theta.is_stationary()).then(|| self.theta.n_stages())
    }
}

pub fn assemble_strategy<'a>(theta: &'a EquilibriumGenerator, grid: &'a SimplexGrid) -> InterpolatedPolicy<'a> {
    InterpolatedPolicy { theta, grid }
}

/// Strategy that re-solves the stage fixed point at every queried `z`
/// against the (interpolated) continuation value.
pub struct ResolvedPolicy<'a> {
    pub model: &'a GameModel,
    pub grid: &'a SimplexGrid,
    /// One continuation for stationary policies; `V_2..V_{T+1}` otherwise.
    pub continuations: Vec<&'a ValueFunction>,
    pub stationary: bool,
    pub options: FixedPointOptions,
}

impl<'a> ResolvedPolicy<'a> {
    pub fn stationary(
        model: &'a GameModel,
        grid: &'a SimplexGrid,
        value: &'a ValueFunction,
        options: FixedPointOptions,
    ) -> Self {
        ResolvedPolicy { model, grid, continuations: vec![value], stationary: true, options }
    }

    pub fn finite(
        model: &'a GameModel,
        grid: &'a SimplexGrid,
        solution: &'a FiniteSolution,
        options: FixedPointOptions,
    ) -> Self {
        ResolvedPolicy { model, grid, continuations: solution.values[1..].iter().collect(), stationary: false, options }
    }
}

impl MarkovPolicy for ResolvedPolicy<'_> {
    fn prescription(&self, t: usize, z: &MeanField) -> Result<Prescription> {
        let continuation = if self.stationary {
            self.continuations[0]
        } else {
            *self
                .continuations
                .get(t.wrapping_sub(1))
                .ok_or_else(|| Error::arg(format!("stage {t} outside 1..={}", self.continuations.len())))?
        };
        let problem = StageProblem { z, continuation, model: self.model, grid: self.grid };
        Ok(solve_stage_fixed_point(&problem, &self.options)?.gamma)
    }

    fn stages(&self) -> Option<usize> {
        (!self.stationary).then_some(self.continuations.len())
    }
}

/// `z_{t+1} = phi(z_t, theta_t[z_t])` for `n_steps` steps, using
/// interpolated prescriptions.
pub fn induce_trajectory(
    z1: &MeanField,
    theta: &EquilibriumGenerator,
    grid: &SimplexGrid,
    model: &GameModel,
    n_steps: usize,
) -> Result<Vec<MeanField>> {
    induce_trajectory_with(z1, &assemble_strategy(theta, grid), model, n_steps)
}

pub fn induce_trajectory_with(
    z1: &MeanField,
    policy: &dyn MarkovPolicy,
    model: &GameModel,
    n_steps: usize,
) -> Result<Vec<MeanField>> {
    if let Some(t) = policy.stages() {
        if n_steps > t {
            return Err(Error::arg(format!("{n_steps} steps exceed the {t}-stage horizon")));
        }
    }
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(z1.clone());
    for t in 1..=n_steps {
        let z = &path[t - 1];
        let gamma = policy.prescription(t, z)?;
        let next = propagate(z, &gamma, model)?;
        path.push(next);
    }
    Ok(path)
}
