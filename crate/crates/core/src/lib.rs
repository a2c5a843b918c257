//! Markov perfect equilibria of discrete-time mean-field games.
//!
//! The population state `z` (distribution of private types) evolves by the
//! McKean-Vlasov update `z' = phi(z, gamma)`. Equilibria are computed by
//! backward recursion over a simplex grid: at every grid point a
//! prescription `gamma` is found that best-responds to the continuation
//! value at the population state `gamma` itself induces.
//!
//! - [`model`]: game, population state, prescription, population update.
//! - [`simplex`] / [`tables`]: grid, interpolation, value and strategy tables.
//! - [`fixedpoint`]: per-grid-point equilibrium.
//! - [`solver`]: finite and infinite horizon recursions.
//! - [`verifier`]: deviation gap and N-agent simulation.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fixedpoint;
pub mod model;
pub mod models;
pub mod simplex;
pub mod solver;
pub mod tables;
pub mod verifier;

pub use error::{Error, Result};
pub use fixedpoint::{
    best_response, pure_equilibria, solve_stage_fixed_point, solve_stage_fixed_point_from, stage_residual, stage_value,
    FixedPointOptions, FixedPointResult, Method, StageProblem, TieBreak,
};
pub use model::{propagate, Dynamics, FnDynamics, GameModel, Horizon, MeanField, Prescription};
pub use models::{Malware, TabularAffine};
pub use simplex::{Barycentric, SimplexGrid};
pub use solver::{
    assemble_strategy, induce_trajectory, induce_trajectory_with, solve_finite, solve_infinite, FiniteSolution,
    InfiniteSolution, InterpolatedPolicy, MarkovPolicy, OuterOptions, PointDiagnostic, ResolvedPolicy, SolverOptions,
    SweepRecord,
};
pub use tables::{interpolate_prescription, EquilibriumGenerator, TerminalReward, ValueFunction};
pub use verifier::{
    deviator_value, gap_tolerance, rollout_value, simulate_population, DeviatorProblem, GapEntry, GapReport, InitMode,
    PopulationRun, VerifyHorizon, INTERPOLATION_SLACK,
};
