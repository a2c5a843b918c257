//! Independent certification of a solved equilibrium.
//!
//! [`deviator_value`] computes the optimal value of a single player who
//! deviates unilaterally while the rest of the population keeps playing the
//! equilibrium strategy. In the mean-field limit the deviator cannot move
//! the population state, so the population follows the deterministic
//! trajectory induced by the strategy and the deviator faces a time-indexed
//! single-agent MDP over its own type, solved here by backward induction.
//! Since that MDP's state is (t, x_t) with z_t a known function of t,
//! history-dependent deviations cannot beat the Markov optimum.
//! [`simulate_population`] plays the literal N-player game by sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameModel, Horizon, MeanField};
use crate::simplex::SimplexGrid;
use crate::solver::{induce_trajectory_with, MarkovPolicy};
use crate::tables::ValueFunction;

/// Interpolation slack per unit of grid spacing, fitted on the malware
/// game (follow error 7.8e-3 at M = 10 falling to 2.2e-4 at M = 50).
pub const INTERPOLATION_SLACK: f64 = 0.1;

/// Default certification tolerance on an `M` grid:
/// `1e-4 + truncation_bound + INTERPOLATION_SLACK / M`.
pub fn gap_tolerance(resolution: usize, truncation_bound: f64) -> f64 {
    1e-4 + truncation_bound + INTERPOLATION_SLACK / resolution as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyHorizon {
    /// Full horizon `T` of a finite-horizon model.
    Finite(usize),
    /// Truncation length for an infinite-horizon model.
    Truncated(usize),
}

pub struct DeviatorProblem<'a> {
    pub policy: &'a dyn MarkovPolicy,
    pub model: &'a GameModel,
    pub grid: &'a SimplexGrid,
    /// Equilibrium reward-to-go at stage 1 (`V_1`, or the stationary `V`).
    pub equilibrium: &'a ValueFunction,
    /// Reward collected after the last stage of a finite horizon.
    pub terminal: Option<&'a ValueFunction>,
    /// Grid indices of the starting population states.
    pub starts: Vec<usize>,
    pub horizon: VerifyHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub point: usize,
    pub z: Vec<f64>,
    pub x: usize,
    /// Optimal value of a unilateral deviator.
    pub deviator: f64,
    /// Value of a player who follows the strategy along the same trajectory.
    pub follower: f64,
    /// Tabulated equilibrium value at the start.
    pub equilibrium: f64,
    /// `deviator - equilibrium`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    pub max_gap: f64,
    /// Largest `|follower - equilibrium|`.
    pub max_follow_error: f64,
    /// Largest `deviator - follower`: what a deviator gains over following
    /// the strategy along the same trajectory. Free of grid error.
    pub max_advantage: f64,
    /// Tail bound on the value beyond the truncation horizon; zero for
    /// finite-horizon models.
    pub truncation_bound: f64,
}

impl GapReport {
    /// Certification at `gap_tol`: no profitable deviation beyond the
    /// tolerance, and the strategy's own value matches the table.
    pub fn certifies(&self, gap_tol: f64) -> bool {
        self.max_gap <= gap_tol && self.max_follow_error <= gap_tol
    }
}

pub fn deviator_value(problem: &DeviatorProblem<'_>) -> Result<GapReport> {
    let model = problem.model;
    let grid = problem.grid;
    let steps = match (problem.horizon, model.horizon()) {
        (VerifyHorizon::Finite(t), Horizon::Finite(model_t)) if t == model_t => t,
        (VerifyHorizon::Finite(t), Horizon::Finite(model_t)) => {
            return Err(Error::arg(format!("verification horizon {t} differs from the model horizon {model_t}")))
        }
        (VerifyHorizon::Truncated(t), Horizon::Infinite) if t > 0 => t,
        (VerifyHorizon::Truncated(_), Horizon::Infinite) => {
            return Err(Error::arg("truncation length must be positive"))
        }
        (VerifyHorizon::Truncated(_), Horizon::Finite(_)) => {
            return Err(Error::arg("truncated verification applies only to infinite-horizon models"))
        }
        (VerifyHorizon::Finite(_), Horizon::Infinite) => {
            return Err(Error::arg("infinite-horizon models are verified with a truncated horizon"))
        }
    };
    if problem.equilibrium.n_points() != grid.len() || grid.n_types() != model.n_types() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: problem.equilibrium.n_points() });
    }
    if let Some(&bad) = problem.starts.iter().find(|&&p| p >= grid.len()) {
        return Err(Error::arg(format!("start point {bad} is not a grid index")));
    }

    let per_start: Vec<Result<(Vec<GapEntry>, f64)>> = problem
        .starts
        .par_iter()
        .map(|&point| {
            let z1 = grid.point(point);
            let path = induce_trajectory_with(z1, problem.policy, model, steps)?;
            let terminal = match problem.terminal {
                Some(g) => g.interpolate_all(grid, path[steps].as_slice())?,
                None => vec![0.0; model.n_types()],
            };
            let (deviator, follower) = backward_values(problem.policy, model, &path[..steps], terminal)?;
            let max_r = model.max_abs_reward(&path);
            let entries = (0..model.n_types())
                .map(|x| {
                    let equilibrium = problem.equilibrium.get(point, x);
                    GapEntry {
                        point,
                        z: z1.as_slice().to_vec(),
                        x,
                        deviator: deviator[x],
                        follower: follower[x],
                        equilibrium,
                        gap: deviator[x] - equilibrium,
                    }
                })
                .collect();
            Ok((entries, max_r))
        })
        .collect();

    let mut entries = Vec::new();
    let mut max_r = model.max_abs_reward(grid.points());
    for r in per_start {
        let (e, m) = r?;
        entries.extend(e);
        max_r = max_r.max(m);
    }
    let truncation_bound = match problem.horizon {
        VerifyHorizon::Finite(_) => 0.0,
        VerifyHorizon::Truncated(t) => {
            let d = model.discount();
            d.powi(t as i32) * 2.0 * max_r / (1.0 - d)
        }
    };
    let max_gap = entries.iter().map(|e| e.gap).fold(f64::NEG_INFINITY, f64::max);
    let max_follow_error = entries.iter().map(|e| (e.follower - e.equilibrium).abs()).fold(0.0, f64::max);
    let max_advantage = entries.iter().map(|e| e.deviator - e.follower).fold(f64::NEG_INFINITY, f64::max);
    Ok(GapReport { entries, max_gap, max_follow_error, max_advantage, truncation_bound })
}

/// Backward induction along a fixed population path `z_1..z_T`: the optimal
/// value of a deviator and the value of a follower of `policy`.
fn backward_values(
    policy: &dyn MarkovPolicy,
    model: &GameModel,
    path: &[MeanField],
    terminal: Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.n_types();
    let na = model.n_actions();
    let delta = model.discount();
    let mut best = terminal.clone();
    let mut follow = terminal;
    let mut row = vec![0.0; n];
    for (i, z) in path.iter().enumerate().rev() {
        let gamma = policy.prescription(i + 1, z)?;
        let mut next_best = vec![f64::NEG_INFINITY; n];
        let mut next_follow = vec![0.0; n];
        for x in 0..n {
            for a in 0..na {
                model.kernel_row(x, a, z.as_slice(), &mut row)?;
                let r = model.reward(x, a, z);
                let cont_best: f64 = row.iter().zip(&best).map(|(q, w)| q * w).sum();
                let cont_follow: f64 = row.iter().zip(&follow).map(|(q, w)| q * w).sum();
                next_best[x] = next_best[x].max(r + delta * cont_best);
                next_follow[x] += gamma.prob(x, a) * (r + delta * cont_follow);
            }
        }
        best = next_best;
        follow = next_follow;
    }
    Ok((best, follow))
}

/// Monte Carlo estimate of one player's discounted reward when the
/// population follows the deterministic trajectory from `z1` and the player
/// follows `policy`. Returns the sample mean and its standard error.
pub fn rollout_value(
    policy: &dyn MarkovPolicy,
    model: &GameModel,
    z1: &MeanField,
    x1: usize,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::arg("episodes must be positive"));
    }
    let path = induce_trajectory_with(z1, policy, model, horizon.saturating_sub(1))?;
    let steps = StepTables::build(policy, model, &path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let mut x = x1;
        let mut total = 0.0;
        let mut disc = 1.0;
        for step in &steps {
            let (r, next) = step.sample(x, &mut rng);
            total += disc * r;
            disc *= model.discount();
            x = next;
        }
        sum += total;
        sum_sq += total * total;
    }
    let mean = sum / episodes as f64;
    let var = (sum_sq / episodes as f64 - mean * mean).max(0.0) * episodes as f64 / (episodes.max(2) - 1) as f64;
    Ok((mean, (var / episodes as f64).sqrt()))
}

/// Cumulative action and transition distributions of one period.
struct StepTable {
    n: usize,
    na: usize,
    action_cdf: Vec<f64>,
    kernel_cdf: Vec<f64>,
    rewards: Vec<f64>,
}

impl StepTable {
    fn new(policy: &dyn MarkovPolicy, model: &GameModel, t: usize, z: &MeanField) -> Result<Self> {
        let (n, na) = (model.n_types(), model.n_actions());
        let gamma = policy.prescription(t, z)?;
        let mut action_cdf = Vec::with_capacity(n * na);
        let mut kernel_cdf = vec![0.0; n * na * n];
        let mut rewards = Vec::with_capacity(n * na);
        for x in 0..n {
            cumulative(gamma.row(x), &mut action_cdf);
            for a in 0..na {
                let i = x * na + a;
                let out = &mut kernel_cdf[i * n..(i + 1) * n];
                model.kernel_row(x, a, z.as_slice(), out)?;
                let mut acc = 0.0;
                out.iter_mut().for_each(|v| {
                    acc += *v;
                    *v = acc;
                });
                rewards.push(model.reward(x, a, z));
            }
        }
        Ok(StepTable { n, na, action_cdf, kernel_cdf, rewards })
    }

    /// Samples the action and next type; returns the reward and next type.
    fn sample<R: Rng>(&self, x: usize, rng: &mut R) -> (f64, usize) {
        let a = draw(&self.action_cdf[x * self.na..(x + 1) * self.na], rng.gen());
        let i = x * self.na + a;
        let next = draw(&self.kernel_cdf[i * self.n..(i + 1) * self.n], rng.gen());
        (self.rewards[i], next)
    }
}

struct StepTables;

impl StepTables {
    fn build(policy: &dyn MarkovPolicy, model: &GameModel, path: &[MeanField]) -> Result<Vec<StepTable>> {
        path.iter().enumerate().map(|(i, z)| StepTable::new(policy, model, i + 1, z)).collect()
    }
}

fn cumulative(p: &[f64], out: &mut Vec<f64>) {
    let mut acc = 0.0;
    for v in p {
        acc += v;
        out.push(acc);
    }
}

/// Index of the first cumulative entry exceeding `u`, skipping zero-mass
/// outcomes; rounding slack at the top goes to the last positive outcome.
fn draw(cdf: &[f64], u: f64) -> usize {
    let mut last = 0;
    let mut prev = 0.0;
    for (i, &c) in cdf.iter().enumerate() {
        if c > prev {
            if u < c {
                return i;
            }
            last = i;
        }
        prev = c;
    }
    last
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Types drawn i.i.d. from `z1`.
    Iid,
    /// Largest-remainder rounding of `z1 * N`.
    Rounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRun {
    pub n_agents: usize,
    pub seed: u64,
    /// Empirical population state at `t = 1..=T_sim + 1`.
    pub empirical: Vec<MeanField>,
    /// Mean-field prediction over the same periods.
    pub predicted: Vec<MeanField>,
    /// Discounted reward of each agent over `T_sim` periods.
    pub rewards: Vec<f64>,
}

impl PopulationRun {
    /// `sup_t || z_t^emp - z_t^pred ||_1`.
    pub fn sup_l1_error(&self) -> f64 {
        self.empirical.iter().zip(&self.predicted).map(|(e, p)| e.l1_distance(p)).fold(0.0, f64::max)
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }

    pub fn reward_std_error(&self) -> f64 {
        let n = self.rewards.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let m = self.mean_reward();
        let var = self.rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

struct Agent {
    x: usize,
    rng: ChaCha8Rng,
    reward: f64,
}

/// Plays the N-player game: every agent samples its action from the
/// strategy evaluated at the empirical population state, then its next type
/// from the kernel at that state. Each agent draws from its own ChaCha
/// stream (stream id = agent index), so results depend only on `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_population(
    model: &GameModel,
    policy: &dyn MarkovPolicy,
    n_agents: usize,
    z1: &MeanField,
    t_sim: usize,
    seed: u64,
    init: InitMode,
) -> Result<PopulationRun> {
    if n_agents == 0 {
        return Err(Error::arg("n_agents must be at least 1"));
    }
    let n = model.n_types();
    if z1.n_types() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z1.n_types() });
    }
    if let Some(t) = policy.stages() {
        if t_sim > t {
            return Err(Error::arg(format!("T_sim = {t_sim} exceeds the {t}-stage horizon")));
        }
    }
    let predicted = induce_trajectory_with(z1, policy, model, t_sim)?;

    let initial_types: Vec<usize> = match init {
        InitMode::Rounded => rounded_types(z1.as_slice(), n_agents),
        InitMode::Iid => Vec::new(),
    };
    let mut init_cdf = Vec::with_capacity(n);
    cumulative(z1.as_slice(), &mut init_cdf);
    let mut agents: Vec<Agent> = (0..n_agents)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x = match init {
                InitMode::Rounded => initial_types[i],
                InitMode::Iid => draw(&init_cdf, rng.gen()),
            };
            Agent { x, rng, reward: 0.0 }
        })
        .collect();

    let mut empirical = Vec::with_capacity(t_sim + 1);
    empirical.push(empirical_state(&agents, n));
    let mut disc = 1.0;
    for t in 1..=t_sim {
        let step = StepTable::new(policy, model, t, &empirical[t - 1])?;
        agents.par_iter_mut().for_each(|agent| {
            let (r, next) = step.sample(agent.x, &mut agent.rng);
            agent.reward += disc * r;
            agent.x = next;
        });
        disc *= model.discount();
        empirical.push(empirical_state(&agents, n));
    }
    Ok(PopulationRun { n_agents, seed, empirical, predicted, rewards: agents.iter().map(|a| a.reward).collect() })
}

fn empirical_state(agents: &[Agent], n: usize) -> MeanField {
    let mut counts = vec![0usize; n];
    agents.iter().for_each(|a| counts[a.x] += 1);
    MeanField::from_raw(counts.iter().map(|&c| c as f64 / agents.len() as f64).collect())
}

fn rounded_types(z: &[f64], n_agents: usize) -> Vec<usize> {
    let target: Vec<f64> = z.iter().map(|p| p * n_agents as f64).collect();
    let mut counts: Vec<usize> = target.iter().map(|t| t.floor() as usize).collect();
    let mut short = n_agents - counts.iter().sum::<usize>().min(n_agents);
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&i, &j| (target[j] - target[j].floor()).total_cmp(&(target[i] - target[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts.iter().enumerate().flat_map(|(x, &c)| std::iter::repeat_n(x, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnDynamics, Prescription};
    use crate::models::Malware;
    use crate::solver::assemble_strategy;
    use crate::tables::EquilibriumGenerator;
    use std::sync::Arc;

    #[test]
    fn draw_skips_zero_mass() {
        assert_eq!(draw(&[0.0, 1.0], 0.0), 1);
        assert_eq!(draw(&[0.3, 1.0], 0.29), 0);
        assert_eq!(draw(&[0.3, 1.0], 0.3), 1);
        assert_eq!(draw(&[0.5, 1.0, 1.0], 0.9999999), 1);
        assert_eq!(draw(&[1.0, 1.0], 0.5), 0);
    }

    #[test]
    fn rounding_init() {
        let t = rounded_types(&[0.25, 0.75], 10);
        assert_eq!(t.len(), 10);
        assert_eq!(t.iter().filter(|&&x| x == 0).count(), 3);
        assert_eq!(rounded_types(&[1.0], 1), vec![0]);
    }

    #[test]
    fn horizon_misuse() {
        let model = Malware::new(0.2, 0.5, 0.9).model(0.9, Horizon::Finite(3)).unwrap();
        let grid = SimplexGrid::new(4, 2).unwrap();
        let theta = EquilibriumGenerator::constant(&grid, Prescription::uniform(2, 2), Some(3));
        let policy = assemble_strategy(&theta, &grid);
        let v = ValueFunction::zeros(grid.len(), 2);
        let problem = DeviatorProblem {
            policy: &policy,
            model: &model,
            grid: &grid,
            equilibrium: &v,
            terminal: None,
            starts: vec![0],
            horizon: VerifyHorizon::Truncated(10),
        };
        assert!(matches!(deviator_value(&problem), Err(Error::Argument(_))));
    }

    #[test]
    fn single_agent_frozen_chain() {
        let dyns =
            FnDynamics::new(2, 2, |x, _, _, o: &mut [f64]| o[x] = 1.0, |x, a, _| 1.0 + x as f64 - 0.5 * a as f64);
        let model = GameModel::new(Arc::new(dyns), 0.5, Horizon::Infinite).unwrap();
        let grid = SimplexGrid::new(2, 2).unwrap();
        let theta = EquilibriumGenerator::constant(&grid, Prescription::pure(&[1, 0], 2).unwrap(), None);
        let policy = assemble_strategy(&theta, &grid);
        let z1 = MeanField::degenerate(2, 0);
        let run = simulate_population(&model, &policy, 1, &z1, 4, 3, InitMode::Iid).unwrap();
        assert!(run.empirical.iter().all(|z| z == &z1));
        let expected: f64 = (0..4).map(|t| 0.5 * 0.5f64.powi(t)).sum();
        assert_eq!(run.rewards, vec![expected]);
    }
}
