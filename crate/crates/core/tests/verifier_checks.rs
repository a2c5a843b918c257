mod common;

use common::*;
use mfmpe_core::{
    assemble_strategy, deviator_value, gap_tolerance, rollout_value, simulate_population, solve_finite, solve_infinite,
    DeviatorProblem, EquilibriumGenerator, GameModel, Horizon, InfiniteSolution, InitMode, Malware, MeanField,
    OuterOptions, Prescription, SimplexGrid, SolverOptions, TerminalReward, VerifyHorizon,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn malware(h: Horizon) -> GameModel {
    Malware::new(0.2, 0.5, 0.9).model(0.9, h).unwrap()
}

fn solved(m: usize) -> (GameModel, SimplexGrid, InfiniteSolution) {
    let model = malware(Horizon::Infinite);
    let grid = SimplexGrid::new(m, 2).unwrap();
    let sol = solve_infinite(&model, &grid, &SolverOptions::default(), &OuterOptions::default()).unwrap();
    (model, grid, sol)
}

#[test]
fn solved_malware_is_certified() {
    for m in [10, 20] {
        let (model, grid, sol) = solved(m);
        let policy = assemble_strategy(&sol.theta, &grid);
        let report = deviator_value(&DeviatorProblem {
            policy: &policy,
            model: &model,
            grid: &grid,
            equilibrium: &sol.value,
            terminal: None,
            starts: (0..grid.len()).collect(),
            horizon: VerifyHorizon::Truncated(200),
        })
        .unwrap();
        let tol = gap_tolerance(m, report.truncation_bound);
        assert!(report.certifies(tol), "M={m}: gap {} follow {}", report.max_gap, report.max_follow_error);
        assert!(report.max_advantage <= tol);
        assert!(report.entries.iter().all(|e| e.deviator >= e.follower - 1e-12));
    }
}

#[test]
fn always_repair_is_not_an_equilibrium() {
    let (model, grid, sol) = solved(10);
    let theta = EquilibriumGenerator::constant(&grid, Prescription::pure(&[1, 1], 2).unwrap(), None);
    let policy = assemble_strategy(&theta, &grid);
    let report = deviator_value(&DeviatorProblem {
        policy: &policy,
        model: &model,
        grid: &grid,
        equilibrium: &sol.value,
        terminal: None,
        starts: (0..grid.len()).collect(),
        horizon: VerifyHorizon::Truncated(200),
    })
    .unwrap();
    assert!(report.max_advantage > 0.1, "{}", report.max_advantage);
    assert!(report.max_gap > 0.0);
    // healthy players near z = (1, 0) gain most by skipping the repair
    let top = grid.len() - 1;
    let healthy = report.entries.iter().find(|e| e.point == top && e.x == 0).unwrap();
    assert!(healthy.deviator - healthy.follower > 0.1);
}

#[test]
fn single_action_has_no_deviation_advantage() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let n = rng.gen_range(2..=3);
        let model = random_model(&mut rng, n, 1, false, 0.9, Horizon::Finite(6));
        let grid = SimplexGrid::new(5, n).unwrap();
        let sol = solve_finite(&model, &grid, &SolverOptions::default(), &TerminalReward::zero(&grid)).unwrap();
        let policy = assemble_strategy(&sol.theta, &grid);
        let report = deviator_value(&DeviatorProblem {
            policy: &policy,
            model: &model,
            grid: &grid,
            equilibrium: sol.value(1),
            terminal: None,
            starts: (0..grid.len()).collect(),
            horizon: VerifyHorizon::Finite(6),
        })
        .unwrap();
        assert_eq!(report.max_advantage, 0.0);
        assert!(report.entries.iter().all(|e| e.deviator == e.follower));
    }
}

#[test]
fn myopic_stage_argmax_has_zero_gap() {
    let model = Malware::new(0.2, 0.5, 0.9).model(1e-12, Horizon::Infinite).unwrap();
    let grid = SimplexGrid::new(10, 2).unwrap();
    let sol = solve_infinite(&model, &grid, &SolverOptions::default(), &OuterOptions::default()).unwrap();
    let policy = assemble_strategy(&sol.theta, &grid);
    let report = deviator_value(&DeviatorProblem {
        policy: &policy,
        model: &model,
        grid: &grid,
        equilibrium: &sol.value,
        terminal: None,
        starts: (0..grid.len()).collect(),
        horizon: VerifyHorizon::Truncated(5),
    })
    .unwrap();
    assert!(report.max_gap.abs() <= 1e-12 && report.max_follow_error <= 1e-12);
}

#[test]
fn never_act_population_matches_binomial_prediction() {
    let model = malware(Horizon::Infinite);
    let grid = SimplexGrid::new(4, 2).unwrap();
    let theta = EquilibriumGenerator::constant(&grid, Prescription::pure(&[0, 0], 2).unwrap(), None);
    let policy = assemble_strategy(&theta, &grid);
    let n = 100_000;
    let z1 = MeanField::new(vec![1.0, 0.0]).unwrap();
    let run = simulate_population(&model, &policy, n, &z1, 1, 77, InitMode::Iid).unwrap();
    assert_eq!(run.empirical[0].as_slice(), &[1.0, 0.0]);
    let z2 = run.empirical[1][1];
    assert!((z2 - 0.9).abs() <= 3.0 * (0.09 / n as f64).sqrt(), "{z2}");
    assert!((run.predicted[1][1] - 0.9).abs() < 1e-15);
}

#[test]
fn same_seed_same_run() {
    let (model, grid, sol) = solved(10);
    let policy = assemble_strategy(&sol.theta, &grid);
    let z1 = MeanField::new(vec![0.7, 0.3]).unwrap();
    let a = simulate_population(&model, &policy, 500, &z1, 30, 5, InitMode::Iid).unwrap();
    let b = simulate_population(&model, &policy, 500, &z1, 30, 5, InitMode::Iid).unwrap();
    let c = simulate_population(&model, &policy, 500, &z1, 30, 6, InitMode::Iid).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.empirical, c.empirical);
    let one = simulate_population(&model, &policy, 1, &z1, 30, 5, InitMode::Rounded).unwrap();
    assert_eq!(one.rewards.len(), 1);
    assert!(one.empirical.iter().all(|z| z.as_slice().iter().all(|v| *v == 0.0 || *v == 1.0)));
}

/// Average discounted reward of a large population against the tabulated
/// value, weighted by the initial state.
#[test]
fn population_reward_matches_value() {
    let (model, grid, sol) = solved(50);
    let policy = assemble_strategy(&sol.theta, &grid);
    let tail = 0.9f64.powi(100) * 1.7 / 0.1;
    for p in [10, 35, 50] {
        let z1 = grid.point(p);
        let run = simulate_population(&model, &policy, 100_000, z1, 100, 3 + p as u64, InitMode::Iid).unwrap();
        let predicted: f64 = (0..2).map(|x| z1[x] * sol.value.get(p, x)).sum();
        let err = (run.mean_reward() - predicted).abs();
        assert!(err <= 3.0 * run.reward_std_error() + tail, "z={z1:?}: {} vs {predicted}", run.mean_reward());
    }
}

/// Single-player rollouts confirm that healthy is the better type.
#[test]
fn rollouts_confirm_value_ordering() {
    let (model, grid, sol) = solved(50);
    let policy = assemble_strategy(&sol.theta, &grid);
    let tail = 0.9f64.powi(150) * 1.7 / 0.1;
    for p in [0, 20, 40] {
        let z1 = grid.point(p);
        let (v0, se0) = rollout_value(&policy, &model, z1, 0, 150, 100_000, 1).unwrap();
        let (v1, se1) = rollout_value(&policy, &model, z1, 1, 150, 100_000, 2).unwrap();
        for (x, v, se) in [(0, v0, se0), (1, v1, se1)] {
            assert!((v - sol.value.get(p, x)).abs() <= 3.0 * se + 2.5e-4 + tail, "x={x} z={z1:?}");
        }
        assert!(v0 - v1 > 3.0 * (se0 * se0 + se1 * se1).sqrt());
    }
}
