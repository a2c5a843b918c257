#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use mfmpe_core::{
    best_response, propagate, solve_stage_fixed_point, solve_stage_fixed_point_from, stage_value, FixedPointOptions,
    Horizon, MeanField, Method, Prescription, SimplexGrid, StageProblem, TieBreak, ValueFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn propagate_stays_on_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=5);
        let na = rng.gen_range(1..=4);
        let model = random_model(&mut rng, n, na, false, 0.9, Horizon::Infinite);
        let z = random_mean_field(&mut rng, n);
        let gamma = random_prescription(&mut rng, n, na);
        let next = propagate(&z, &gamma, &model).unwrap();
        let sum: f64 = next.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        assert!(next.as_slice().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn propagate_linear_for_z_free_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(2..=4);
        let na = rng.gen_range(1..=3);
        let model = random_model(&mut rng, n, na, true, 0.9, Horizon::Infinite);
        let gamma = random_prescription(&mut rng, n, na);
        let z1 = random_mean_field(&mut rng, n);
        let z2 = random_mean_field(&mut rng, n);
        let alpha: f64 = rng.gen();
        let mix: Vec<f64> =
            z1.as_slice().iter().zip(z2.as_slice()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let s: f64 = mix.iter().sum();
        let mix = MeanField::new(mix.iter().map(|v| v / s).collect()).unwrap();
        let lhs = propagate(&mix, &gamma, &model).unwrap();
        let p1 = propagate(&z1, &gamma, &model).unwrap();
        let p2 = propagate(&z2, &gamma, &model).unwrap();
        for y in 0..n {
            assert!((lhs[y] - (alpha * p1[y] + (1.0 - alpha) * p2[y])).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn interpolation_exact_on_affine(
        n in 1usize..=4,
        m in 1usize..=12,
        coeffs in prop::collection::vec(-10.0f64..10.0, 5),
        raw in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let grid = SimplexGrid::new(m, n).unwrap();
        let affine = |z: &[f64]| coeffs[4] + z.iter().zip(&coeffs).map(|(a, b)| a * b).sum::<f64>();
        let v = ValueFunction::from_fn(&grid, |p, _| affine(grid.point(p).as_slice()));
        let s: f64 = raw[..n].iter().sum::<f64>() + 1e-9;
        let mut z: Vec<f64> = raw[..n].iter().map(|r| (r + 1e-9 / n as f64) / s).collect();
        let drift = z.iter().sum::<f64>() - 1.0;
        z[0] = (z[0] - drift).max(0.0);
        let z = MeanField::new(z).unwrap();
        let got = v.interpolate(&grid, &z, 0).unwrap();
        prop_assert!((got - affine(z.as_slice())).abs() < 1e-10, "{} vs {}", got, affine(z.as_slice()));
    }

    #[test]
    fn interpolation_within_vertex_range(seed in 0u64..1000, n in 2usize..=4, m in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = SimplexGrid::new(m, n).unwrap();
        let v = ValueFunction::from_fn(&grid, |_, _| rng.gen_range(-1.0..1.0));
        let z = random_mean_field(&mut rng, n);
        let b = grid.barycentric(z.as_slice()).unwrap();
        let vals: Vec<f64> = b.vertices.iter().map(|&(p, _)| v.get(p, 0)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let got = v.interpolate(&grid, &z, 0).unwrap();
        prop_assert!(got >= lo - 1e-12 && got <= hi + 1e-12);
        let wsum: f64 = b.vertices.iter().map(|&(_, w)| w).sum();
        prop_assert!((wsum - 1.0).abs() < 1e-12 && b.vertices.iter().all(|&(_, w)| w > 0.0));
        // the weights reproduce z itself
        for x in 0..n {
            let zx: f64 = b.vertices.iter().map(|&(p, w)| w * grid.point(p)[x]).sum();
            prop_assert!((zx - z[x]).abs() < 1e-12);
        }
    }
}

/// Residual recomputed through `stage_value`, a path that shares nothing
/// with the solver's cached stage tables.
fn independent_residual(
    gamma: &Prescription,
    z: &MeanField,
    cont: &ValueFunction,
    model: &mfmpe_core::GameModel,
    grid: &SimplexGrid,
) -> f64 {
    let z_next = propagate(z, gamma, model).unwrap();
    let mut worst: f64 = 0.0;
    for x in 0..model.n_types() {
        let q: Vec<f64> =
            (0..model.n_actions()).map(|a| stage_value(x, a, z, &z_next, cont, model, grid).unwrap()).collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let achieved: f64 = q.iter().enumerate().map(|(a, v)| gamma.prob(x, a) * v).sum();
        worst = worst.max(best - achieved);
    }
    worst
}

#[test]
fn reported_residual_matches_independent_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..60 {
        let n = rng.gen_range(2..=3);
        let na = rng.gen_range(2..=3);
        let model = random_model(&mut rng, n, na, false, 0.9, Horizon::Infinite);
        let grid = SimplexGrid::new(rng.gen_range(2..=6), n).unwrap();
        let cont = ValueFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
        for z in grid.points().iter().step_by(2) {
            let problem = StageProblem { z, continuation: &cont, model: &model, grid: &grid };
            let r = solve_stage_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
            assert!(r.residual >= -1e-10);
            assert!(!r.converged || r.residual <= 1e-10);
            let indep = independent_residual(&r.gamma, z, &cont, &model, &grid);
            assert!((indep - r.residual).abs() < 1e-10, "{indep} vs {}", r.residual);
        }
    }
}

#[test]
fn z_free_models_reach_single_agent_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..40 {
        let n = rng.gen_range(1..=4);
        let na = rng.gen_range(1..=4);
        let model = random_model(&mut rng, n, na, true, 0.8, Horizon::Infinite);
        let grid = SimplexGrid::new(4, n).unwrap();
        // with z-free primitives the continuation is z-free as well
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let cont = ValueFunction::from_fn(&grid, |_, x| c[x]);
        for z in grid.points() {
            let problem = StageProblem { z, continuation: &cont, model: &model, grid: &grid };
            let r = solve_stage_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
            assert!(r.converged && r.residual == 0.0, "{}", r.residual);
            assert!(r.iterations <= 1);
            for x in 0..n {
                let q: Vec<f64> = (0..na).map(|a| stage_value(x, a, z, z, &cont, &model, &grid).unwrap()).collect();
                let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for a in 0..na {
                    if r.gamma.prob(x, a) > 0.0 {
                        assert!(q[a] >= best - 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn converged_points_are_fixed_by_the_damped_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..40 {
        let model = random_model(&mut rng, 2, 2, false, 0.9, Horizon::Infinite);
        let grid = SimplexGrid::new(5, 2).unwrap();
        let cont = ValueFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
        for z in grid.points() {
            let problem = StageProblem { z, continuation: &cont, model: &model, grid: &grid };
            let r = solve_stage_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
            if r.residual > 1e-12 {
                continue;
            }
            checked += 1;
            let z_next = propagate(z, &r.gamma, &model).unwrap();
            let (br, sets) = best_response(z, &z_next, &cont, &model, &grid, TieBreak::LowestActionIndex).unwrap();
            // gamma is a selection of the best-response correspondence
            for x in 0..2 {
                for a in 0..2 {
                    if r.gamma.prob(x, a) > 0.0 {
                        assert!(sets[x].contains(&a));
                    }
                }
            }
            // where the best response is unique the damped map returns gamma
            if sets.iter().all(|s| s.len() == 1) {
                for alpha in [0.1, 0.5, 1.0] {
                    assert!(r.gamma.mix(&br, alpha).max_abs_diff(&r.gamma) < 1e-10);
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn exhaustive_and_iteration_agree_on_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let iterate = FixedPointOptions { fallback: false, ..Default::default() };
    let exhaustive = FixedPointOptions { max_iters: 1, damping: 1e-6, ..Default::default() };
    let mut both = 0;
    for _ in 0..40 {
        let model = random_model(&mut rng, 2, 2, false, 0.9, Horizon::Infinite);
        let grid = SimplexGrid::new(6, 2).unwrap();
        let cont = ValueFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
        for z in grid.points() {
            let problem = StageProblem { z, continuation: &cont, model: &model, grid: &grid };
            let a = solve_stage_fixed_point(&problem, &iterate).unwrap();
            let b = solve_stage_fixed_point(&problem, &exhaustive).unwrap();
            assert!(b.converged, "exhaustive search failed at {z:?}: {}", b.residual);
            if a.converged {
                both += 1;
                assert!(a.residual <= 1e-10 && b.residual <= 1e-10);
            }
        }
    }
    assert!(both > 50);
}

#[test]
fn seeded_start_at_solution_returns_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = random_model(&mut rng, 2, 2, false, 0.9, Horizon::Infinite);
    let grid = SimplexGrid::new(4, 2).unwrap();
    let cont = ValueFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
    for z in grid.points() {
        let problem = StageProblem { z, continuation: &cont, model: &model, grid: &grid };
        let r = solve_stage_fixed_point(&problem, &FixedPointOptions::default()).unwrap();
        let again = solve_stage_fixed_point_from(&problem, &FixedPointOptions::default(), r.gamma.clone()).unwrap();
        assert_eq!(again.gamma, r.gamma);
        assert_eq!(again.iterations, 0);
        assert_eq!(again.method, Method::Iteration);
    }
}
