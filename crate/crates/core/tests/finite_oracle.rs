//! Two-stage malware game on a coarse grid against an exact-arithmetic
//! enumeration of equilibria.

use mfmpe_core::{solve_finite, Horizon, Malware, SimplexGrid, SolverOptions, TerminalReward};
use num_rational::Rational64 as Q;

fn r(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

/// All stage-1 equilibria `(gamma(1|0), gamma(1|1), V_1(z,0), V_1(z,1))` at
/// `z = (z0, 1 - z0)`, by exact enumeration of the pure profiles and of the
/// one-type mixtures that solve the indifference condition. Stage 2 is the
/// myopic "never act" stage, so `V_2(z', 1) = -(k + z'(1))` and
/// `V_2(z', 0) = 0`; both are affine, hence exact under interpolation.
fn exact_stage_one(z0: Q) -> Vec<[Q; 4]> {
    let (k, lam, q, d) = (r(1, 5), r(1, 2), r(9, 10), r(9, 10));
    let one = Q::from_integer(1);
    let zero = Q::from_integer(0);
    let z1 = one - z0;
    let values = |p0: Q, p1: Q| {
        let zn1 = z0 * q * (one - p0) + z1 * (one - p1);
        let q00 = -d * q * (k + zn1);
        let q01 = -lam;
        let q10 = -(k + z1) - d * (k + zn1);
        let q11 = -(k + z1) - lam;
        (q00, q01, q10, q11)
    };
    let mut cands = vec![];
    for p0 in [zero, one] {
        for p1 in [zero, one] {
            cands.push((p0, p1));
        }
        if z1 > zero {
            // infected type indifferent: d (k + z'(1)) = lambda
            let p1 = one - (lam / d - k - z0 * q * (one - p0)) / z1;
            if p1 >= zero && p1 <= one {
                cands.push((p0, p1));
            }
        }
    }
    for p1 in [zero, one] {
        if z0 > zero {
            // healthy type indifferent: d q (k + z'(1)) = lambda
            let p0 = one - (lam / (d * q) - k - z1 * (one - p1)) / (z0 * q);
            if p0 >= zero && p0 <= one {
                cands.push((p0, p1));
            }
        }
    }
    let mut out: Vec<[Q; 4]> = vec![];
    for (p0, p1) in cands {
        let (q00, q01, q10, q11) = values(p0, p1);
        let v0 = (one - p0) * q00 + p0 * q01;
        let v1 = (one - p1) * q10 + p1 * q11;
        if q00.max(q01) == v0 && q10.max(q11) == v1 && !out.iter().any(|e| e[0] == p0 && e[1] == p1) {
            out.push([p0, p1, v0, v1]);
        }
    }
    out
}

fn f(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

#[test]
fn two_stage_malware_matches_exact_enumeration() {
    let model = Malware::new(0.2, 0.5, 0.9).model(0.9, Horizon::Finite(2)).unwrap();
    let grid = SimplexGrid::new(4, 2).unwrap();
    let sol = solve_finite(&model, &grid, &SolverOptions::default(), &TerminalReward::zero(&grid)).unwrap();

    for (p, z) in grid.points().iter().enumerate() {
        // stage 2: myopic
        assert_eq!(sol.theta.table(2).unwrap()[p].as_pure(), Some(vec![0, 0]));
        assert!((sol.value(2).get(p, 1) + 0.2 + z[1]).abs() < 1e-15);

        let exact = exact_stage_one(r(grid.composition(p)[0] as i64, 4));
        assert_eq!(exact.len(), 1, "unique stage-1 equilibrium expected at {z:?}");
        let [p0, p1, v0, v1] = exact[0];
        let gamma = &sol.theta.table(1).unwrap()[p];
        assert!((gamma.prob(0, 1) - f(p0)).abs() < 1e-12, "{z:?}: {gamma:?} vs {p0}");
        assert!((gamma.prob(1, 1) - f(p1)).abs() < 1e-12, "{z:?}: {gamma:?} vs {p1}");
        assert!((sol.value(1).get(p, 0) - f(v0)).abs() < 1e-12);
        assert!((sol.value(1).get(p, 1) - f(v1)).abs() < 1e-12);
    }
}

/// Frozen output of the exact enumeration above, by grid point z(0) = c/4.
#[test]
fn two_stage_malware_frozen_table() {
    let frozen = [
        (r(0, 1), r(29, 45), r(-9, 20), r(-17, 10)),
        (r(0, 1), r(223, 270), r(-9, 20), r(-29, 20)),
        (r(53, 729), r(1, 1), r(-1, 2), r(-6, 5)),
        (r(835, 2187), r(1, 1), r(-1, 2), r(-19, 20)),
        (r(391, 729), r(1, 1), r(-1, 2), r(-7, 10)),
    ];
    for (c, want) in frozen.iter().enumerate() {
        let got = exact_stage_one(r(c as i64, 4));
        assert_eq!(got, vec![[want.0, want.1, want.2, want.3]]);
    }
}
