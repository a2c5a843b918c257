//! Domain types for a discrete-time mean-field game and the McKean-Vlasov
//! population update.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexGrid;

/// Tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Largest rounding drift `propagate` will silently repair.
pub const DRIFT_TOL: f64 = 1e-10;

/// Number of random simplex points used to spot-check a model at load time.
const SPOT_CHECKS: usize = 100;

/// Population state: the fraction of players holding each private type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MeanField(Vec<f64>);

impl MeanField {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, SIMPLEX_TOL)?;
        Ok(MeanField(probs))
    }

    /// Point mass on type `x`.
    pub fn degenerate(n_types: usize, x: usize) -> Self {
        let mut p = vec![0.0; n_types];
        p[x] = 1.0;
        MeanField(p)
    }

    pub fn uniform(n_types: usize) -> Self {
        MeanField(vec![1.0 / n_types as f64; n_types])
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        MeanField(probs)
    }

    pub fn n_types(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// L1 distance to another population state.
    pub fn l1_distance(&self, other: &MeanField) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl std::ops::Index<usize> for MeanField {
    type Output = f64;
    fn index(&self, x: usize) -> &f64 {
        &self.0[x]
    }
}

impl TryFrom<Vec<f64>> for MeanField {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MeanField::new(v)
    }
}

impl From<MeanField> for Vec<f64> {
    fn from(z: MeanField) -> Vec<f64> {
        z.0
    }
}

fn check_distribution(p: &[f64], tol: f64) -> Result<()> {
    if p.is_empty() {
        return Err(Error::arg("probability vector is empty"));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::arg(format!("probability entry {v} is negative or not finite")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::arg(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

/// Row-stochastic map from private type to a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    n_types: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Prescription {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_types = rows.len();
        if n_types == 0 {
            return Err(Error::arg("prescription has no rows"));
        }
        let n_actions = rows[0].len();
        let mut probs = Vec::with_capacity(n_types * n_actions);
        for (x, row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch { expected: n_actions, got: row.len() });
            }
            check_distribution(&row, SIMPLEX_TOL).map_err(|e| Error::arg(format!("prescription row {x}: {e}")))?;
            probs.extend(row);
        }
        Ok(Prescription { n_types, n_actions, probs })
    }

    pub(crate) fn from_flat(n_types: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_types * n_actions);
        Prescription { n_types, n_actions, probs }
    }

    pub fn uniform(n_types: usize, n_actions: usize) -> Self {
        Prescription::from_flat(n_types, n_actions, vec![1.0 / n_actions as f64; n_types * n_actions])
    }

    /// Every type `x` plays `actions[x]` with certainty.
    pub fn pure(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::arg(format!("action {a} out of range for type {x}")));
            }
            probs[x * n_actions + a] = 1.0;
        }
        Ok(Prescription::from_flat(actions.len(), n_actions, probs))
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Probability of action `a` for type `x`.
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.n_actions)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Prescription) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `(1 - alpha) * self + alpha * other`.
    pub fn mix(&self, other: &Prescription, alpha: f64) -> Prescription {
        let probs = self.probs.iter().zip(&other.probs).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect();
        Prescription::from_flat(self.n_types, self.n_actions, probs)
    }

    /// Convex combination of prescriptions with the given weights.
    pub fn convex_combination<'a>(parts: impl IntoIterator<Item = (&'a Prescription, f64)>) -> Option<Prescription> {
        let mut acc: Option<Prescription> = None;
        for (p, w) in parts {
            match acc.as_mut() {
                None => {
                    let probs = p.probs.iter().map(|v| v * w).collect();
                    acc = Some(Prescription::from_flat(p.n_types, p.n_actions, probs));
                }
                Some(acc) => acc.probs.iter_mut().zip(&p.probs).for_each(|(s, v)| *s += w * v),
            }
        }
        acc
    }

    /// If every row is a point mass, the chosen action per type.
    pub fn as_pure(&self) -> Option<Vec<usize>> {
        self.rows().map(|row| row.iter().position(|&p| p == 1.0)).collect()
    }
}

/// Type dynamics and per-stage reward of a mean-field game.
///
/// Both maps may depend on the current population state `z` and should be
/// continuous in it.
pub trait Dynamics: Send + Sync {
    fn n_types(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Writes `Q(. | x, a, z)` into `out` (length `n_types`).
    fn kernel(&self, x: usize, a: usize, z: &[f64], out: &mut [f64]);
    fn reward(&self, x: usize, a: usize, z: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// A mean-field game: dynamics, reward, discount and horizon.
#[derive(Clone)]
pub struct GameModel {
    dynamics: Arc<dyn Dynamics>,
    discount: f64,
    horizon: Horizon,
}

impl fmt::Debug for GameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameModel")
            .field("n_types", &self.n_types())
            .field("n_actions", &self.n_actions())
            .field("discount", &self.discount)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl GameModel {
    /// Builds a model and spot-checks kernel stochasticity and reward
    /// finiteness at the simplex vertices and at random simplex points.
    pub fn new(dynamics: Arc<dyn Dynamics>, discount: f64, horizon: Horizon) -> Result<Self> {
        if dynamics.n_types() == 0 || dynamics.n_actions() == 0 {
            return Err(Error::Model("type and action spaces must be non-empty".into()));
        }
        match horizon {
            Horizon::Finite(0) => return Err(Error::Model("finite horizon must be at least 1".into())),
            Horizon::Finite(_) if !(discount > 0.0 && discount <= 1.0) => {
                return Err(Error::Model(format!("finite-horizon discount must lie in (0, 1], got {discount}")))
            }
            Horizon::Infinite if !(discount > 0.0 && discount < 1.0) => {
                return Err(Error::Model(format!("infinite-horizon discount must lie in (0, 1), got {discount}")))
            }
            _ => {}
        }
        let model = GameModel { dynamics, discount, horizon };
        let n = model.n_types();
        for x in 0..n {
            model.check_point(MeanField::degenerate(n, x).as_slice())?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..SPOT_CHECKS {
            model.check_point(random_simplex_point(&mut rng, n).as_slice())?;
        }
        Ok(model)
    }

    /// Checks the kernel and reward at every point of `grid`.
    pub fn check_grid(&self, grid: &SimplexGrid) -> Result<()> {
        if grid.n_types() != self.n_types() {
            return Err(Error::DimensionMismatch { expected: self.n_types(), got: grid.n_types() });
        }
        grid.points().iter().try_for_each(|z| self.check_point(z.as_slice()))
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        let mut row = vec![0.0; self.n_types()];
        for x in 0..self.n_types() {
            for a in 0..self.n_actions() {
                self.kernel_row(x, a, z, &mut row)?;
                let r = self.dynamics.reward(x, a, z);
                if !r.is_finite() {
                    return Err(Error::NonFiniteReward { x, a, value: r });
                }
            }
        }
        Ok(())
    }

    pub fn n_types(&self) -> usize {
        self.dynamics.n_types()
    }

    pub fn n_actions(&self) -> usize {
        self.dynamics.n_actions()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    /// Same game with a different horizon (and discount).
    pub fn with_horizon(&self, horizon: Horizon, discount: f64) -> Result<Self> {
        GameModel::new(Arc::clone(&self.dynamics), discount, horizon)
    }

    pub fn reward(&self, x: usize, a: usize, z: &MeanField) -> f64 {
        self.dynamics.reward(x, a, z.as_slice())
    }

    /// Evaluates `Q(. | x, a, z)` into `out`, rejecting rows that are not
    /// probability vectors.
    pub fn kernel_row(&self, x: usize, a: usize, z: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        self.dynamics.kernel(x, a, z, out);
        let sum: f64 = out.iter().sum();
        let min = out.iter().copied().fold(f64::INFINITY, f64::min);
        if !sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOL || min < -SIMPLEX_TOL {
            return Err(Error::KernelNotStochastic { x, a, sum, min });
        }
        Ok(())
    }

    pub fn kernel(&self, x: usize, a: usize, z: &MeanField) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_types()];
        self.kernel_row(x, a, z.as_slice(), &mut out)?;
        Ok(out)
    }

    /// Largest `|R(x, a, z)|` over the given population states.
    pub fn max_abs_reward<'a>(&self, zs: impl IntoIterator<Item = &'a MeanField>) -> f64 {
        let mut m: f64 = 0.0;
        for z in zs {
            for x in 0..self.n_types() {
                for a in 0..self.n_actions() {
                    m = m.max(self.reward(x, a, z).abs());
                }
            }
        }
        m
    }
}

/// McKean-Vlasov update: `z'(y) = sum_x sum_a z(x) gamma(a|x) Q(y|x,a,z)`.
pub fn propagate(z: &MeanField, gamma: &Prescription, model: &GameModel) -> Result<MeanField> {
    let n = model.n_types();
    if z.n_types() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.n_types() });
    }
    if gamma.n_types() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma.n_types() });
    }
    if gamma.n_actions() != model.n_actions() {
        return Err(Error::DimensionMismatch { expected: model.n_actions(), got: gamma.n_actions() });
    }
    let mut next = vec![0.0; n];
    let mut row = vec![0.0; n];
    for x in 0..n {
        if z[x] == 0.0 {
            continue;
        }
        for a in 0..model.n_actions() {
            let w = z[x] * gamma.prob(x, a);
            if w == 0.0 {
                continue;
            }
            model.kernel_row(x, a, z.as_slice(), &mut row)?;
            next.iter_mut().zip(&row).for_each(|(s, q)| *s += w * q);
        }
    }
    repair_simplex(next).map(MeanField::from_raw)
}

/// Clamps rounding noise and renormalizes; larger drift is a model error.
pub(crate) fn repair_simplex(mut p: Vec<f64>) -> Result<Vec<f64>> {
    let neg: f64 = p.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let sum: f64 = p.iter().sum();
    if !sum.is_finite() || neg > DRIFT_TOL || (sum - 1.0).abs() > DRIFT_TOL {
        return Err(Error::Model(format!("population update left the simplex (sum {sum}, negative mass {neg})")));
    }
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    Ok(p)
}

/// Uniformly distributed point on the probability simplex.
pub fn random_simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> MeanField {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let mut p: Vec<f64> = e.iter().map(|v| v / s).collect();
    // force exact unit mass onto the largest coordinate
    let rest: f64 = p.iter().sum::<f64>() - 1.0;
    let imax = (0..n).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
    p[imax] -= rest;
    MeanField::from_raw(p)
}

/// Dynamics built from closures; convenient for ad-hoc models.
pub struct FnDynamics<K, R> {
    n_types: usize,
    n_actions: usize,
    kernel: K,
    reward: R,
}

impl<K, R> FnDynamics<K, R>
where
    K: Fn(usize, usize, &[f64], &mut [f64]) + Send + Sync,
    R: Fn(usize, usize, &[f64]) -> f64 + Send + Sync,
{
    pub fn new(n_types: usize, n_actions: usize, kernel: K, reward: R) -> Self {
        FnDynamics { n_types, n_actions, kernel, reward }
    }
}

impl<K, R> Dynamics for FnDynamics<K, R>
where
    K: Fn(usize, usize, &[f64], &mut [f64]) + Send + Sync,
    R: Fn(usize, usize, &[f64]) -> f64 + Send + Sync,
{
    fn n_types(&self) -> usize {
        self.n_types
    }
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn kernel(&self, x: usize, a: usize, z: &[f64], out: &mut [f64]) {
        (self.kernel)(x, a, z, out)
    }
    fn reward(&self, x: usize, a: usize, z: &[f64]) -> f64 {
        (self.reward)(x, a, z)
    }
}
