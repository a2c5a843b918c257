//! Per-population-state equilibrium: a prescription that is a best response
//! to the continuation value evaluated at the population state it induces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{repair_simplex, GameModel, MeanField, Prescription};
use crate::simplex::SimplexGrid;
use crate::tables::ValueFunction;

/// Two actions whose stage values differ by at most this are both optimal.
pub const INDIFFERENCE_TOL: f64 = 1e-9;

/// Mixing-weight lattice used on indifference frontiers.
const MIX_LATTICE: usize = 1000;

/// Exhaustive pure search is skipped above this many profiles.
const MAX_PURE_PROFILES: usize = 1 << 16;

/// Mixed search runs only when `n_types * n_actions` is at most this.
const MAX_MIXED_SIZE: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct StageProblem<'a> {
    pub z: &'a MeanField,
    /// `V_{t+1}` in the finite-horizon recursion, `V` itself otherwise.
    pub continuation: &'a ValueFunction,
    pub model: &'a GameModel,
    pub grid: &'a SimplexGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    LowestActionIndex,
    UniformMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    /// Step `alpha` of the damped best-response map.
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub tie_break: TieBreak,
    /// Enable exhaustive pure and mixed searches after iteration fails.
    pub fallback: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            damping: 0.5,
            max_iters: 50,
            tol: 1e-10,
            tie_break: TieBreak::LowestActionIndex,
            fallback: true,
        }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::arg(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be positive"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::arg(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iteration,
    ExhaustivePure,
    ExhaustiveMixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub gamma: Prescription,
    /// Largest gain any type could get by switching to a best action, at
    /// the population state `gamma` itself induces.
    pub residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
    /// `phi(z, gamma)`.
    pub z_next: MeanField,
    /// Expected stage value of each type under `gamma`.
    pub values: Vec<f64>,
}

/// `R(x,a,z) + delta * sum_x' Q(x'|x,a,z) V(z_next, x')`.
pub fn stage_value(
    x: usize,
    a: usize,
    z: &MeanField,
    z_next: &MeanField,
    continuation: &ValueFunction,
    model: &GameModel,
    grid: &SimplexGrid,
) -> Result<f64> {
    let q = model.kernel(x, a, z)?;
    let mut cont = 0.0;
    for (y, p) in q.iter().enumerate() {
        if *p != 0.0 {
            cont += p * continuation.interpolate(grid, z_next, y)?;
        }
    }
    Ok(model.reward(x, a, z) + model.discount() * cont)
}

/// Best response of every type to the continuation at `z_next`, along with
/// the set of maximizing actions per type.
pub fn best_response(
    z: &MeanField,
    z_next: &MeanField,
    continuation: &ValueFunction,
    model: &GameModel,
    grid: &SimplexGrid,
    tie_break: TieBreak,
) -> Result<(Prescription, Vec<Vec<usize>>)> {
    let na = model.n_actions();
    let mut q = Vec::with_capacity(model.n_types() * na);
    for x in 0..model.n_types() {
        for a in 0..na {
            q.push(stage_value(x, a, z, z_next, continuation, model, grid)?);
        }
    }
    Ok(best_response_from_values(&q, model.n_types(), na, tie_break))
}

fn best_response_from_values(q: &[f64], n: usize, na: usize, tie_break: TieBreak) -> (Prescription, Vec<Vec<usize>>) {
    let mut probs = vec![0.0; n * na];
    let mut sets = Vec::with_capacity(n);
    for x in 0..n {
        let row = &q[x * na..(x + 1) * na];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let set: Vec<usize> = (0..na).filter(|&a| row[a] >= best - INDIFFERENCE_TOL).collect();
        match tie_break {
            TieBreak::LowestActionIndex => probs[x * na + set[0]] = 1.0,
            TieBreak::UniformMix => set.iter().for_each(|&a| probs[x * na + a] = 1.0 / set.len() as f64),
        }
        sets.push(set);
    }
    (Prescription::from_flat(n, na, probs), sets)
}

/// Kernel rows and rewards at a fixed `z`; only the continuation point moves
/// with the prescription.
pub(crate) struct StageTable<'a> {
    n: usize,
    na: usize,
    discount: f64,
    z: &'a MeanField,
    rewards: Vec<f64>,
    kernel: Vec<f64>,
    continuation: &'a ValueFunction,
    grid: &'a SimplexGrid,
}

pub(crate) struct Evaluation {
    pub z_next: Vec<f64>,
    pub q: Vec<f64>,
    pub values: Vec<f64>,
    pub residual: f64,
}

impl<'a> StageTable<'a> {
    pub fn new(problem: &StageProblem<'a>) -> Result<Self> {
        let model = problem.model;
        let n = model.n_types();
        let na = model.n_actions();
        if problem.z.n_types() != n {
            return Err(Error::DimensionMismatch { expected: n, got: problem.z.n_types() });
        }
        if problem.continuation.n_points() != problem.grid.len() || problem.continuation.n_types() != n {
            return Err(Error::DimensionMismatch {
                expected: problem.grid.len(),
                got: problem.continuation.n_points(),
            });
        }
        let mut kernel = vec![0.0; n * na * n];
        let mut rewards = vec![0.0; n * na];
        for x in 0..n {
            for a in 0..na {
                let i = x * na + a;
                model.kernel_row(x, a, problem.z.as_slice(), &mut kernel[i * n..(i + 1) * n])?;
                rewards[i] = model.reward(x, a, problem.z);
            }
        }
        Ok(StageTable {
            n,
            na,
            discount: model.discount(),
            z: problem.z,
            rewards,
            kernel,
            continuation: problem.continuation,
            grid: problem.grid,
        })
    }

    pub fn evaluate(&self, gamma: &Prescription) -> Result<Evaluation> {
        let (n, na) = (self.n, self.na);
        let mut next = vec![0.0; n];
        for x in 0..n {
            let zx = self.z[x];
            if zx == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = zx * gamma.prob(x, a);
                if w != 0.0 {
                    let i = x * na + a;
                    next.iter_mut().zip(&self.kernel[i * n..(i + 1) * n]).for_each(|(s, k)| *s += w * k);
                }
            }
        }
        let z_next = repair_simplex(next)?;
        let cont = self.continuation.interpolate_all(self.grid, &z_next)?;
        let mut q = vec![0.0; n * na];
        let mut values = vec![0.0; n];
        let mut residual: f64 = 0.0;
        for x in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let i = x * na + a;
                let ev: f64 = self.kernel[i * n..(i + 1) * n].iter().zip(&cont).map(|(k, c)| k * c).sum();
                q[i] = self.rewards[i] + self.discount * ev;
                best = best.max(q[i]);
                values[x] += gamma.prob(x, a) * q[i];
            }
            residual = residual.max(best - values[x]);
        }
        Ok(Evaluation { z_next, q, values, residual })
    }
}

/// Residual of `gamma` as a solution of the stage problem.
pub fn stage_residual(problem: &StageProblem<'_>, gamma: &Prescription) -> Result<f64> {
    Ok(StageTable::new(problem)?.evaluate(gamma)?.residual)
}

/// Solves the stage fixed point starting from the uniform prescription.
pub fn solve_stage_fixed_point(problem: &StageProblem<'_>, opts: &FixedPointOptions) -> Result<FixedPointResult> {
    let start = Prescription::uniform(problem.model.n_types(), problem.model.n_actions());
    solve_stage_fixed_point_from(problem, opts, start)
}

/// Solves the stage fixed point starting the damped iteration at `start`.
///
/// Order of attempts: damped best-response iteration (also testing each
/// pure best response directly), then, with `fallback`, every pure
/// prescription, then one-type mixtures along indifference frontiers.
/// When everything fails the lowest-residual candidate is returned with
/// `converged == false`.
pub fn solve_stage_fixed_point_from(
    problem: &StageProblem<'_>,
    opts: &FixedPointOptions,
    start: Prescription,
) -> Result<FixedPointResult> {
    opts.validate()?;
    let model = problem.model;
    let (n, na) = (model.n_types(), model.n_actions());
    if start.n_types() != n || start.n_actions() != na {
        return Err(Error::DimensionMismatch { expected: n * na, got: start.n_types() * start.n_actions() });
    }
    let table = StageTable::new(problem)?;
    let mut best = Candidate::none();

    let mut gamma = start;
    for k in 0..opts.max_iters {
        let ev = table.evaluate(&gamma)?;
        if ev.residual <= opts.tol {
            return Ok(finish(gamma, ev, k, Method::Iteration, true));
        }
        let (br, _) = best_response_from_values(&ev.q, n, na, opts.tie_break);
        best.offer(&gamma, ev, k);
        let ev_br = table.evaluate(&br)?;
        if ev_br.residual <= opts.tol {
            return Ok(finish(br, ev_br, k + 1, Method::Iteration, true));
        }
        best.offer(&br, ev_br, k + 1);
        gamma = gamma.mix(&br, opts.damping);
    }
    let mut iterations = opts.max_iters;

    if opts.fallback {
        let profiles = na.checked_pow(n as u32).filter(|&p| p <= MAX_PURE_PROFILES);
        if let Some(count) = profiles {
            for actions in PureProfiles::new(n, na).take(count) {
                iterations += 1;
                let pure = Prescription::pure(&actions, na)?;
                let ev = table.evaluate(&pure)?;
                if ev.residual <= opts.tol {
                    return Ok(finish(pure, ev, iterations, Method::ExhaustivePure, true));
                }
                best.offer(&pure, ev, iterations);
            }
        }
        if n * na <= MAX_MIXED_SIZE {
            if let Some(found) = mixed_search(&table, n, na, opts.tol, &mut best, &mut iterations)? {
                let (gamma, ev) = found;
                return Ok(finish(gamma, ev, iterations, Method::ExhaustiveMixed, true));
            }
        }
    }

    let (gamma, ev, _) = best.take().expect("at least one candidate was evaluated");
    let method = if opts.fallback { Method::ExhaustiveMixed } else { Method::Iteration };
    Ok(finish(gamma, ev, iterations, method, false))
}

/// Every pure prescription with residual at most `tol`, in odometer order
/// (type 0 most significant).
pub fn pure_equilibria(problem: &StageProblem<'_>, tol: f64) -> Result<Vec<Prescription>> {
    let (n, na) = (problem.model.n_types(), problem.model.n_actions());
    if na.checked_pow(n as u32).is_none_or(|p| p > MAX_PURE_PROFILES) {
        return Err(Error::arg(format!("{na}^{n} pure profiles exceed the enumeration limit {MAX_PURE_PROFILES}")));
    }
    let table = StageTable::new(problem)?;
    let mut out = Vec::new();
    for actions in PureProfiles::new(n, na) {
        let pure = Prescription::pure(&actions, na)?;
        if table.evaluate(&pure)?.residual <= tol {
            out.push(pure);
        }
    }
    Ok(out)
}

fn finish(gamma: Prescription, ev: Evaluation, iterations: usize, method: Method, converged: bool) -> FixedPointResult {
    FixedPointResult {
        gamma,
        residual: ev.residual,
        iterations,
        method,
        converged,
        z_next: MeanField::from_raw(ev.z_next),
        values: ev.values,
    }
}

struct Candidate(Option<(Prescription, Evaluation, usize)>);

impl Candidate {
    fn none() -> Self {
        Candidate(None)
    }

    fn offer(&mut self, gamma: &Prescription, ev: Evaluation, at: usize) {
        if self.0.as_ref().is_none_or(|(_, cur, _)| ev.residual < cur.residual) {
            self.0 = Some((gamma.clone(), ev, at));
        }
    }

    fn take(self) -> Option<(Prescription, Evaluation, usize)> {
        self.0
    }
}

/// Odometer over pure prescriptions, type 0 most significant.
struct PureProfiles {
    current: Option<Vec<usize>>,
    na: usize,
}

impl PureProfiles {
    fn new(n: usize, na: usize) -> Self {
        PureProfiles { current: Some(vec![0; n]), na }
    }
}

impl Iterator for PureProfiles {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().expect("checked above");
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < self.na {
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    }
}

/// One mixing candidate: type `x` splits between actions `lo < hi`, every
/// other type plays its entry of `others` (in type order).
#[derive(Debug, Clone, PartialEq)]
struct MixCombo {
    x: usize,
    lo: usize,
    hi: usize,
    others: Vec<usize>,
}

impl MixCombo {
    fn build(&self, n: usize, na: usize, w: f64) -> Prescription {
        let mut probs = vec![0.0; n * na];
        let mut others = self.others.iter();
        for y in 0..n {
            if y == self.x {
                probs[y * na + self.lo] = 1.0 - w;
                probs[y * na + self.hi] += w;
            } else {
                probs[y * na + others.next().expect("one action per other type")] = 1.0;
            }
        }
        Prescription::from_flat(n, na, probs)
    }

    /// Payoff advantage of `hi` over `lo` for the mixing type.
    fn gap(&self, na: usize, ev: &Evaluation) -> f64 {
        ev.q[self.x * na + self.hi] - ev.q[self.x * na + self.lo]
    }
}

/// One type mixes between two actions while every other type plays a pure
/// action; candidates are visited by type, action pair, then the other
/// types' profile.
///
/// A first pass bisects every candidate whose payoff difference changes
/// sign between the two pure endpoints. A second pass scans the mixing
/// weight of every candidate on a lattice and bisects each sign change
/// between neighbouring lattice points.
fn mixed_search(
    table: &StageTable<'_>,
    n: usize,
    na: usize,
    tol: f64,
    best: &mut Candidate,
    iterations: &mut usize,
) -> Result<Option<(Prescription, Evaluation)>> {
    let mut combos = Vec::new();
    for x in 0..n {
        for lo in 0..na {
            for hi in lo + 1..na {
                for others in PureProfiles::new(n - 1, na) {
                    combos.push(MixCombo { x, lo, hi, others });
                }
            }
        }
    }
    let try_root = |combo: &MixCombo, a: f64, b: f64, ga: f64, best: &mut Candidate, iterations: &mut usize| {
        for w in bisect(table, combo, n, na, a, b, ga, iterations)? {
            let gamma = combo.build(n, na, w);
            let ev = table.evaluate(&gamma)?;
            if ev.residual <= tol {
                return Ok(Some((gamma, ev)));
            }
            best.offer(&gamma, ev, *iterations);
        }
        Ok::<_, Error>(None)
    };

    for combo in &combos {
        let g0 = combo.gap(na, &table.evaluate(&combo.build(n, na, 0.0))?);
        let g1 = combo.gap(na, &table.evaluate(&combo.build(n, na, 1.0))?);
        *iterations += 2;
        if g0.signum() != g1.signum() {
            if let Some(found) = try_root(combo, 0.0, 1.0, g0, best, iterations)? {
                return Ok(Some(found));
            }
        }
    }

    for combo in &combos {
        let mut prev: Option<f64> = None;
        for i in 0..=MIX_LATTICE {
            let w = i as f64 / MIX_LATTICE as f64;
            let gamma = combo.build(n, na, w);
            let ev = table.evaluate(&gamma)?;
            *iterations += 1;
            let g = combo.gap(na, &ev);
            if ev.residual <= tol {
                return Ok(Some((gamma, ev)));
            }
            best.offer(&gamma, ev, *iterations);
            if let Some(gp) = prev.filter(|gp| gp.signum() != g.signum()) {
                let w0 = (i - 1) as f64 / MIX_LATTICE as f64;
                if let Some(found) = try_root(combo, w0, w, gp, best, iterations)? {
                    return Ok(Some(found));
                }
            }
            prev = Some(g);
        }
    }
    Ok(None)
}

/// Bisection of the payoff difference on `[a, b]`; returns the final
/// bracket ends and midpoint.
#[allow(clippy::too_many_arguments)]
fn bisect(
    table: &StageTable<'_>,
    combo: &MixCombo,
    n: usize,
    na: usize,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    iterations: &mut usize,
) -> Result<[f64; 3]> {
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = combo.gap(na, &table.evaluate(&combo.build(n, na, m))?);
        *iterations += 1;
        if gm == 0.0 {
            return Ok([m, m, m]);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok([0.5 * (a + b), a, b])
}
