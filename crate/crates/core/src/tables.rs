//! Grid-indexed tables: reward-to-go values and equilibrium generating
//! functions, with off-grid evaluation by barycentric interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeanField, Prescription};
use crate::simplex::SimplexGrid;

/// Reward-to-go `V(z, x)` tabulated on grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    n_points: usize,
    n_types: usize,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn zeros(n_points: usize, n_types: usize) -> Self {
        ValueFunction { n_points, n_types, values: vec![0.0; n_points * n_types] }
    }

    /// Tabulates `f(point, type)`.
    pub fn from_fn(grid: &SimplexGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = grid.n_types();
        let values = (0..grid.len()).flat_map(|p| (0..n).map(move |x| (p, x))).map(|(p, x)| f(p, x)).collect();
        ValueFunction { n_points: grid.len(), n_types: n, values }
    }

    /// Row-major `(point, type)` table.
    pub fn from_flat(n_points: usize, n_types: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_points * n_types {
            return Err(Error::DimensionMismatch { expected: n_points * n_types, got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("value table entry {v} is not finite")));
        }
        Ok(ValueFunction { n_points, n_types, values })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn get(&self, point: usize, x: usize) -> f64 {
        self.values[point * self.n_types + x]
    }

    pub(crate) fn set(&mut self, point: usize, x: usize, v: f64) {
        self.values[point * self.n_types + x] = v;
    }

    pub fn row(&self, point: usize) -> &[f64] {
        &self.values[point * self.n_types..(point + 1) * self.n_types]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_grid(&self, grid: &SimplexGrid) -> Result<()> {
        if grid.len() != self.n_points || grid.n_types() != self.n_types {
            return Err(Error::DimensionMismatch { expected: self.n_points, got: grid.len() });
        }
        Ok(())
    }

    /// Interpolated `V(z, x)`.
    pub fn interpolate(&self, grid: &SimplexGrid, z: &MeanField, x: usize) -> Result<f64> {
        self.check_grid(grid)?;
        let b = grid.barycentric(z.as_slice())?;
        Ok(b.combine(|p| self.get(p, x)))
    }

    /// Interpolated `V(z, .)` for every type at once.
    pub fn interpolate_all(&self, grid: &SimplexGrid, z: &[f64]) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let b = grid.barycentric(z)?;
        Ok((0..self.n_types).map(|x| b.combine(|p| self.get(p, x))).collect())
    }
}

/// Terminal reward `G(z, x)` collected after the last stage; zero by default.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalReward(pub ValueFunction);

impl TerminalReward {
    pub fn zero(grid: &SimplexGrid) -> Self {
        TerminalReward(ValueFunction::zeros(grid.len(), grid.n_types()))
    }
}

/// Equilibrium generating function: one prescription per grid point, either
/// per stage (finite horizon) or stationary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumGenerator {
    stationary: bool,
    stages: Vec<Vec<Prescription>>,
}

impl EquilibriumGenerator {
    /// `stages[t - 1][point]` is the prescription at stage `t`.
    pub fn finite(stages: Vec<Vec<Prescription>>) -> Self {
        EquilibriumGenerator { stationary: false, stages }
    }

    pub fn stationary(table: Vec<Prescription>) -> Self {
        EquilibriumGenerator { stationary: true, stages: vec![table] }
    }

    /// The same prescription at every grid point and stage.
    pub fn constant(grid: &SimplexGrid, gamma: Prescription, n_stages: Option<usize>) -> Self {
        let table = vec![gamma; grid.len()];
        match n_stages {
            Some(t) => EquilibriumGenerator::finite(vec![table; t]),
            None => EquilibriumGenerator::stationary(table),
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Number of stored stages (1 when stationary).
    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Table for stage `t` (1-based); stationary generators ignore `t`.
    pub fn table(&self, t: usize) -> Result<&[Prescription]> {
        if self.stationary {
            return Ok(&self.stages[0]);
        }
        if t == 0 || t > self.stages.len() {
            return Err(Error::arg(format!("stage {t} outside 1..={}", self.stages.len())));
        }
        Ok(&self.stages[t - 1])
    }

    pub fn tables(&self) -> &[Vec<Prescription>] {
        &self.stages
    }

    /// `theta_t[z]` evaluated off-grid by interpolating the stored
    /// prescriptions entrywise.
    pub fn prescription_at(&self, grid: &SimplexGrid, t: usize, z: &MeanField) -> Result<Prescription> {
        let table = self.table(t)?;
        if table.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: table.len() });
        }
        let b = grid.barycentric(z.as_slice())?;
        let gamma = Prescription::convex_combination(b.vertices.iter().map(|&(p, w)| (&table[p], w)))
            .expect("barycentric weights are never empty");
        Ok(gamma)
    }
}

/// Stage-free form of [`EquilibriumGenerator::prescription_at`] for
/// stationary generators (stage 1 of a finite one).
pub fn interpolate_prescription(
    theta: &EquilibriumGenerator,
    grid: &SimplexGrid,
    z: &MeanField,
) -> Result<Prescription> {
    theta.prescription_at(grid, 1, z)
}
