//! Built-in model families.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dynamics, GameModel, Horizon, SIMPLEX_TOL};

/// Malware propagation and repair game.
///
/// Types: 0 healthy, 1 infected. Actions: 0 do nothing, 1 repair.
/// Doing nothing leaves an infected node infected and infects a healthy one
/// with probability `q`; repairing always leaves the node healthy. The
/// per-stage reward is `-(k + z(1)) x - lambda a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Malware {
    pub k: f64,
    pub lambda: f64,
    pub q: f64,
}

impl Malware {
    pub fn new(k: f64, lambda: f64, q: f64) -> Self {
        Malware { k, lambda, q }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Model(format!("k must be finite and >= 0, got {}", self.k)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Model(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Model(format!("q ∈ [0,1] violated: q = {}", self.q)));
        }
        Ok(())
    }

    pub fn model(self, discount: f64, horizon: Horizon) -> Result<GameModel> {
        self.validate()?;
        GameModel::new(Arc::new(self), discount, horizon)
    }
}

impl Dynamics for Malware {
    fn n_types(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn kernel(&self, x: usize, a: usize, _z: &[f64], out: &mut [f64]) {
        match (x, a) {
            (_, 1) => out.copy_from_slice(&[1.0, 0.0]),
            (0, _) => out.copy_from_slice(&[1.0 - self.q, self.q]),
            _ => out.copy_from_slice(&[0.0, 1.0]),
        }
    }

    fn reward(&self, x: usize, a: usize, z: &[f64]) -> f64 {
        -(self.k + z[1]) * x as f64 - self.lambda * a as f64
    }
}

/// Games whose kernel and reward are affine in the population state:
/// `Q(x'|x,a,z) = sum_y z(y) K_y(x'|x,a)` and
/// `R(x,a,z) = r0(x,a) + sum_y z(y) r1(x,a,y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularAffine {
    /// `kernels[y][x][a][x']`
    pub kernels: Vec<Vec<Vec<Vec<f64>>>>,
    /// `r0[x][a]`
    pub r0: Vec<Vec<f64>>,
    /// `r1[x][a][y]`
    pub r1: Vec<Vec<Vec<f64>>>,
}

impl TabularAffine {
    pub fn n_types(&self) -> usize {
        self.r0.len()
    }

    pub fn n_actions(&self) -> usize {
        self.r0.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_types();
        let na = self.n_actions();
        if n == 0 || na == 0 {
            return Err(Error::Model("r0 must be a non-empty n_types x n_actions table".into()));
        }
        if self.kernels.len() != n {
            return Err(Error::Model(format!("expected {n} kernel slices, got {}", self.kernels.len())));
        }
        for (y, slice) in self.kernels.iter().enumerate() {
            if slice.len() != n || slice.iter().any(|rows| rows.len() != na || rows.iter().any(|r| r.len() != n)) {
                return Err(Error::Model(format!("kernel slice y={y} must have shape {n} x {na} x {n}")));
            }
            for (x, rows) in slice.iter().enumerate() {
                for (a, row) in rows.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
                        return Err(Error::Model(format!(
                            "kernel row (y={y}, x={x}, a={a}) is not a probability vector (sum {sum})"
                        )));
                    }
                }
            }
        }
        for (x, row) in self.r0.iter().enumerate() {
            if row.len() != na || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("r0 row x={x} must hold {na} finite entries")));
            }
        }
        if self.r1.len() != n {
            return Err(Error::Model(format!("r1 must have {n} rows")));
        }
        for (x, rows) in self.r1.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n || row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Model(format!("r1 entry (x={x}, a={a}) must hold {n} finite entries")));
                }
            }
            if rows.len() != na {
                return Err(Error::Model(format!("r1 row x={x} must have {na} actions")));
            }
        }
        Ok(())
    }

    pub fn model(self, discount: f64, horizon: Horizon) -> Result<GameModel> {
        self.validate()?;
        GameModel::new(Arc::new(self), discount, horizon)
    }
}

impl Dynamics for TabularAffine {
    fn n_types(&self) -> usize {
        TabularAffine::n_types(self)
    }

    fn n_actions(&self) -> usize {
        TabularAffine::n_actions(self)
    }

    fn kernel(&self, x: usize, a: usize, z: &[f64], out: &mut [f64]) {
        for (y, zy) in z.iter().enumerate() {
            for (o, k) in out.iter_mut().zip(&self.kernels[y][x][a]) {
                *o += zy * k;
            }
        }
    }

    fn reward(&self, x: usize, a: usize, z: &[f64]) -> f64 {
        self.r0[x][a] + self.r1[x][a].iter().zip(z).map(|(r, zy)| r * zy).sum::<f64>()
    }
}
