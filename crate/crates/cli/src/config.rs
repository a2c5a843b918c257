//! JSON run configuration.
//!
//! ```json
//! {
//!   "family": "malware",
//!   "params": { "k": 0.2, "lambda": 0.5, "q": 0.9 },
//!   "discount": 0.9,
//!   "horizon": "infinite",
//!   "resolution": 50
//! }
//! ```
//!
//! `horizon` is `"infinite"` or `{ "finite": T }`. The optional `solver`,
//! `verify` and `simulate` sections override defaults.

use std::path::Path;

use mfmpe_core::{
    FixedPointOptions, GameModel, Horizon, InitMode, Malware, OuterOptions, SimplexGrid, SolverOptions, TabularAffine,
    TieBreak,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Malware,
    TabularAffine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub family: Family,
    pub params: Value,
    pub discount: f64,
    pub horizon: Horizon,
    pub resolution: usize,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub tie_break: TieBreak,
    pub fallback: bool,
    pub max_sweeps: usize,
    pub sup_tol: f64,
    pub strict: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let outer = OuterOptions::default();
        let fp = FixedPointOptions::default();
        SolverSection {
            damping: fp.damping,
            max_iters: fp.max_iters,
            tol: fp.tol,
            tie_break: fp.tie_break,
            fallback: fp.fallback,
            max_sweeps: outer.max_sweeps,
            sup_tol: outer.sup_tol,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Truncation length for infinite-horizon models.
    pub truncation: usize,
    /// Defaults to `1e-4 + truncation_bound + c / M`.
    pub gap_tol: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { truncation: 200, gap_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_agents: usize,
    pub seed: u64,
    /// Periods to simulate; defaults to the horizon, or 100 if infinite.
    pub t_sim: Option<usize>,
    /// Initial population state; defaults to uniform.
    pub z1: Option<Vec<f64>>,
    pub init: InitMode,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { n_agents: 10_000, seed: 0, t_sim: None, z1: None, init: InitMode::Iid }
    }
}

impl SolverSection {
    pub fn fixed_point(&self) -> FixedPointOptions {
        FixedPointOptions {
            damping: self.damping,
            max_iters: self.max_iters,
            tol: self.tol,
            tie_break: self.tie_break,
            fallback: self.fallback,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let config: Config = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("line {} column {}: {}", e.line(), e.column(), e)))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every invariant that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        SimplexGrid::new(self.resolution, self.n_types()?).map_err(|e| CliError::Config(e.to_string()))?;
        self.solver.fixed_point().validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
        if self.solver.max_sweeps == 0 || self.solver.sup_tol.is_nan() || self.solver.sup_tol <= 0.0 {
            return Err(CliError::Config("solver: max_sweeps and sup_tol must be positive".into()));
        }
        if self.verify.truncation == 0 {
            return Err(CliError::Config("verify: truncation must be positive".into()));
        }
        if let Some(tol) = self.verify.gap_tol {
            if tol.is_nan() || tol < 0.0 {
                return Err(CliError::Config(format!("verify: gap_tol must be >= 0, got {tol}")));
            }
        }
        if self.simulate.n_agents == 0 {
            return Err(CliError::Config("simulate: n_agents must be at least 1".into()));
        }
        if let Some(z1) = &self.simulate.z1 {
            mfmpe_core::MeanField::new(z1.clone()).map_err(|e| CliError::Config(format!("simulate: z1: {e}")))?;
        }
        Ok(())
    }

    fn n_types(&self) -> Result<usize> {
        Ok(self.model()?.n_types())
    }

    pub fn model(&self) -> Result<GameModel> {
        let invalid = |e: mfmpe_core::Error| CliError::Config(format!("{:?} model: {e}", self.family));
        let parse = |e: serde_json::Error| CliError::Config(format!("{:?} params: {e}", self.family));
        match self.family {
            Family::Malware => {
                let m: Malware = serde_json::from_value(self.params.clone()).map_err(parse)?;
                m.model(self.discount, self.horizon).map_err(invalid)
            }
            Family::TabularAffine => {
                let m: TabularAffine = serde_json::from_value(self.params.clone()).map_err(parse)?;
                m.model(self.discount, self.horizon).map_err(invalid)
            }
        }
    }

    pub fn grid(&self) -> Result<SimplexGrid> {
        Ok(SimplexGrid::new(self.resolution, self.n_types()?)?)
    }

    pub fn solver_options(&self, strict: bool) -> SolverOptions {
        SolverOptions { fixed_point: self.solver.fixed_point(), strict: strict || self.solver.strict, parallel: true }
    }

    pub fn outer_options(&self) -> OuterOptions {
        OuterOptions { max_sweeps: self.solver.max_sweeps, sup_tol: self.solver.sup_tol }
    }
}

/// Reads and validates a configuration file. Returns the config and the raw
/// bytes (hashed into run manifests).
pub fn load_config(path: &Path) -> Result<(Config, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: not UTF-8: {e}", path.display())))?;
    let config = Config::from_json(text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok((config, bytes))
}
