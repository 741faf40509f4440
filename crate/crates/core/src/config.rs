//! Run configuration read from TOML; command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryConfig, SubRiemannianStructure};
use crate::models;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "CINC_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Root-finder tolerance.
    pub tol: f64,
    /// Endpoint tolerance used for pass/fail of plan, simulate and loops.
    pub endpoint_tol: f64,
    /// Closure tolerance on homotopy grids.
    pub closure_tol: f64,
    /// RK4 substeps per control piece.
    pub steps: usize,
    pub grid_resolution: usize,
    pub p: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Leg budget of the planner.
    pub budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "torus".into(),
            tol: 1e-8,
            endpoint_tol: 1e-6,
            closure_tol: 1e-5,
            steps: 200,
            grid_resolution: GeometryConfig::default().grid_resolution,
            p: 2.0,
            seed: 0,
            out: PathBuf::from("out"),
            budget: 64,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("endpoint_tol", self.endpoint_tol),
            ("closure_tol", self.closure_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.steps == 0 || self.grid_resolution < 2 || self.budget == 0 {
            return Err(Error::Config("steps, budget and grid_resolution must be positive".into()));
        }
        if !(self.p >= 1.0) {
            return Err(Error::Config(format!("p must be at least 1, got {}", self.p)));
        }
        Ok(())
    }

    pub fn geometry(&self) -> GeometryConfig {
        GeometryConfig {
            grid_resolution: self.grid_resolution,
            ..GeometryConfig::default()
        }
    }

    pub fn structure(&self) -> Result<SubRiemannianStructure> {
        models::by_name(&self.model, self.geometry())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_and_overrides() {
        let cfg = RunConfig::from_toml("model = \"heisenberg\"\np = 1.0\n").unwrap();
        assert_eq!(cfg.model, "heisenberg");
        assert_eq!(cfg.p, 1.0);
        assert_eq!(cfg.steps, 200);
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn invalid_configs() {
        for text in ["tol = 0.0", "p = 0.5", "steps = 0", "colour = 1", "tol = \"x\""] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn unknown_model() {
        let cfg = RunConfig {
            model: "sphere".into(),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.structure(), Err(Error::UnknownModel(_))));
    }
}
