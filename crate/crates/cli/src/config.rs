use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stirling_core::ode::Tolerances;
use stirling_core::EngineParams;

/// Everything a run depends on besides the command line of the subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineParams,
    pub tol_rel: f64,
    pub tol_abs: f64,
    /// Overrides the command's default α grid, rad.
    pub alpha_grid: Option<Vec<f64>>,
    /// Overrides the command's default `T_h` grid, K.
    pub t_h_grid: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tol = Tolerances::default();
        Self {
            engine: EngineParams::default(),
            tol_rel: tol.rel,
            tol_abs: tol.abs,
            alpha_grid: None,
            t_h_grid: None,
        }
    }
}

fn check_grid(name: &str, grid: &Option<Vec<f64>>) -> Result<()> {
    if let Some(g) = grid {
        if g.is_empty() {
            bail!("{name} is empty");
        }
        if g.iter().any(|x| !x.is_finite()) {
            bail!("{name} contains a non-finite value");
        }
        if g.windows(2).any(|w| w[0] >= w[1]) {
            bail!("{name} must be strictly ascending");
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if !(self.tol_rel > 0.0) || !(self.tol_abs > 0.0) {
            bail!("tolerances must be positive");
        }
        check_grid("alpha_grid", &self.alpha_grid)?;
        check_grid("t_h_grid", &self.t_h_grid)?;
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.tol_rel, self.tol_abs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
