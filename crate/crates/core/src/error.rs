use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t:.6e} s (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64, last: Vec<f64> },

    #[error("non-finite state at t = {t:.6e} s")]
    NonFinite { t: f64, last: Vec<f64> },

    #[error("root scan inconsistent even with {grid} grid points")]
    RootScan { grid: usize },

    #[error("shooting setup failed: {reason} (equilibria: {census})")]
    Setup { reason: String, census: String },

    #[error("test function indeterminate at T_h = {t_h} K: no event within {t_max} s")]
    Indeterminate { t_h: f64, t_max: f64 },

    #[error("test function has the same sign ({sign:+}) at both bracket ends [{lo}, {hi}] K")]
    Bracket { lo: f64, hi: f64, sign: i8 },

    #[error("limit-cycle Newton iteration did not converge (residual {residual:.3e}, last lap period {lap_period:.6} s)")]
    CycleNewton { residual: f64, lap_period: f64 },

    #[error("limit-cycle pre-check inconclusive after {t_budget} s ({laps} laps)")]
    CycleInconclusive { t_budget: f64, laps: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
