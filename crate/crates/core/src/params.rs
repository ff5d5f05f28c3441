use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the engine and flywheel.
///
/// Temperatures in K, volumes in m³, areas in m², lengths in m. The JSON
/// form uses these field names verbatim; missing keys take the defaults
/// below, and `v_regen = 0` means the cylinder volumes already include the
/// regenerator dead volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    pub t_c: f64,
    pub t_h: f64,
    pub n_mol: f64,
    pub p_ambient: f64,
    pub r_gas: f64,
    pub v_max_1: f64,
    pub v_max_2: f64,
    pub a_1: f64,
    pub a_2: f64,
    pub crank_r: f64,
    pub rod_l: f64,
    pub alpha: f64,
    pub inertia: f64,
    pub k_f: f64,
    pub v_regen: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            t_c: 298.15,
            t_h: 373.15,
            n_mol: 0.03,
            p_ambient: 100e3,
            r_gas: 8.314,
            v_max_1: 0.00046,
            v_max_2: 0.00046,
            a_1: 0.002,
            a_2: 0.002,
            crank_r: 0.1,
            rod_l: 0.3,
            alpha: PI / 2.0,
            inertia: 0.5,
            k_f: 0.1,
            v_regen: 0.0,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParams {
        name,
        reason: reason.into(),
    }
}

impl EngineParams {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = wrap_angle(alpha);
        self
    }

    pub fn with_t_h(mut self, t_h: f64) -> Self {
        self.t_h = t_h;
        self
    }

    /// Parameters of the mirror-image engine: phase shift `2π − α`.
    pub fn flipped(self) -> Self {
        let alpha = self.alpha;
        self.with_alpha(TAU - alpha)
    }

    /// True when both cylinders share area and swept volume, the condition
    /// under which `(q, α) → (2π − q, 2π − α)` is a symmetry of the torque.
    pub fn is_symmetric(&self) -> bool {
        self.a_1 == self.a_2 && self.v_max_1 == self.v_max_2
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("t_c", self.t_c),
            ("t_h", self.t_h),
            ("n_mol", self.n_mol),
            ("p_ambient", self.p_ambient),
            ("r_gas", self.r_gas),
            ("v_max_1", self.v_max_1),
            ("v_max_2", self.v_max_2),
            ("a_1", self.a_1),
            ("a_2", self.a_2),
            ("crank_r", self.crank_r),
            ("rod_l", self.rod_l),
            ("alpha", self.alpha),
            ("inertia", self.inertia),
            ("k_f", self.k_f),
            ("v_regen", self.v_regen),
        ];
        for (name, value) in all {
            if !value.is_finite() {
                return Err(invalid(name, format!("not finite ({value})")));
            }
        }
        for (name, value) in [
            ("t_c", self.t_c),
            ("t_h", self.t_h),
            ("n_mol", self.n_mol),
            ("r_gas", self.r_gas),
            ("inertia", self.inertia),
            ("a_1", self.a_1),
            ("a_2", self.a_2),
            ("crank_r", self.crank_r),
        ] {
            if value <= 0.0 {
                return Err(invalid(name, format!("must be positive, got {value}")));
            }
        }
        if self.rod_l <= self.crank_r {
            return Err(invalid("rod_l", "rod length must exceed the crank radius"));
        }
        if self.k_f < 0.0 {
            return Err(invalid("k_f", "friction coefficient must be non-negative"));
        }
        if self.p_ambient < 0.0 {
            return Err(invalid("p_ambient", "ambient pressure must be non-negative"));
        }
        if self.v_regen < 0.0 {
            return Err(invalid("v_regen", "regenerator volume must be non-negative"));
        }
        let stroke = 2.0 * self.crank_r;
        if self.v_max_1 - self.a_1 * stroke <= 0.0 {
            return Err(invalid("v_max_1", "cylinder 1 volume vanishes within the stroke"));
        }
        if self.v_max_2 - self.a_2 * stroke <= 0.0 {
            return Err(invalid("v_max_2", "cylinder 2 volume vanishes within the stroke"));
        }
        if !(0.0..TAU).contains(&self.alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 2π), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("engine parameters: {e}")))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct of floats serializes")
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_angle(q: f64) -> f64 {
    let w = q.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}
