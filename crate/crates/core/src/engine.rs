//! Closed-form model quantities: crank kinematics, cylinder volumes, the
//! isothermal pressure law, the torque on the flywheel and its potential.
//!
//! Every function takes the unwrapped flywheel angle `q`; periodic
//! quantities reduce it to `[0, 2π)` first so that `f(q) == f(q + 2π)`.
//!
//! The torque factors as `τ(q) = −g(q)·(p(q) − p_a)` with the geometric
//! factor `g(q) = A₁φ(q − α) + A₂φ(q) = −(V₁' + V₂')`. Both factors are
//! exposed because the equilibrium search works on them separately.

use crate::error::{Error, Result};
use crate::params::{wrap_angle, EngineParams};
use crate::quadrature;

/// Absolute tolerance of the potential quadrature, J.
pub const POTENTIAL_TOL: f64 = 1e-10;

/// Piston position measured from the crank centre, `x(q) ∈ [l − r, l + r]`.
pub fn piston_position(q: f64, p: &EngineParams) -> f64 {
    let (s, c) = wrap_angle(q).sin_cos();
    let r = p.crank_r;
    -r * c + (p.rod_l * p.rod_l - r * r * s * s).sqrt()
}

/// `φ(q) = dx/dq`, the crank gain.
pub fn crank_gain(q: f64, p: &EngineParams) -> f64 {
    let (s, c) = wrap_angle(q).sin_cos();
    let r = p.crank_r;
    let root = (p.rod_l * p.rod_l - r * r * s * s).sqrt();
    r * s - r * r * s * c / root
}

/// `φ'(q)`.
pub fn crank_gain_derivative(q: f64, p: &EngineParams) -> f64 {
    let q = wrap_angle(q);
    let (s, c) = q.sin_cos();
    let r = p.crank_r;
    let root = (p.rod_l * p.rod_l - r * r * s * s).sqrt();
    let sc = s * c;
    r * c - r * r * (2.0 * q).cos() / root - r.powi(4) * sc * sc / root.powi(3)
}

/// Cylinder volumes `(V₁, V₂)`; cylinder 1 is the hot one and lags by `α`.
pub fn volumes(q: f64, p: &EngineParams) -> (f64, f64) {
    let bottom = p.rod_l - p.crank_r;
    let v1 = p.v_max_1 - p.a_1 * (piston_position(q - p.alpha, p) - bottom);
    let v2 = p.v_max_2 - p.a_2 * (piston_position(q, p) - bottom);
    (v1, v2)
}

/// `(dV₁/dq, dV₂/dq)`.
pub fn volume_derivatives(q: f64, p: &EngineParams) -> (f64, f64) {
    (
        -p.a_1 * crank_gain(q - p.alpha, p),
        -p.a_2 * crank_gain(q, p),
    )
}

/// Log-mean of the two bath temperatures.
pub fn mean_effective_temperature(t_h: f64, t_c: f64) -> Result<f64> {
    for t in [t_h, t_c] {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTemperature(t));
        }
    }
    if (t_h - t_c).abs() <= 1e-12 * t_h.max(t_c) {
        return Ok(t_c);
    }
    Ok((t_h - t_c) / (t_h.ln() - t_c.ln()))
}

/// Volume added to each cylinder to absorb the regenerator dead space.
pub fn volume_augmentation(p: &EngineParams) -> f64 {
    if p.v_regen == 0.0 {
        return 0.0;
    }
    // validated params keep both temperatures positive
    let t_r = mean_effective_temperature(p.t_h, p.t_c).unwrap_or(p.t_c);
    p.t_h * p.t_c * p.v_regen / ((p.t_h + p.t_c) * t_r)
}

fn reduced_volume(q: f64, p: &EngineParams) -> f64 {
    let (v1, v2) = volumes(q, p);
    let dv = volume_augmentation(p);
    (v1 + dv) / p.t_h + (v2 + dv) / p.t_c
}

/// Gas pressure, Pa.
pub fn pressure(q: f64, p: &EngineParams) -> f64 {
    p.n_mol * p.r_gas / reduced_volume(q, p)
}

/// `dp/dq`.
pub fn pressure_derivative(q: f64, p: &EngineParams) -> f64 {
    let d = reduced_volume(q, p);
    let (dv1, dv2) = volume_derivatives(q, p);
    -p.n_mol * p.r_gas * (dv1 / p.t_h + dv2 / p.t_c) / (d * d)
}

/// `g(q) = A₁φ(q − α) + A₂φ(q)`.
pub fn geometric_factor(q: f64, p: &EngineParams) -> f64 {
    p.a_1 * crank_gain(q - p.alpha, p) + p.a_2 * crank_gain(q, p)
}

/// `g'(q)`.
pub fn geometric_factor_derivative(q: f64, p: &EngineParams) -> f64 {
    p.a_1 * crank_gain_derivative(q - p.alpha, p) + p.a_2 * crank_gain_derivative(q, p)
}

/// `p(q) − p_a`.
pub fn pressure_excess(q: f64, p: &EngineParams) -> f64 {
    pressure(q, p) - p.p_ambient
}

/// Net torque of both pistons on the flywheel, N·m.
pub fn torque(q: f64, p: &EngineParams) -> f64 {
    -geometric_factor(q, p) * pressure_excess(q, p)
}

/// `τ'(q)`, analytic.
pub fn torque_derivative(q: f64, p: &EngineParams) -> f64 {
    let g = geometric_factor(q, p);
    let dg = geometric_factor_derivative(q, p);
    -(dg * pressure_excess(q, p) + g * pressure_derivative(q, p))
}

/// `U(q) = −∫₀^q τ(s) ds` on the unwrapped angle. Not periodic: `U(q + 2π) = U(q) + U(2π)`.
pub fn potential(q: f64, p: &EngineParams) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    // quarter-turn panels keep the adaptive recursion shallow
    let panels = ((q.abs() / (std::f64::consts::FRAC_PI_2)).ceil() as usize).max(1);
    let width = q / panels as f64;
    let tol = POTENTIAL_TOL / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let a = k as f64 * width;
        let b = if k + 1 == panels { q } else { a + width };
        acc += quadrature::integrate(|s| torque(s, p), a, b, tol);
    }
    -acc
}

/// `U(2π)`, the net work the gas does on the flywheel per revolution with sign flipped.
pub fn potential_per_revolution(p: &EngineParams) -> f64 {
    potential(std::f64::consts::TAU, p)
}

/// `E = ½ I q̇² + U(q)`.
pub fn energy(q: f64, qdot: f64, p: &EngineParams) -> f64 {
    0.5 * p.inertia * qdot * qdot + potential(q, p)
}
