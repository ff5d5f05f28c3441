//! The rotational limit cycle: existence by transient simulation, period by
//! single shooting, and the work and average power it delivers.
//!
//! Existence is decided from a seed above any possible cycle: at the fastest
//! point of a cycle `k_f |z₂| = |τ|`, so `|z₂| > max|τ|/k_f` lies outside it.
//! The trajectory from there can never cross the cycle, so it either winds
//! onto it or (no cycle) eventually reaches `z₂ = 0`.

use std::f64::consts::TAU;
use std::io::{self, Write};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs, State};
use crate::engine::{pressure, potential_per_revolution, torque, torque_derivative, volume_derivatives, volumes};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt};
use crate::ode::{self, Direction, Dopri5, Event, Tolerances};
use crate::params::EngineParams;

pub const DEFAULT_SAMPLES: usize = 512;
/// Transient budget of the existence check, s.
pub const DEFAULT_TRANSIENT: f64 = 200.0;
pub const NEWTON_TOL: f64 = 1e-9;
const NEWTON_ITERS: usize = 30;
/// `|U(2π)|` below this means no net drive per revolution, J.
const NO_DRIVE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    /// Tolerances of the transient simulation.
    pub transient_tol: Tolerances,
    /// Tolerances of the shooting and sampling integrations.
    pub shooting_tol: Tolerances,
    pub newton_tol: f64,
    pub transient: f64,
    pub samples: usize,
    /// Optional starting state for the transient; the default starts above the cycle.
    pub seed: Option<State>,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            transient_tol: Tolerances::default(),
            shooting_tol: Tolerances::new(1e-11, 1e-12),
            newton_tol: NEWTON_TOL,
            transient: DEFAULT_TRANSIENT,
            samples: DEFAULT_SAMPLES,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    /// Normalized time in `[0, 1]`.
    pub tau: f64,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    /// Uniform in normalized time; the last sample closes the loop.
    pub samples: Vec<CycleSample>,
    pub period: f64,
    pub direction_sign: i8,
    pub work: f64,
    pub avg_power: f64,
    /// `U(2π)` at the parameters of the cycle.
    pub u_2pi: f64,
    /// Final shooting residual (max norm).
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub alpha: f64,
    pub t_h: f64,
    pub has_cycle: bool,
    pub period: Option<f64>,
    pub work: Option<f64>,
    pub avg_power: Option<f64>,
    pub direction: Option<i8>,
}

impl LimitCycle {
    /// Integral over one period of `f(z₁, z₂)` dt from the samples.
    ///
    /// The samples are uniform over a period of a smooth periodic integrand,
    /// so the trapezoid sum is the exact integral of the periodic cubic
    /// spline through them (and converges spectrally).
    pub fn time_integral(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let n = self.samples.len() - 1;
        let sum: f64 = self.samples[..n].iter().map(|s| f(s.z1, s.z2)).sum();
        sum * self.period / n as f64
    }

    /// `∫₀^{2π} z₂ dz₁` with `z₁` increasing, whatever the running direction.
    pub fn revolution_integral(&self) -> f64 {
        f64::from(self.direction_sign) * self.time_integral(|_, z2| z2 * z2)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, p: &EngineParams) -> io::Result<()> {
        writeln!(out, "tau,q,qdot,p,v_total")?;
        for s in &self.samples {
            let (v1, v2) = volumes(s.z1, p);
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(s.tau),
                fmt_f64(s.z1),
                fmt_f64(s.z2),
                fmt_f64(pressure(s.z1, p)),
                fmt_f64(v1 + v2)
            )?;
        }
        Ok(())
    }

    pub fn summary(&self, p: &EngineParams) -> CycleSummary {
        CycleSummary {
            alpha: p.alpha,
            t_h: p.t_h,
            has_cycle: true,
            period: Some(self.period),
            work: Some(self.work),
            avg_power: Some(self.avg_power),
            direction: Some(self.direction_sign),
        }
    }
}

impl CycleSummary {
    pub fn absent(p: &EngineParams) -> Self {
        Self {
            alpha: p.alpha,
            t_h: p.t_h,
            has_cycle: false,
            period: None,
            work: None,
            avg_power: None,
            direction: None,
        }
    }
}

/// Largest `|τ|` over a fine grid, padded for what the grid may miss.
fn torque_bound(p: &EngineParams) -> f64 {
    let n = 4096;
    let m = (0..n)
        .map(|i| torque(i as f64 * TAU / n as f64, p).abs())
        .fold(0.0, f64::max);
    1.05 * m + 1e-6
}

/// Start state guaranteed to lie beyond the cycle (if any) in the running direction.
pub fn outer_seed(p: &EngineParams, direction_sign: i8) -> State {
    let w = if p.k_f > 0.0 {
        torque_bound(p) / p.k_f + 1.0
    } else {
        // without friction nothing bounds the cycle; any fast start will do
        10.0
    };
    State::new(0.0, f64::from(direction_sign) * w)
}

/// What the transient simulation found.
#[derive(Debug, Clone, PartialEq)]
pub enum Transient {
    /// Reached `z₂ = 0`: the trajectory turned back, so no cycle.
    Stopped { t: f64 },
    /// Settled onto a rotation: state at a section `z₁ ≡ 0 (mod 2π)` and the last lap time.
    Rotating { w: f64, lap_period: f64, laps: usize },
}

/// Run laps from `seed` until they settle, the trajectory stops, or the budget runs out.
pub fn transient_laps(p: &EngineParams, seed: State, direction_sign: i8, opts: &CycleOptions) -> Result<Transient> {
    let s = f64::from(direction_sign);
    let f = rhs(p);
    let mut t = 0.0;
    let mut state = seed;
    // first section crossing at the next multiple of 2π in the running direction
    let mut section = if s > 0.0 {
        (seed.z1 / TAU).floor() * TAU + TAU
    } else {
        (seed.z1 / TAU).ceil() * TAU - TAU
    };
    let mut last_cross: Option<(f64, f64)> = None;
    let mut prev_lap: Option<(f64, f64)> = None;
    let mut laps = 0;
    while t < opts.transient {
        let target = section;
        let events = [
            Event::new(Direction::Any, |_t, y: &[f64; 2]| y[1]),
            Event::new(Direction::Any, move |_t, y: &[f64; 2]| y[0] - target),
        ];
        let hit = ode::solve_until_event(&f, t, state.as_array(), opts.transient, opts.transient_tol, &events, |_| {})?;
        t = hit.t;
        state = State::from_array(hit.y);
        match hit.index {
            Some(0) => return Ok(Transient::Stopped { t }),
            Some(_) => {
                let w = state.z2;
                if let Some((t_prev, w_prev)) = last_cross {
                    let lap = t - t_prev;
                    laps += 1;
                    if let Some((lap_prev, _)) = prev_lap {
                        let settled = (w - w_prev).abs() <= 1e-8 * w.abs().max(1.0)
                            && (lap - lap_prev).abs() <= 1e-8 * lap;
                        if settled {
                            return Ok(Transient::Rotating { w, lap_period: lap, laps });
                        }
                    }
                    prev_lap = Some((lap, w));
                }
                last_cross = Some((t, w));
                section += s * TAU;
            }
            None => break,
        }
    }
    match (prev_lap, last_cross) {
        (Some((lap, _)), Some((_, w))) if laps >= 2 => {
            debug!("transient budget spent after {laps} laps; shooting from the last lap");
            Ok(Transient::Rotating { w, lap_period: lap, laps })
        }
        _ => Err(Error::CycleInconclusive {
            t_budget: opts.transient,
            laps,
        }),
    }
}

/// State and its sensitivity to `z₂(0)` at time `t` from `(0, w)`.
fn flow_with_sensitivity(p: &EngineParams, w: f64, t: f64, tol: Tolerances) -> Result<([f64; 2], [f64; 2])> {
    let field = |_t: f64, y: &[f64; 6]| {
        let tp = torque_derivative(y[0], p) / p.inertia;
        let c = p.k_f / p.inertia;
        [
            y[1],
            (-p.k_f * y[1] + torque(y[0], p)) / p.inertia,
            // Φ' = A Φ, A = [[0, 1], [τ'/I, −k_f/I]]
            y[4],
            y[5],
            tp * y[2] - c * y[4],
            tp * y[3] - c * y[5],
        ]
    };
    let y0 = [0.0, w, 1.0, 0.0, 0.0, 1.0];
    let mut solver = Dopri5::new(field, 0.0, y0, tol);
    let y = solver.advance_to(t, |_| {})?;
    // column of Φ for a perturbation of z₂(0): (Φ₁₂, Φ₂₂)
    Ok(([y[0], y[1]], [y[3], y[5]]))
}

/// Newton on `(w, T)`: `z₁(T) = ±2π`, `z₂(T) = w`, starting from `z₁(0) = 0`.
fn shoot(p: &EngineParams, direction_sign: i8, w0: f64, t0: f64, opts: &CycleOptions) -> Result<(f64, f64, f64)> {
    let s = f64::from(direction_sign);
    let (mut w, mut period) = (w0, t0);
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_ITERS {
        let (z, dz_dw) = flow_with_sensitivity(p, w, period, opts.shooting_tol)?;
        let r = [z[0] - s * TAU, z[1] - w];
        residual = r[0].abs().max(r[1].abs());
        if residual <= opts.newton_tol {
            return Ok((w, period, residual));
        }
        let fz = [z[1], (-p.k_f * z[1] + torque(z[0], p)) / p.inertia];
        let j = [[dz_dw[0], fz[0]], [dz_dw[1] - 1.0, fz[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dw = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dt = -(j[0][0] * r[1] - j[1][0] * r[0]) / det;
        // keep the period positive and the speed on the same side of zero
        let mut k = 1.0;
        while k > 1e-3 && (period + k * dt <= 0.0 || (w + k * dw) * s <= 0.0) {
            k *= 0.5;
        }
        w += k * dw;
        period += k * dt;
    }
    Err(Error::CycleNewton {
        residual,
        lap_period: t0,
    })
}

/// The rotational limit cycle, or `None` if trajectories settle at an equilibrium.
pub fn find_limit_cycle(p: &EngineParams, opts: &CycleOptions) -> Result<Option<LimitCycle>> {
    p.validate()?;
    let u_2pi = potential_per_revolution(p);
    if u_2pi.abs() <= NO_DRIVE {
        return Ok(None);
    }
    let direction_sign: i8 = if u_2pi > 0.0 { -1 } else { 1 };
    let mut outcome = match opts.seed {
        Some(seed) => Some(transient_laps(p, seed, direction_sign, opts)?),
        None => None,
    };
    // a custom seed can sit in an equilibrium's basin; only the outer seed settles existence
    if !matches!(outcome, Some(Transient::Rotating { .. })) {
        outcome = Some(transient_laps(p, outer_seed(p, direction_sign), direction_sign, opts)?);
    }
    let (w, lap) = match outcome {
        Some(Transient::Rotating { w, lap_period, .. }) => (w, lap_period),
        _ => return Ok(None),
    };
    let (w, period, residual) = shoot(p, direction_sign, w, lap, opts)?;

    let n = opts.samples.max(3);
    let times: Vec<f64> = (0..n).map(|k| period * k as f64 / (n - 1) as f64).collect();
    let states = ode::solve_at_times(rhs(p), 0.0, [0.0, w], &times, opts.shooting_tol)?;
    let samples: Vec<CycleSample> = states
        .iter()
        .enumerate()
        .map(|(k, y)| CycleSample {
            tau: k as f64 / (n - 1) as f64,
            z1: y[0],
            z2: y[1],
        })
        .collect();
    let mut cycle = LimitCycle {
        samples,
        period,
        direction_sign,
        work: 0.0,
        avg_power: 0.0,
        u_2pi,
        residual,
    };
    cycle.work = cycle_work(&cycle, p);
    cycle.avg_power = cycle.work / cycle.period;
    Ok(Some(cycle))
}

/// Relative defect of `k_f ∫₀^{2π} z₂ dz₁ = −U(2π)`.
pub fn cycle_integral_check(cycle: &LimitCycle, p: &EngineParams) -> f64 {
    (p.k_f * cycle.revolution_integral() + cycle.u_2pi).abs() / cycle.u_2pi.abs()
}

/// `W = ∮ (p − p_a) dV` along the cycle in the running direction, J.
pub fn cycle_work(cycle: &LimitCycle, p: &EngineParams) -> f64 {
    cycle.time_integral(|z1, z2| {
        let (d1, d2) = volume_derivatives(z1, p);
        (pressure(z1, p) - p.p_ambient) * (d1 + d2) * z2
    })
}

/// `∮ p_a dV` over the cycle; zero up to quadrature error.
pub fn ambient_work(cycle: &LimitCycle, p: &EngineParams) -> f64 {
    cycle.time_integral(|z1, z2| {
        let (d1, d2) = volume_derivatives(z1, p);
        p.p_ambient * (d1 + d2) * z2
    })
}

/// `k_f ∫₀^T z₂² dt`, the friction loss per period, J.
pub fn friction_loss(cycle: &LimitCycle, p: &EngineParams) -> f64 {
    p.k_f * cycle.time_integral(|_, z2| z2 * z2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    pub alpha: f64,
    pub t_h: f64,
    pub has_cycle: bool,
    pub period: Option<f64>,
    pub work: Option<f64>,
    pub avg_power: Option<f64>,
}

impl PowerRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_f64(self.alpha),
            fmt_f64(self.t_h),
            self.has_cycle,
            fmt_opt(self.period),
            fmt_opt(self.work),
            fmt_opt(self.avg_power)
        )
    }
}

pub fn average_power(p: &EngineParams, opts: &CycleOptions) -> Result<PowerRecord> {
    let cycle = find_limit_cycle(p, opts)?;
    Ok(PowerRecord {
        alpha: p.alpha,
        t_h: p.t_h,
        has_cycle: cycle.is_some(),
        period: cycle.as_ref().map(|c| c.period),
        work: cycle.as_ref().map(|c| c.work),
        avg_power: cycle.as_ref().map(|c| c.avg_power),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgePoint {
    pub t_h: f64,
    pub alpha_star: f64,
    pub power_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFailure {
    pub alpha: f64,
    pub t_h: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerMap {
    /// One record per successful grid pair, α-major.
    pub records: Vec<PowerRecord>,
    pub ridge: Vec<RidgePoint>,
    pub failures: Vec<PowerFailure>,
}

impl PowerMap {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "alpha,t_h,has_cycle,period,work,avg_power")?;
        for r in &self.records {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn write_ridge_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_h,alpha_star,power_star")?;
        for r in &self.ridge {
            writeln!(out, "{},{},{}", fmt_f64(r.t_h), fmt_f64(r.alpha_star), fmt_f64(r.power_star))?;
        }
        Ok(())
    }
}

/// Maximum-power phase at each temperature (temperatures without any cycle are skipped).
pub fn ridge(records: &[PowerRecord], t_h_grid: &[f64]) -> Vec<RidgePoint> {
    t_h_grid
        .iter()
        .filter_map(|&t| {
            records
                .iter()
                .filter(|r| r.t_h == t)
                .filter_map(|r| r.avg_power.map(|pw| (r.alpha, pw)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(alpha_star, power_star)| RidgePoint {
                    t_h: t,
                    alpha_star,
                    power_star,
                })
        })
        .collect()
}

/// Average power on `alpha_grid × t_h_grid`, evaluated in parallel; the
/// result does not depend on the number of workers.
pub fn power_map(
    alpha_grid: &[f64],
    t_h_grid: &[f64],
    base: &EngineParams,
    opts: &CycleOptions,
) -> Result<PowerMap> {
    if alpha_grid.is_empty() || t_h_grid.is_empty() {
        return Err(Error::InvalidArgument("power map grids must be non-empty".into()));
    }
    let pairs: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| t_h_grid.iter().map(move |&t| (a, t)))
        .collect();
    let results: Vec<std::result::Result<PowerRecord, PowerFailure>> = pairs
        .par_iter()
        .map(|&(alpha, t_h)| {
            let p = base.with_alpha(alpha).with_t_h(t_h);
            average_power(&p, opts).map_err(|e| PowerFailure {
                alpha,
                t_h,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut map = PowerMap::default();
    for r in results {
        match r {
            Ok(rec) => map.records.push(rec),
            Err(f) => {
                log::warn!("power map point failed at α={}, T_h={}: {}", f.alpha, f.t_h, f.reason);
                map.failures.push(f);
            }
        }
    }
    map.ridge = ridge(&map.records, t_h_grid);
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(alpha: f64, t_h: f64) -> EngineParams {
        EngineParams::default().with_alpha(alpha).with_t_h(t_h)
    }

    #[test]
    fn no_cycle_below_homoclinic_temperature() {
        assert!(find_limit_cycle(&at(2.2, 330.0), &CycleOptions::default()).unwrap().is_none());
    }

    #[test]
    fn no_cycle_without_phase_shift() {
        for t in [320.0, 400.0, 500.0] {
            assert!(find_limit_cycle(&at(0.0, t), &CycleOptions::default()).unwrap().is_none());
        }
    }

    #[test]
    fn cycle_at_reference_point_runs_backwards() {
        let p = at(2.2, 360.0);
        let c = find_limit_cycle(&p, &CycleOptions::default()).unwrap().unwrap();
        assert_eq!(c.direction_sign, -1);
        assert!(c.samples.iter().all(|s| s.z2 < 0.0));
        assert_eq!(c.samples.len(), DEFAULT_SAMPLES);
        let (first, last) = (c.samples[0], c.samples[DEFAULT_SAMPLES - 1]);
        assert!((last.z1 - first.z1 + TAU).abs() < 1e-8);
        assert!((last.z2 - first.z2).abs() < 1e-8);
        assert!(c.work > 0.0);
        assert!((c.work - c.u_2pi.abs()).abs() < 1e-6 * c.work);
        let mean_speed = c.samples[..DEFAULT_SAMPLES - 1].iter().map(|s| s.z2.abs()).sum::<f64>()
            / (DEFAULT_SAMPLES - 1) as f64;
        assert!((c.period * mean_speed / TAU - 1.0).abs() < 0.05);
    }

    #[test]
    fn work_identities() {
        let p = at(1.2, 420.0);
        let c = find_limit_cycle(&p, &CycleOptions::default()).unwrap().unwrap();
        assert!(ambient_work(&c, &p).abs() <= 1e-9 * c.work);
        assert!((c.work - friction_loss(&c, &p)).abs() <= 1e-3 * c.work);
        assert!(cycle_integral_check(&c, &p) <= 1e-3);
        // closed p–V loop
        let (a, b) = (c.samples[0], *c.samples.last().unwrap());
        assert!((pressure(a.z1, &p) - pressure(b.z1, &p)).abs() < 1e-3);
    }

    #[test]
    fn integral_defect_shrinks_with_tighter_shooting() {
        let p = at(2.2, 360.0);
        let loose = CycleOptions {
            newton_tol: 1e-4,
            shooting_tol: Tolerances::new(1e-6, 1e-8),
            ..CycleOptions::default()
        };
        let tight = CycleOptions {
            newton_tol: 1e-10,
            shooting_tol: Tolerances::new(1e-12, 1e-13),
            ..CycleOptions::default()
        };
        let a = find_limit_cycle(&p, &loose).unwrap().unwrap();
        let b = find_limit_cycle(&p, &tight).unwrap().unwrap();
        assert!(cycle_integral_check(&b, &p) <= cycle_integral_check(&a, &p));
    }

    #[test]
    fn flipped_parameters_give_mirrored_cycle() {
        let p = at(2.2, 360.0);
        let a = find_limit_cycle(&p, &CycleOptions::default()).unwrap().unwrap();
        let b = find_limit_cycle(&p.flipped(), &CycleOptions::default()).unwrap().unwrap();
        assert_eq!(b.direction_sign, 1);
        assert!((a.period - b.period).abs() < 1e-8 * a.period);
        assert!((a.avg_power - b.avg_power).abs() <= 1e-6 * a.avg_power);
        assert!((cycle_integral_check(&a, &p) - cycle_integral_check(&b, &p.flipped())).abs() < 1e-6);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x.z1 + y.z1).abs() < 1e-6 && (x.z2 + y.z2).abs() < 1e-6);
        }
    }

    #[test]
    fn ridge_picks_the_maximum() {
        let recs = [
            PowerRecord { alpha: 1.0, t_h: 400.0, has_cycle: true, period: Some(1.0), work: Some(2.0), avg_power: Some(2.0) },
            PowerRecord { alpha: 1.2, t_h: 400.0, has_cycle: true, period: Some(1.0), work: Some(3.0), avg_power: Some(3.0) },
            PowerRecord { alpha: 1.4, t_h: 400.0, has_cycle: false, period: None, work: None, avg_power: None },
            PowerRecord { alpha: 1.0, t_h: 300.0, has_cycle: false, period: None, work: None, avg_power: None },
        ];
        let r = ridge(&recs, &[300.0, 400.0]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].alpha_star, 1.2);
        assert_eq!(recs[2].csv_row(), "1.4,400.0,false,,,");
    }
}
