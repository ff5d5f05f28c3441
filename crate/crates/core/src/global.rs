//! Homoclinic and heteroclinic bifurcations: ±1 test functions from shooting
//! along a saddle's unstable manifold, bisection in `T_h`, and continuation in α.

use std::f64::consts::{PI, TAU};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_until_event, Direction, EventSpec, State};
use crate::equilibria::{find_equilibria, unstable_eigenvector, Census, Equilibrium, EquilibriumKind};
use crate::error::{Error, Result};
use crate::ode::Tolerances;
use crate::params::EngineParams;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_T_MAX: f64 = 500.0;
/// Bisection stops once the bracket is this narrow, K.
pub const BISECTION_TOL: f64 = 0.01;
pub const MAX_BISECTIONS: usize = 45;
/// Temperature window of the continuation, K.
pub const SCAN_RANGE: (f64, f64) = (300.0, 500.0);
/// Half-width of the warm-start bracket around the neighbour's value, K.
pub const WARM_HALF_WIDTH: f64 = 20.0;
/// Spacing of the cold scan for a sign change, K.
pub const COLD_SCAN_STEP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Homoclinic,
    Heteroclinic,
    Pitchfork,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Homoclinic => "homoclinic",
            CurveKind::Heteroclinic => "heteroclinic",
            CurveKind::Pitchfork => "pitchfork",
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homoclinic" => Ok(CurveKind::Homoclinic),
            "heteroclinic" => Ok(CurveKind::Heteroclinic),
            "pitchfork" => Ok(CurveKind::Pitchfork),
            other => Err(Error::InvalidArgument(format!("unknown curve kind `{other}`"))),
        }
    }
}

/// The connection a shooting run is looking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Homoclinic,
    Heteroclinic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub epsilon: f64,
    pub t_max: f64,
    pub tol: Tolerances,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            t_max: DEFAULT_T_MAX,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingSetup {
    pub saddle: Equilibrium,
    pub second_saddle: Option<Equilibrium>,
    /// Unit unstable eigenvector with positive `z₂` component.
    pub v: [f64; 2],
    pub epsilon: f64,
    /// The offset is `epsilon · direction_sign · v`.
    pub direction_sign: f64,
    /// Angle of the second saddle, unwrapped from the first in the direction of motion.
    pub q_target: Option<f64>,
}

impl ShootingSetup {
    pub fn initial_state(&self) -> State {
        let k = self.epsilon * self.direction_sign;
        State::new(self.saddle.q_star + k * self.v[0], k * self.v[1])
    }
}

fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn census_string(eqs: &[Equilibrium]) -> String {
    Census::of(eqs).to_string()
}

/// Choose the saddle(s) and the offset direction for a shooting run.
pub fn shooting_setup(p: &EngineParams, target: Target, epsilon: f64) -> Result<ShootingSetup> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let eqs = find_equilibria(p)?;
    let saddles: Vec<Equilibrium> = eqs
        .iter()
        .copied()
        .filter(|e| e.kind == EquilibriumKind::Saddle)
        .collect();
    let lower_half = p.alpha < PI;
    match target {
        Target::Homoclinic => {
            let saddle = saddles
                .iter()
                .copied()
                .min_by(|a, b| {
                    cyclic_distance(a.q_star, PI).total_cmp(&cyclic_distance(b.q_star, PI))
                })
                .ok_or_else(|| Error::Setup {
                    reason: "no saddle".into(),
                    census: census_string(&eqs),
                })?;
            Ok(ShootingSetup {
                saddle,
                second_saddle: None,
                v: unstable_eigenvector(&saddle).expect("saddle has an unstable direction"),
                epsilon,
                direction_sign: if lower_half { -1.0 } else { 1.0 },
                q_target: None,
            })
        }
        Target::Heteroclinic => {
            if saddles.len() != 2 {
                return Err(Error::Setup {
                    reason: format!("need two saddles, found {}", saddles.len()),
                    census: census_string(&eqs),
                });
            }
            let sign = if lower_half { 1.0 } else { -1.0 };
            // forward gap from saddle a to saddle b in the direction of motion
            let gap = |a: &Equilibrium, b: &Equilibrium| (sign * (b.q_star - a.q_star)).rem_euclid(TAU);
            let (origin, other) = if gap(&saddles[0], &saddles[1]) <= gap(&saddles[1], &saddles[0]) {
                (saddles[0], saddles[1])
            } else {
                (saddles[1], saddles[0])
            };
            Ok(ShootingSetup {
                saddle: origin,
                second_saddle: Some(other),
                v: unstable_eigenvector(&origin).expect("saddle has an unstable direction"),
                epsilon,
                direction_sign: sign,
                q_target: Some(origin.q_star + sign * gap(&origin, &other)),
            })
        }
    }
}

fn run_test_function(setup: &ShootingSetup, p: &EngineParams, opts: &ShootingOptions) -> Result<i8> {
    let s0 = setup.initial_state();
    let second: EventSpec<'_> = match setup.q_target {
        None => {
            let z10 = s0.z1;
            EventSpec::new("revolution", Direction::Any, move |_t, s: State| {
                (s.z1 - z10).abs() - TAU
            })
        }
        Some(q_target) => EventSpec::new("second_saddle", Direction::Any, move |_t, s: State| {
            s.z1 - q_target
        }),
    };
    let events = [EventSpec::new("axis", Direction::Any, |_t, s: State| s.z2), second];
    let out = integrate_until_event(s0, p, &events, opts.t_max, opts.tol)?;
    match out.event.as_deref() {
        Some("axis") => Ok(1),
        Some(_) => Ok(-1),
        None => Err(Error::Indeterminate {
            t_h: p.t_h,
            t_max: opts.t_max,
        }),
    }
}

/// `+1` if the manifold trajectory first reaches `q̇ = 0`, `−1` if it first
/// completes a revolution past the saddle.
pub fn psi1(t_h: f64, alpha: f64, base: &EngineParams, opts: &ShootingOptions) -> Result<i8> {
    let p = base.with_alpha(alpha).with_t_h(t_h);
    let setup = shooting_setup(&p, Target::Homoclinic, opts.epsilon)?;
    run_test_function(&setup, &p, opts)
}

/// `+1` if the trajectory from the origin saddle first reaches `q̇ = 0`,
/// `−1` if it first reaches the second saddle's angle.
pub fn psi2(t_h: f64, alpha: f64, base: &EngineParams, opts: &ShootingOptions) -> Result<i8> {
    let p = base.with_alpha(alpha).with_t_h(t_h);
    let setup = shooting_setup(&p, Target::Heteroclinic, opts.epsilon)?;
    run_test_function(&setup, &p, opts)
}

pub fn test_function(
    target: Target,
    t_h: f64,
    alpha: f64,
    base: &EngineParams,
    opts: &ShootingOptions,
) -> Result<i8> {
    match target {
        Target::Homoclinic => psi1(t_h, alpha, base, opts),
        Target::Heteroclinic => psi2(t_h, alpha, base, opts),
    }
}

fn bisect_with(
    target: Target,
    alpha: f64,
    (mut lo, mut hi): (f64, f64),
    (s_lo, s_hi): (i8, i8),
    base: &EngineParams,
    opts: &ShootingOptions,
) -> Result<f64> {
    if s_lo == s_hi {
        return Err(Error::Bracket { lo, hi, sign: s_lo });
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if test_function(target, mid, alpha, base, opts)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisect the test function on `bracket` to a width of 0.01 K.
pub fn find_bifurcation_temperature(
    alpha: f64,
    target: Target,
    bracket: (f64, f64),
    base: &EngineParams,
    opts: &ShootingOptions,
) -> Result<f64> {
    let (lo, hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let s_lo = test_function(target, lo, alpha, base, opts)?;
    let s_hi = test_function(target, hi, alpha, base, opts)?;
    bisect_with(target, alpha, (lo, hi), (s_lo, s_hi), base, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub kind: CurveKind,
    /// `(α, T_h)` sorted by α.
    pub points: Vec<(f64, f64)>,
}

impl BifurcationCurve {
    /// Add the image of every point under `α → 2π − α`.
    pub fn with_mirror(&self) -> Self {
        let mut points = self.points.clone();
        points.extend(
            self.points
                .iter()
                .filter(|(a, _)| *a > 0.0 && *a < TAU)
                .map(|&(a, t)| (TAU - a, t)),
        );
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|a, b| a.0 == b.0);
        Self {
            kind: self.kind,
            points,
        }
    }

    pub fn t_h_at(&self, alpha: f64) -> Option<f64> {
        self.points.iter().find(|(a, _)| (a - alpha).abs() < 1e-12).map(|&(_, t)| t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFailure {
    pub kind: CurveKind,
    pub alpha: f64,
    pub reason: String,
    /// The curve does not cross the scan window here (no sign change, or the
    /// saddles it needs are absent): a result rather than a numerical failure.
    pub omitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub curve: BifurcationCurve,
    pub failures: Vec<CurveFailure>,
}

impl Continuation {
    /// Share of grid points that did not fail numerically (omissions do not count against it).
    pub fn success_fraction(&self) -> f64 {
        let n = self.curve.points.len() + self.failures.iter().filter(|f| !f.omitted).count();
        if n == 0 {
            1.0
        } else {
            self.curve.points.len() as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationMode {
    /// Sequential in α, each bracket seeded from the previous value.
    WarmStart,
    /// Every α scanned independently (parallel).
    Independent,
}

/// First sign change of the test function over the full scan range, bisected.
fn cold_solve(target: Target, alpha: f64, base: &EngineParams, opts: &ShootingOptions) -> Result<f64> {
    let (lo, hi) = SCAN_RANGE;
    let n = ((hi - lo) / COLD_SCAN_STEP).round() as usize;
    let mut prev: Option<(f64, i8)> = None;
    let mut last_err = None;
    for k in 0..=n {
        let t = (lo + k as f64 * COLD_SCAN_STEP).min(hi);
        match test_function(target, t, alpha, base, opts) {
            Ok(s) => {
                if let Some((t0, s0)) = prev {
                    if s0 != s {
                        return bisect_with(target, alpha, (t0, t), (s0, s), base, opts);
                    }
                }
                prev = Some((t, s));
            }
            Err(e) => {
                // setup can fail on part of the range (saddle pair absent)
                debug!("cold scan α={alpha} T_h={t}: {e}");
                prev = None;
                last_err = Some(e);
            }
        }
    }
    match (prev, last_err) {
        (Some((_, s)), _) => Err(Error::Bracket { lo, hi, sign: s }),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Bracket { lo, hi, sign: 0 }),
    }
}

fn warm_solve(
    target: Target,
    alpha: f64,
    guess: f64,
    base: &EngineParams,
    opts: &ShootingOptions,
) -> Result<f64> {
    let lo = (guess - WARM_HALF_WIDTH).max(SCAN_RANGE.0);
    let hi = (guess + WARM_HALF_WIDTH).min(SCAN_RANGE.1);
    let s_lo = test_function(target, lo, alpha, base, opts)?;
    let s_hi = test_function(target, hi, alpha, base, opts)?;
    bisect_with(target, alpha, (lo, hi), (s_lo, s_hi), base, opts)
}

/// Trace a homoclinic or heteroclinic curve over `alpha_grid ⊂ [0, π)`.
/// Values of α without a sign change in the scan range are omitted and
/// recorded as failures.
pub fn continuation(
    target: Target,
    alpha_grid: &[f64],
    base: &EngineParams,
    opts: &ShootingOptions,
    mode: ContinuationMode,
) -> Result<Continuation> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("empty α grid".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(**a >= 0.0 && **a < PI)) {
        return Err(Error::InvalidArgument(format!(
            "continuation grid must lie in [0, π), got {a}"
        )));
    }
    let kind = match target {
        Target::Homoclinic => CurveKind::Homoclinic,
        Target::Heteroclinic => CurveKind::Heteroclinic,
    };
    let mut sorted = alpha_grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let results: Vec<(f64, Result<f64>)> = match mode {
        ContinuationMode::Independent => sorted
            .par_iter()
            .map(|&a| (a, cold_solve(target, a, base, opts)))
            .collect(),
        ContinuationMode::WarmStart => {
            let mut out = Vec::with_capacity(sorted.len());
            let mut guess: Option<f64> = None;
            for &a in &sorted {
                let r = match guess {
                    Some(g) => warm_solve(target, a, g, base, opts).or_else(|e| {
                        debug!("warm start failed at α={a}: {e}; widening to the full range");
                        cold_solve(target, a, base, opts)
                    }),
                    None => cold_solve(target, a, base, opts),
                };
                guess = r.as_ref().ok().copied().or(guess);
                out.push((a, r));
            }
            out
        }
    };

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (alpha, r) in results {
        match r {
            Ok(t) => points.push((alpha, t)),
            Err(e) => {
                warn!("{} point omitted at α={alpha}: {e}", kind.as_str());
                let omitted = matches!(e, Error::Bracket { .. } | Error::Setup { .. });
                failures.push(CurveFailure {
                    kind,
                    alpha,
                    reason: e.to_string(),
                    omitted,
                });
            }
        }
    }
    Ok(Continuation {
        curve: BifurcationCurve { kind, points },
        failures,
    })
}
