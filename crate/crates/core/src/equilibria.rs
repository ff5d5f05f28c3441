//! Equilibria `(q*, 0)` with `τ(q*) = 0`, their linear stability, and the
//! locus in the `(α, T_h)` plane where the number of equilibria changes.
//!
//! Roots are searched on the two torque factors separately (`τ = −g·(p − p_a)`),
//! so that a root of one factor passing close to a root of the other is not
//! lost inside a grid cell. Each cell is also checked for an interior
//! extremum of the factor, which catches root pairs about to merge.

use std::f64::consts::TAU;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    geometric_factor, geometric_factor_derivative, pressure_derivative, pressure_excess, torque,
    torque_derivative,
};
use crate::error::{Error, Result};
use crate::params::{wrap_angle, EngineParams};
use crate::roots::brent;

pub const DEFAULT_GRID: usize = 2048;
pub const MAX_GRID: usize = 1 << 16;
/// Root refinement tolerance on the angle, rad.
pub const ROOT_XTOL: f64 = 1e-13;
/// `|τ'|` at or below this is non-hyperbolic, N·m/rad.
pub const CLASSIFY_TOL: f64 = 1e-7;
/// Residual target for the `{τ = 0, τ' = 0}` refinement.
pub const LOCUS_RESIDUAL: f64 = 1e-9;
const LOCUS_NEWTON_ITERS: usize = 50;
/// Roots closer than this are the same root.
const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Saddle,
    StableFocus,
    StableNode,
    NonHyperbolic,
}

impl EquilibriumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumKind::Saddle => "saddle",
            EquilibriumKind::StableFocus => "stable_focus",
            EquilibriumKind::StableNode => "stable_node",
            EquilibriumKind::NonHyperbolic => "non_hyperbolic",
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, EquilibriumKind::StableFocus | EquilibriumKind::StableNode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    /// Angle in `[0, 2π)`.
    pub q_star: f64,
    pub tau_prime: f64,
    /// Eigenvalues of the Jacobian, larger real part first.
    pub eigenvalues: [Complex64; 2],
    pub kind: EquilibriumKind,
}

/// Jacobian at `(q*, 0)` is `[[0, 1], [τ'/I, −k_f/I]]`; characteristic
/// polynomial `I s² + k_f s − τ'`.
pub fn classify_from_derivative(tau_prime: f64, inertia: f64, k_f: f64) -> (EquilibriumKind, [Complex64; 2]) {
    let disc = k_f * k_f + 4.0 * inertia * tau_prime;
    let re = -k_f / (2.0 * inertia);
    let eig = if disc >= 0.0 {
        let w = disc.sqrt() / (2.0 * inertia);
        [Complex64::new(re + w, 0.0), Complex64::new(re - w, 0.0)]
    } else {
        let w = (-disc).sqrt() / (2.0 * inertia);
        [Complex64::new(re, w), Complex64::new(re, -w)]
    };
    let kind = if tau_prime.abs() <= CLASSIFY_TOL {
        EquilibriumKind::NonHyperbolic
    } else if tau_prime > 0.0 {
        EquilibriumKind::Saddle
    } else if disc < 0.0 {
        EquilibriumKind::StableFocus
    } else {
        EquilibriumKind::StableNode
    };
    (kind, eig)
}

pub fn classify_equilibrium(q_star: f64, p: &EngineParams) -> Equilibrium {
    let tau_prime = torque_derivative(q_star, p);
    let (kind, eigenvalues) = classify_from_derivative(tau_prime, p.inertia, p.k_f);
    Equilibrium {
        q_star: wrap_angle(q_star),
        tau_prime,
        eigenvalues,
        kind,
    }
}

/// Unstable direction of a saddle: unit eigenvector with positive `z₂` component.
pub fn unstable_eigenvector(eq: &Equilibrium) -> Option<[f64; 2]> {
    if eq.kind != EquilibriumKind::Saddle {
        return None;
    }
    let lambda = eq.eigenvalues[0].re;
    // (1, λ) spans the eigenspace of λ for the companion-form Jacobian
    let norm = (1.0 + lambda * lambda).sqrt();
    Some([1.0 / norm, lambda / norm])
}

fn cell_roots(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    out: &mut Vec<f64>,
) {
    if fa == 0.0 {
        out.push(a);
        return;
    }
    if fb == 0.0 {
        // picked up as the left end of the next cell
        return;
    }
    if fa * fb < 0.0 {
        out.push(brent(f, a, b, ROOT_XTOL, 200));
        return;
    }
    let (da, db) = (df(a), df(b));
    if da * db < 0.0 {
        let m = brent(df, a, b, ROOT_XTOL, 200);
        let fm = f(m);
        if fm == 0.0 {
            out.push(m);
        } else if fm * fa < 0.0 {
            out.push(brent(f, a, m, ROOT_XTOL, 200));
            out.push(brent(f, m, b, ROOT_XTOL, 200));
        }
    }
}

fn periodic_roots(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, grid: usize) -> Vec<f64> {
    let h = TAU / grid as f64;
    let values: Vec<f64> = (0..=grid)
        .map(|i| if i == grid { f(0.0) } else { f(i as f64 * h) })
        .collect();
    let mut out = Vec::new();
    for i in 0..grid {
        let a = i as f64 * h;
        let b = if i + 1 == grid { TAU } else { (i + 1) as f64 * h };
        cell_roots(f, df, a, b, values[i], values[i + 1], &mut out);
    }
    out
}

fn cyclic_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(TAU - d)
}

/// Sorted roots of `τ` on `[0, 2π)` from a scan with `grid` cells per factor.
pub fn torque_roots(p: &EngineParams, grid: usize) -> Vec<f64> {
    let g = |q: f64| geometric_factor(q, p);
    let dg = |q: f64| geometric_factor_derivative(q, p);
    let h = |q: f64| pressure_excess(q, p);
    let dh = |q: f64| pressure_derivative(q, p);
    let mut roots = periodic_roots(&g, &dg, grid);
    roots.extend(periodic_roots(&h, &dh, grid));
    let mut roots: Vec<f64> = roots.into_iter().map(wrap_angle).collect();
    roots.sort_by(|a, b| a.total_cmp(b));
    let mut merged: Vec<f64> = Vec::with_capacity(roots.len());
    for q in roots {
        match merged.last_mut() {
            Some(last) if cyclic_gap(*last, q) <= MERGE_TOL => {
                if torque(q, p).abs() < torque(*last, p).abs() {
                    *last = q;
                }
            }
            _ => merged.push(q),
        }
    }
    if merged.len() > 1 && cyclic_gap(merged[0], *merged.last().unwrap()) <= MERGE_TOL {
        merged.pop();
    }
    merged
}

/// Hyperbolic roots of a periodic function alternate in slope sign.
fn slopes_alternate(eqs: &[Equilibrium]) -> bool {
    let signs: Vec<f64> = eqs
        .iter()
        .filter(|e| e.kind != EquilibriumKind::NonHyperbolic)
        .map(|e| e.tau_prime.signum())
        .collect();
    if signs.len() < 2 {
        return true;
    }
    (0..signs.len()).all(|i| signs[i] != signs[(i + 1) % signs.len()])
}

pub fn find_equilibria_with_grid(p: &EngineParams, grid: usize) -> Result<Vec<Equilibrium>> {
    let mut grid = grid.max(16);
    loop {
        let eqs: Vec<Equilibrium> = torque_roots(p, grid)
            .into_iter()
            .map(|q| classify_equilibrium(q, p))
            .collect();
        if slopes_alternate(&eqs) {
            return Ok(eqs);
        }
        if grid >= MAX_GRID {
            return Err(Error::RootScan { grid });
        }
        grid *= 2;
    }
}

/// All equilibria, sorted by angle.
pub fn find_equilibria(p: &EngineParams) -> Result<Vec<Equilibrium>> {
    find_equilibria_with_grid(p, DEFAULT_GRID)
}

pub fn equilibrium_count(p: &EngineParams) -> Result<usize> {
    Ok(find_equilibria(p)?.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub saddle: usize,
    pub stable_focus: usize,
    pub stable_node: usize,
    pub non_hyperbolic: usize,
}

impl Census {
    pub fn of(eqs: &[Equilibrium]) -> Self {
        let mut c = Census::default();
        for e in eqs {
            match e.kind {
                EquilibriumKind::Saddle => c.saddle += 1,
                EquilibriumKind::StableFocus => c.stable_focus += 1,
                EquilibriumKind::StableNode => c.stable_node += 1,
                EquilibriumKind::NonHyperbolic => c.non_hyperbolic += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.saddle + self.stable_focus + self.stable_node + self.non_hyperbolic
    }
}

impl std::fmt::Display for Census {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} saddle, {} stable focus, {} stable node, {} non-hyperbolic",
            self.saddle, self.stable_focus, self.stable_node, self.non_hyperbolic
        )
    }
}

/// Whether a change in the equilibrium count happens at a triple zero of
/// the torque (the merging pair collides with a root that persists) or at
/// an isolated double zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Pitchfork,
    Fold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchforkPoint {
    pub alpha: f64,
    pub t_h: f64,
    pub q_star: f64,
    pub kind: TransitionKind,
}

/// Which parameter a count change was located along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Temperature,
}

fn with_axis(base: &EngineParams, axis: SweepAxis, s: f64) -> EngineParams {
    match axis {
        // the bisection may step just past 2π; keep α in range without a jump
        SweepAxis::Alpha => EngineParams { alpha: s, ..*base },
        SweepAxis::Temperature => base.with_t_h(s),
    }
}

/// A located change of the equilibrium count between two nearby parameter values.
#[derive(Debug, Clone)]
pub struct CountChange {
    pub axis: SweepAxis,
    /// Parameter values bracketing the change (width ≲ 1e-11 relative).
    pub lo: f64,
    pub hi: f64,
    pub count_lo: usize,
    pub count_hi: usize,
    /// Estimated location of the double root.
    pub q_merge: f64,
    pub kind: TransitionKind,
}

fn count_at(base: &EngineParams, axis: SweepAxis, s: f64) -> Result<Vec<Equilibrium>> {
    find_equilibria(&with_axis(base, axis, s))
}

/// Bisect on the equilibrium count between `lo` and `hi`.
pub fn locate_count_change(
    base: &EngineParams,
    axis: SweepAxis,
    lo: f64,
    hi: f64,
) -> Result<CountChange> {
    let (mut lo, mut hi) = (lo, hi);
    let mut eq_lo = count_at(base, axis, lo)?;
    let mut eq_hi = count_at(base, axis, hi)?;
    let n_lo = eq_lo.len();
    if n_lo == eq_hi.len() {
        return Err(Error::InvalidArgument(format!(
            "no count change between {lo} and {hi}"
        )));
    }
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-11 * lo.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let eq_mid = count_at(base, axis, mid)?;
        if eq_mid.len() == n_lo {
            lo = mid;
            eq_lo = eq_mid;
        } else {
            hi = mid;
            eq_hi = eq_mid;
        }
    }
    let more = if eq_lo.len() > eq_hi.len() { &eq_lo } else { &eq_hi };
    let (q_merge, kind) = merge_site(more);
    Ok(CountChange {
        axis,
        lo,
        hi,
        count_lo: eq_lo.len(),
        count_hi: eq_hi.len(),
        q_merge,
        kind,
    })
}

/// Closest adjacent pair is the one about to merge; a third root right next
/// to it makes the collision a triple zero.
fn merge_site(eqs: &[Equilibrium]) -> (f64, TransitionKind) {
    let n = eqs.len();
    if n < 2 {
        return (eqs.first().map_or(0.0, |e| e.q_star), TransitionKind::Fold);
    }
    let qs: Vec<f64> = eqs.iter().map(|e| e.q_star).collect();
    let (i, gap) = (0..n)
        .map(|i| (i, cyclic_gap(qs[i], qs[(i + 1) % n])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let j = (i + 1) % n;
    let prev = qs[(i + n - 1) % n];
    let next = qs[(j + 1) % n];
    let cluster = (10.0 * gap).max(1e-6);
    if n >= 3 && cyclic_gap(prev, qs[i]) <= cluster {
        return (qs[i], TransitionKind::Pitchfork);
    }
    if n >= 3 && cyclic_gap(qs[j], next) <= cluster {
        return (qs[j], TransitionKind::Pitchfork);
    }
    let mid = qs[i] + 0.5 * {
        let d = qs[j] - qs[i];
        if d < 0.0 {
            d + TAU
        } else {
            d
        }
    };
    (wrap_angle(mid), TransitionKind::Fold)
}

/// Refine `(q, s)` so that `τ = τ' = 0`, with `s` the swept parameter.
/// Levenberg–Marquardt damping keeps the iteration usable when the
/// Jacobian degenerates at a triple zero.
pub fn refine_double_root(
    base: &EngineParams,
    axis: SweepAxis,
    q0: f64,
    s0: f64,
) -> Result<(f64, f64)> {
    let residual = |q: f64, s: f64| {
        let p = with_axis(base, axis, s);
        [torque(q, &p), torque_derivative(q, &p)]
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let (mut q, mut s) = (q0, s0);
    let mut r = residual(q, s);
    let mut mu = 1e-6;
    for _ in 0..LOCUS_NEWTON_ITERS {
        if norm(r) <= LOCUS_RESIDUAL {
            return Ok((wrap_angle(q), s));
        }
        let hq = 1e-6;
        let hs = 1e-7 * s.abs().max(1.0);
        let rq_p = residual(q + hq, s);
        let rq_m = residual(q - hq, s);
        let rs_p = residual(q, s + hs);
        let rs_m = residual(q, s - hs);
        let j = [
            [(rq_p[0] - rq_m[0]) / (2.0 * hq), (rs_p[0] - rs_m[0]) / (2.0 * hs)],
            [(rq_p[1] - rq_m[1]) / (2.0 * hq), (rs_p[1] - rs_m[1]) / (2.0 * hs)],
        ];
        // normal equations (JᵀJ + μ·diag) δ = −Jᵀr
        let jtj = [
            [j[0][0] * j[0][0] + j[1][0] * j[1][0], j[0][0] * j[0][1] + j[1][0] * j[1][1]],
            [j[0][1] * j[0][0] + j[1][1] * j[1][0], j[0][1] * j[0][1] + j[1][1] * j[1][1]],
        ];
        let jtr = [
            j[0][0] * r[0] + j[1][0] * r[1],
            j[0][1] * r[0] + j[1][1] * r[1],
        ];
        let mut improved = false;
        for _ in 0..30 {
            let a = [
                [jtj[0][0] * (1.0 + mu) + 1e-300, jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + mu) + 1e-300],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det == 0.0 || !det.is_finite() {
                mu *= 10.0;
                continue;
            }
            let dq = -(a[1][1] * jtr[0] - a[0][1] * jtr[1]) / det;
            let ds = -(a[0][0] * jtr[1] - a[1][0] * jtr[0]) / det;
            let r_new = residual(q + dq, s + ds);
            if norm(r_new) < norm(r) {
                q += dq;
                s += ds;
                r = r_new;
                mu = (mu * 0.1).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if norm(r) <= LOCUS_RESIDUAL {
        Ok((wrap_angle(q), s))
    } else {
        Err(Error::InvalidArgument(format!(
            "double-root refinement stalled at residual {:.3e}",
            norm(r)
        )))
    }
}

/// Equilibria along an α sweep at fixed `T_h` (one entry per grid value).
pub fn local_diagram(base: &EngineParams, alpha_grid: &[f64]) -> Result<Vec<(f64, Vec<Equilibrium>)>> {
    alpha_grid
        .par_iter()
        .map(|&a| Ok((a, find_equilibria(&base.with_alpha(a))?)))
        .collect()
}

/// Count changes between consecutive α grid values at fixed `T_h`.
pub fn alpha_count_changes(base: &EngineParams, alpha_grid: &[f64]) -> Result<Vec<CountChange>> {
    let counts: Vec<usize> = alpha_grid
        .par_iter()
        .map(|&a| equilibrium_count(&EngineParams { alpha: a, ..*base }))
        .collect::<Result<_>>()?;
    let pairs: Vec<usize> = (1..alpha_grid.len())
        .filter(|&i| counts[i] != counts[i - 1])
        .collect();
    pairs
        .par_iter()
        .map(|&i| locate_count_change(base, SweepAxis::Alpha, alpha_grid[i - 1], alpha_grid[i]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusFailure {
    pub alpha: f64,
    pub t_h: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PitchforkLocus {
    pub points: Vec<PitchforkPoint>,
    pub dropped: Vec<LocusFailure>,
}

/// Trace the equilibrium-count changes over the `(α, T_h)` rectangle.
///
/// The count is sampled on `alpha_grid × T_h samples` (step `t_h_step`);
/// every change between neighbouring samples, in either direction, is
/// bisected and then refined on `{τ = 0, τ' = 0}`.
pub fn pitchfork_locus(
    base: &EngineParams,
    alpha_grid: &[f64],
    t_h_range: (f64, f64),
    t_h_step: f64,
) -> Result<PitchforkLocus> {
    let (t_lo, t_hi) = t_h_range;
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("empty α grid".into()));
    }
    if !(t_lo < t_hi) || t_lo < 300.0 - 1e-9 || t_hi > 500.0 + 1e-9 || !(t_h_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "T_h range must satisfy 300 ≤ lo < hi ≤ 500, got ({t_lo}, {t_hi})"
        )));
    }
    let n_t = ((t_hi - t_lo) / t_h_step).round() as usize + 1;
    let temps: Vec<f64> = (0..n_t)
        .map(|j| (t_lo + j as f64 * t_h_step).min(t_hi))
        .collect();
    let counts: Vec<Vec<usize>> = alpha_grid
        .par_iter()
        .map(|&a| {
            temps
                .iter()
                .map(|&t| equilibrium_count(&base.with_alpha(a).with_t_h(t)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    struct Job {
        axis: SweepAxis,
        fixed: EngineParams,
        lo: f64,
        hi: f64,
    }
    let mut jobs = Vec::new();
    for (i, &a) in alpha_grid.iter().enumerate() {
        for j in 1..n_t {
            if counts[i][j] != counts[i][j - 1] {
                jobs.push(Job {
                    axis: SweepAxis::Temperature,
                    fixed: base.with_alpha(a),
                    lo: temps[j - 1],
                    hi: temps[j],
                });
            }
        }
    }
    for (j, &t) in temps.iter().enumerate() {
        for i in 1..alpha_grid.len() {
            if counts[i][j] != counts[i - 1][j] {
                jobs.push(Job {
                    axis: SweepAxis::Alpha,
                    fixed: base.with_t_h(t),
                    lo: alpha_grid[i - 1],
                    hi: alpha_grid[i],
                });
            }
        }
    }

    let results: Vec<std::result::Result<PitchforkPoint, LocusFailure>> = jobs
        .par_iter()
        .map(|job| {
            let describe = |s: f64| match job.axis {
                SweepAxis::Alpha => (s, job.fixed.t_h),
                SweepAxis::Temperature => (job.fixed.alpha, s),
            };
            let change = locate_count_change(&job.fixed, job.axis, job.lo, job.hi).map_err(|e| {
                let (alpha, t_h) = describe(job.lo);
                LocusFailure {
                    alpha,
                    t_h,
                    reason: e.to_string(),
                }
            })?;
            let s_mid = 0.5 * (change.lo + change.hi);
            match refine_double_root(&job.fixed, job.axis, change.q_merge, s_mid) {
                Ok((q_star, s)) => {
                    let (alpha, t_h) = describe(s);
                    Ok(PitchforkPoint {
                        alpha,
                        t_h,
                        q_star,
                        kind: change.kind,
                    })
                }
                Err(e) => {
                    let (alpha, t_h) = describe(s_mid);
                    Err(LocusFailure {
                        alpha,
                        t_h,
                        reason: e.to_string(),
                    })
                }
            }
        })
        .collect();

    let mut locus = PitchforkLocus::default();
    for r in results {
        match r {
            Ok(pt) => locus.points.push(pt),
            Err(f) => {
                warn!("pitchfork locus point dropped at α={}, T_h={}: {}", f.alpha, f.t_h, f.reason);
                locus.dropped.push(f);
            }
        }
    }
    locus
        .points
        .sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.t_h.total_cmp(&b.t_h)));
    Ok(locus)
}
