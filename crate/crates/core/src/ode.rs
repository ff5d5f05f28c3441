//! Explicit adaptive Dormand–Prince 5(4) integrator with FSAL, the
//! standard 4th-order continuous extension, and event location by
//! bisection on the dense interpolant.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    /// Upper bound on the step size, s.
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-11,
            max_step: 0.1,
        }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self {
            rel,
            abs,
            ..Default::default()
        }
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

/// Time tolerance for event localization, s.
pub const EVENT_TIME_TOL: f64 = 1e-10;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    span: f64,
    r2: [f64; N],
    r3: [f64; N],
    r4: [f64; N],
    r5: [f64; N],
}

impl<const N: usize> DenseStep<N> {
    /// State at `t ∈ [t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t1 {
            return self.y1;
        }
        let th = if self.span == 0.0 { 0.0 } else { (t - self.t0) / self.span };
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.y0[i]
                + th * (self.r2[i] + th1 * (self.r3[i] + th * (self.r4[i] + th1 * self.r5[i])));
        }
        out
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Stepper state. `f(t, y)` is the right-hand side.
pub struct Dopri5<F, const N: usize>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    f: F,
    t: f64,
    y: [f64; N],
    dy: [f64; N],
    h: f64,
    tol: Tolerances,
    direction: f64,
    /// Accepted steps so far.
    pub steps: usize,
}

impl<F, const N: usize> Dopri5<F, N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(f: F, t0: f64, y0: [f64; N], tol: Tolerances) -> Self {
        let dy = f(t0, &y0);
        Self {
            f,
            t: t0,
            y: y0,
            dy,
            h: 0.0,
            tol,
            direction: 1.0,
            steps: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> [f64; N] {
        self.y
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.abs + self.tol.rel * a.abs().max(b.abs())
    }

    fn initial_step(&self, span: f64) -> f64 {
        // Hairer–Nørsett–Wanner starting step heuristic.
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.dy[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span.abs()).min(self.tol.max_step);
        let y1 = axpy(&self.y, self.direction * h0, &[(1.0, &self.dy)]);
        let f1 = (self.f)(self.t + self.direction * h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - self.dy[i]) / sc).powi(2);
        }
        let d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.tol.max_step).min(span.abs())
    }

    /// Take one accepted step without passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<DenseStep<N>> {
        let span = t_limit - self.t;
        if self.h == 0.0 {
            self.direction = if span < 0.0 { -1.0 } else { 1.0 };
            self.h = self.initial_step(span);
        }
        let f = &self.f;
        let mut h = self.h.min(self.tol.max_step);
        loop {
            let mut last = false;
            let min_h = 1e-14 * self.t.abs().max(1.0);
            // absorb a would-be sliver of a step into this one
            if h >= span.abs() - min_h {
                h = span.abs();
                last = true;
            }
            if h < min_h && !last {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    h,
                    last: self.y.to_vec(),
                });
            }
            let s = self.direction * h;
            let t = self.t;
            let y = &self.y;
            let k1 = self.dy;
            let k2 = f(t + C2 * s, &axpy(y, s, &[(A21, &k1)]));
            let k3 = f(t + C3 * s, &axpy(y, s, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * s, &axpy(y, s, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * s,
                &axpy(y, s, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + s,
                &axpy(y, s, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(
                y,
                s,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let t_new = if last { t_limit } else { t + s };
            let k7 = f(t_new, &y_new);

            let mut err = 0.0;
            let mut finite = true;
            for i in 0..N {
                let e = s
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err += (e / self.scale(y[i], y_new[i])).powi(2);
                finite &= y_new[i].is_finite();
            }
            let err = (err / N as f64).sqrt();
            if !finite || !err.is_finite() {
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                let mut step = DenseStep {
                    t0: t,
                    t1: t_new,
                    y0: *y,
                    y1: y_new,
                    span: t_new - t,
                    r2: [0.0; N],
                    r3: [0.0; N],
                    r4: [0.0; N],
                    r5: [0.0; N],
                };
                for i in 0..N {
                    let diff = y_new[i] - y[i];
                    let bspl = s * k1[i] - diff;
                    step.r2[i] = diff;
                    step.r3[i] = bspl;
                    step.r4[i] = diff - s * k7[i] - bspl;
                    step.r5[i] = s
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                self.t = t_new;
                self.y = y_new;
                self.dy = k7;
                self.steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // keep the pre-clip step size when the last step was shortened to hit t_limit
                let base = if last { self.h.max(h) } else { h };
                self.h = (base * fac).min(self.tol.max_step);
                return Ok(step);
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }

    /// Integrate to exactly `t_end`, calling `on_step` after each accepted step.
    pub fn advance_to(
        &mut self,
        t_end: f64,
        mut on_step: impl FnMut(&DenseStep<N>),
    ) -> Result<[f64; N]> {
        while self.t != t_end {
            let step = self.step(t_end)?;
            on_step(&step);
        }
        Ok(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Any,
}

impl Direction {
    fn fires(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Any => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

/// A scalar event function on `(t, y)` with a triggering direction.
pub struct Event<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub direction: Direction,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(direction: Direction, g: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Self {
            g: Box::new(g),
            direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<const N: usize> {
    /// Index into the event list, or `None` when `t_max` was reached first.
    pub index: Option<usize>,
    pub t: f64,
    pub y: [f64; N],
}

fn locate<const N: usize>(step: &DenseStep<N>, g: &dyn Fn(f64, &[f64; N]) -> f64, g0: f64) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1);
    let sign0 = g0.signum();
    while (hi - lo).abs() > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let v = g(mid, &step.eval(mid));
        if v.signum() == sign0 && v != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Integrate until the first event fires or `t_max` is reached, calling
/// `on_step` for each accepted step (the final step is reported truncated
/// at the event time).
pub fn solve_until_event<F, const N: usize>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_max: f64,
    tol: Tolerances,
    events: &[Event<'_, N>],
    mut on_step: impl FnMut(&DenseStep<N>),
) -> Result<EventHit<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut solver = Dopri5::new(f, t0, y0, tol);
    let mut prev: Vec<f64> = events.iter().map(|e| (e.g)(t0, &y0)).collect();
    // an event starting on its surface is armed only once it has clearly left it,
    // so round-off chatter around an equilibrium does not fire it
    let arm = 1e3 * tol.abs;
    let mut armed: Vec<bool> = prev.iter().map(|&g| g != 0.0).collect();
    while solver.t() < t_max {
        let step = solver.step(t_max)?;
        let mut best: Option<(usize, f64)> = None;
        for (i, ev) in events.iter().enumerate() {
            let after = (ev.g)(step.t1, &step.y1);
            let before = prev[i];
            if !armed[i] {
                if after.abs() > arm {
                    armed[i] = true;
                    prev[i] = after;
                }
                continue;
            }
            if ev.direction.fires(before, after) {
                let t_hit = locate(&step, ev.g.as_ref(), before);
                if best.map_or(true, |(_, tb)| t_hit < tb) {
                    best = Some((i, t_hit));
                }
            }
            prev[i] = after;
        }
        if let Some((index, t)) = best {
            let y = step.eval(t);
            let mut truncated = step;
            truncated.t1 = t;
            truncated.y1 = y;
            on_step(&truncated);
            return Ok(EventHit {
                index: Some(index),
                t,
                y,
            });
        }
        on_step(&step);
    }
    Ok(EventHit {
        index: None,
        t: solver.t(),
        y: solver.y(),
    })
}

/// States at the requested (increasing) output times, landing exactly on each.
pub fn solve_at_times<F, const N: usize>(
    f: F,
    t0: f64,
    y0: [f64; N],
    times: &[f64],
    tol: Tolerances,
) -> Result<Vec<[f64; N]>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut solver = Dopri5::new(f, t0, y0, tol);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t == solver.t() {
            out.push(solver.y());
            continue;
        }
        out.push(solver.advance_to(t, |_| {})?);
    }
    Ok(out)
}
