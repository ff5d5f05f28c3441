//! Flywheel dynamics `ż₁ = z₂`, `ż₂ = (−k_f z₂ + τ(z₁))/I` on unwrapped coordinates.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{energy, torque};
use crate::error::Result;
use crate::ode::{self, Event, Tolerances};
use crate::params::EngineParams;

pub use crate::ode::Direction;

/// Flywheel angle (unwrapped, rad) and angular velocity (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub z1: f64,
    pub z2: f64,
}

impl State {
    pub const fn new(z1: f64, z2: f64) -> Self {
        Self { z1, z2 }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.z1, self.z2]
    }

    pub fn from_array(y: [f64; 2]) -> Self {
        Self { z1: y[0], z2: y[1] }
    }

    pub fn energy(self, p: &EngineParams) -> f64 {
        energy(self.z1, self.z2, p)
    }

    /// Image under the flip `(q, q̇) → (2π − q, −q̇)`.
    pub fn flipped(self) -> Self {
        Self {
            z1: std::f64::consts::TAU - self.z1,
            z2: -self.z2,
        }
    }
}

pub fn vector_field(s: State, p: &EngineParams) -> (f64, f64) {
    (s.z2, (-p.k_f * s.z2 + torque(s.z1, p)) / p.inertia)
}

pub(crate) fn rhs(p: &EngineParams) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |_t, y| {
        let (a, b) = vector_field(State::from_array(*y), p);
        [a, b]
    }
}

/// Accepted integrator steps, strictly increasing in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, State)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<(f64, State)> {
        self.points.last().copied()
    }

    /// CSV with header `t,q,qdot`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,q,qdot")?;
        for (t, s) in &self.points {
            writeln!(
                out,
                "{},{},{}",
                crate::io::fmt_f64(*t),
                crate::io::fmt_f64(s.z1),
                crate::io::fmt_f64(s.z2)
            )?;
        }
        Ok(())
    }
}

/// Simulate from `state0` over `[0, t_end]`, recording every accepted step.
pub fn integrate(
    state0: State,
    p: &EngineParams,
    t_end: f64,
    tol: Tolerances,
) -> Result<Trajectory> {
    if !(t_end > 0.0) {
        return Err(crate::Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let mut traj = Trajectory {
        points: vec![(0.0, state0)],
    };
    let mut solver = ode::Dopri5::new(rhs(p), 0.0, state0.as_array(), tol);
    solver.advance_to(t_end, |step| {
        traj.points.push((step.t1, State::from_array(step.y1)));
    })?;
    Ok(traj)
}

/// Labelled scalar event on `(t, state)`.
pub struct EventSpec<'a> {
    pub id: String,
    pub g: Box<dyn Fn(f64, State) -> f64 + 'a>,
    pub direction: Direction,
}

impl<'a> EventSpec<'a> {
    pub fn new(
        id: impl Into<String>,
        direction: Direction,
        g: impl Fn(f64, State) -> f64 + 'a,
    ) -> Self {
        Self {
            id: id.into(),
            g: Box::new(g),
            direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventOutcome {
    /// Id of the first event to fire, `None` if `t_max` came first.
    pub event: Option<String>,
    pub t: f64,
    pub state: State,
}

/// Integrate until the earliest event crossing (or `t_max`).
pub fn integrate_until_event(
    state0: State,
    p: &EngineParams,
    events: &[EventSpec<'_>],
    t_max: f64,
    tol: Tolerances,
) -> Result<EventOutcome> {
    if !(t_max > 0.0) {
        return Err(crate::Error::InvalidArgument(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    let generic: Vec<Event<'_, 2>> = events
        .iter()
        .map(|e| Event::new(e.direction, |t, y: &[f64; 2]| (e.g)(t, State::from_array(*y))))
        .collect();
    let hit = ode::solve_until_event(rhs(p), 0.0, state0.as_array(), t_max, tol, &generic, |_| {})?;
    Ok(EventOutcome {
        event: hit.index.map(|i| events[i].id.clone()),
        t: hit.t,
        state: State::from_array(hit.y),
    })
}
