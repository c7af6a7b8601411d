//! Plant-side rotor loss of effectiveness (LoE).
//!
//! A schedule holds half-open intervals `[start, end)` during which one rotor
//! loses a fraction of its capability. Rotors are numbered 1–4 in the public
//! API (front-left, front-right, rear-left, rear-right).

use nalgebra::Vector4;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultEvent {
    pub start: f64,
    /// `None` leaves the fault active for the rest of the run.
    pub end: Option<f64>,
    /// 1-based rotor number.
    pub rotor: usize,
    /// Fraction of capability lost, in [0, 1].
    pub loe: f64,
}

impl FaultEvent {
    fn end_or_inf(&self) -> f64 {
        self.end.unwrap_or(f64::INFINITY)
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end_or_inf()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSchedule {
    events: Vec<FaultEvent>,
}

impl FaultSchedule {
    pub fn new(events: Vec<FaultEvent>) -> Result<Self> {
        for e in &events {
            if !(1..=4).contains(&e.rotor) {
                return Err(Error::InvalidSchedule(format!("rotor {} is not in 1..=4", e.rotor)));
            }
            if !(0.0..=1.0).contains(&e.loe) {
                return Err(Error::InvalidSchedule(format!("loe {} is not in [0, 1]", e.loe)));
            }
            if !e.start.is_finite() || e.end.is_some_and(|end| !(end > e.start)) {
                return Err(Error::InvalidSchedule(format!("event on rotor {} has an empty or invalid interval", e.rotor)));
            }
        }
        for (i, a) in events.iter().enumerate() {
            for b in &events[i + 1..] {
                if a.rotor == b.rotor && a.start < b.end_or_inf() && b.start < a.end_or_inf() {
                    return Err(Error::InvalidSchedule(format!(
                        "overlapping events on rotor {} at t = {} and t = {}",
                        a.rotor, a.start, b.start
                    )));
                }
            }
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[FaultEvent] {
        &self.events
    }

    /// Loss fraction of `rotor` (1-based) at time `t`; zero outside events.
    pub fn loe_at(&self, rotor: usize, t: f64) -> f64 {
        self.events.iter().find(|e| e.rotor == rotor && e.contains(t)).map_or(0.0, |e| e.loe)
    }

    pub fn loe_vector(&self, t: f64) -> Vector4<f64> {
        Vector4::from_fn(|k, _| self.loe_at(k + 1, t))
    }

    /// A copy with every event moved by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            events: self
                .events
                .iter()
                .map(|e| FaultEvent { start: e.start + dt, end: e.end.map(|t| t + dt), ..*e })
                .collect(),
        }
    }
}

/// How a loss fraction reduces a rotor's capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoeNormalization {
    /// Ceiling scales to `ceiling · (1 − loe)`.
    #[default]
    Ceiling,
    /// Available thrust is `hover_thrust · (1 − loe)` while a fault is active.
    HoverRelative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorLimits {
    /// Healthy per-rotor thrust ceiling [N].
    pub ceiling: f64,
    pub normalization: LoeNormalization,
    /// Per-rotor hover thrust [N], used by [`LoeNormalization::HoverRelative`].
    pub hover_thrust: f64,
}

impl RotorLimits {
    pub fn cap(&self, loe: f64) -> f64 {
        match self.normalization {
            LoeNormalization::Ceiling => self.ceiling * (1.0 - loe),
            LoeNormalization::HoverRelative if loe > 0.0 => (self.hover_thrust * (1.0 - loe)).min(self.ceiling),
            LoeNormalization::HoverRelative => self.ceiling,
        }
    }

    /// Loss expressed as a fraction of the healthy ceiling, which is what the
    /// controller's bound update consumes.
    pub fn equivalent_ceiling_loss(&self, loe: f64) -> f64 {
        if self.ceiling > 0.0 {
            (1.0 - self.cap(loe) / self.ceiling).clamp(0.0, 1.0)
        } else {
            1.0
        }
    }
}

/// Thrust actually produced when `commanded` is requested at time `t`.
pub fn effective_thrust(commanded: &Vector4<f64>, t: f64, schedule: &FaultSchedule, limits: &RotorLimits) -> Vector4<f64> {
    Vector4::from_fn(|k, _| commanded[k].min(limits.cap(schedule.loe_at(k + 1, t))))
}
