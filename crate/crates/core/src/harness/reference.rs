use nalgebra::Vector3;

use crate::{Error, Result};

/// Descent used by the landing phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landing {
    /// Reference descent rate [m/s].
    pub rate: f64,
    /// Altitude below which thrust is cut [m].
    pub cutoff: f64,
}

impl Default for Landing {
    fn default() -> Self {
        Self { rate: 0.5, cutoff: 0.05 }
    }
}

/// Position reference shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    Hover { position: Vector3<f64> },
    /// Accelerate from rest at `accel` until `velocity` is reached, then fly
    /// at constant velocity.
    Cruise { start: Vector3<f64>, velocity: Vector3<f64>, accel: f64 },
    /// Hold at `start`, then visit each waypoint at `speed`, pausing `hold`
    /// seconds at every stop, optionally followed by a landing.
    Waypoints { start: Vector3<f64>, waypoints: Vec<Vector3<f64>>, speed: f64, hold: f64, landing: Option<Landing> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Flight,
    Landing,
    Landed,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Flight => 0,
            Phase::Landing => 1,
            Phase::Landed => 2,
        }
    }
}

/// Position and velocity of the reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    t1: f64,
    from: Vector3<f64>,
    to: Vector3<f64>,
}

/// Time-parameterized reference built from a [`ReferenceSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    spec: ReferenceSpec,
    segments: Vec<Segment>,
    landing_start: Option<f64>,
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::InvalidParameter { field: field.into(), reason: reason.into() });
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        match self {
            ReferenceSpec::Hover { position } if !finite(position) => bad("reference.position", "must be finite"),
            ReferenceSpec::Cruise { start, velocity, accel } => {
                if !finite(start) || !finite(velocity) {
                    bad("reference.start", "start and velocity must be finite")
                } else if !(*accel > 0.0 && accel.is_finite()) {
                    bad("reference.accel", "must be positive")
                } else {
                    Ok(())
                }
            }
            ReferenceSpec::Waypoints { start, waypoints, speed, hold, landing } => {
                if !finite(start) || !waypoints.iter().all(finite) {
                    bad("reference.waypoints", "waypoints must be finite")
                } else if !(*speed > 0.0 && speed.is_finite()) {
                    bad("reference.speed", "must be positive")
                } else if !(*hold >= 0.0 && hold.is_finite()) {
                    bad("reference.hold", "must be non-negative")
                } else if landing.is_some_and(|l| !(l.rate > 0.0 && l.cutoff > 0.0)) {
                    bad("reference.landing", "rate and cutoff must be positive")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn trajectory(&self) -> Trajectory {
        let mut segments = Vec::new();
        let mut landing_start = None;
        if let ReferenceSpec::Waypoints { start, waypoints, speed, hold, landing } = self {
            let mut t = *hold;
            let mut here = *start;
            segments.push(Segment { t0: 0.0, t1: t, from: here, to: here });
            for w in waypoints {
                let dur = (w - here).norm() / speed;
                segments.push(Segment { t0: t, t1: t + dur, from: here, to: *w });
                t += dur;
                segments.push(Segment { t0: t, t1: t + hold, from: *w, to: *w });
                t += hold;
                here = *w;
            }
            if let Some(l) = landing {
                landing_start = Some(t);
                let ground = Vector3::new(here.x, here.y, 0.0);
                let dur = here.z.max(0.0) / l.rate;
                segments.push(Segment { t0: t, t1: t + dur, from: here, to: ground });
            }
        }
        Trajectory { spec: self.clone(), segments, landing_start }
    }
}

impl Trajectory {
    pub fn landing(&self) -> Option<Landing> {
        match &self.spec {
            ReferenceSpec::Waypoints { landing, .. } => *landing,
            _ => None,
        }
    }

    /// Start of the landing descent, if the reference has one.
    pub fn landing_start(&self) -> Option<f64> {
        self.landing_start
    }

    pub fn phase(&self, t: f64) -> Phase {
        match self.landing_start {
            Some(t0) if t >= t0 - 1e-9 => Phase::Landing,
            _ => Phase::Flight,
        }
    }

    pub fn sample(&self, t: f64) -> RefPoint {
        match &self.spec {
            ReferenceSpec::Hover { position } => RefPoint { position: *position, velocity: Vector3::zeros() },
            ReferenceSpec::Cruise { start, velocity, accel } => {
                let speed = velocity.norm();
                if speed == 0.0 {
                    return RefPoint { position: *start, velocity: Vector3::zeros() };
                }
                let dir = velocity / speed;
                let t_acc = speed / accel;
                let t = t.max(0.0);
                let (s, v) = if t < t_acc { (0.5 * accel * t * t, accel * t) } else { (0.5 * speed * t_acc + speed * (t - t_acc), speed) };
                RefPoint { position: start + s * dir, velocity: v * dir }
            }
            ReferenceSpec::Waypoints { .. } => {
                let seg = self
                    .segments
                    .iter()
                    .find(|s| t < s.t1)
                    .unwrap_or_else(|| self.segments.last().expect("waypoint reference has a hold segment"));
                let span = seg.t1 - seg.t0;
                if span <= 0.0 || t >= seg.t1 {
                    return RefPoint { position: seg.to, velocity: Vector3::zeros() };
                }
                let s = ((t - seg.t0) / span).clamp(0.0, 1.0);
                RefPoint { position: seg.from + s * (seg.to - seg.from), velocity: (seg.to - seg.from) / span }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cruise_ramps_then_holds_speed() {
        let r = ReferenceSpec::Cruise { start: Vector3::new(0.0, 0.0, 2.0), velocity: Vector3::new(3.0, 0.0, 0.0), accel: 1.5 }.trajectory();
        let a = r.sample(1.0);
        assert!((a.velocity.x - 1.5).abs() < 1e-12);
        assert!((a.position.x - 0.75).abs() < 1e-12);
        let b = r.sample(4.0);
        assert!((b.velocity.x - 3.0).abs() < 1e-12);
        assert!((b.position.x - (3.0 + 3.0 * 2.0)).abs() < 1e-12);
        assert_eq!(b.position.z, 2.0);
    }

    #[test]
    fn waypoints_visit_and_land() {
        let spec = ReferenceSpec::Waypoints {
            start: Vector3::new(0.0, 0.0, 1.0),
            waypoints: vec![Vector3::new(2.0, 0.0, 1.0)],
            speed: 1.0,
            hold: 1.0,
            landing: Some(Landing::default()),
        };
        let r = spec.trajectory();
        assert_eq!(r.sample(0.5).position, Vector3::new(0.0, 0.0, 1.0));
        let mid = r.sample(2.0);
        assert!((mid.position.x - 1.0).abs() < 1e-12 && (mid.velocity.x - 1.0).abs() < 1e-12);
        assert_eq!(r.sample(3.5).position, Vector3::new(2.0, 0.0, 1.0));
        assert_eq!(r.landing_start(), Some(4.0));
        assert_eq!(r.phase(3.9), Phase::Flight);
        assert_eq!(r.phase(4.0), Phase::Landing);
        let down = r.sample(5.0);
        assert!((down.position.z - 0.5).abs() < 1e-12 && (down.velocity.z + 0.5).abs() < 1e-12);
        assert_eq!(r.sample(100.0).position, Vector3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_positive_speed() {
        let spec = ReferenceSpec::Waypoints { start: Vector3::zeros(), waypoints: vec![], speed: 0.0, hold: 1.0, landing: None };
        assert!(spec.validate().is_err());
    }
}
