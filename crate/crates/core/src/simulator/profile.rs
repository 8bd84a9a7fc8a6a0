use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Repeating accelerate, cruise, brake, stop cycles, one per cruise speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedProfile {
    pub cruise_speeds: Vec<f64>,
    /// m/s².
    pub accel: f64,
    /// Positive magnitude, m/s².
    pub decel: f64,
    /// s.
    pub cruise_time: f64,
    /// s.
    pub stop_time: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            cruise_speeds: vec![1.0, 2.0, 2.8],
            accel: 0.5,
            decel: 0.8,
            cruise_time: 8.0,
            stop_time: 3.0,
        }
    }
}

/// Desired speed and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub v: f64,
    pub a: f64,
}

impl SpeedProfile {
    pub fn validate(&self, v_max: f64) -> Result<()> {
        if self.cruise_speeds.is_empty() {
            return Err(Error::InvalidParameter("profile needs at least one cruise speed".into()));
        }
        if self.cruise_speeds.iter().any(|&v| !(v > 0.0 && v <= v_max)) {
            return Err(Error::InvalidParameter(format!("cruise speeds must lie in (0, {v_max}]")));
        }
        if !(self.accel > 0.0 && self.decel > 0.0 && self.cruise_time >= 0.0 && self.stop_time >= 0.0) {
            return Err(Error::InvalidParameter("profile rates and durations must be positive".into()));
        }
        Ok(())
    }

    fn cycle_length(&self, v: f64) -> f64 {
        v / self.accel + self.cruise_time + v / self.decel + self.stop_time
    }

    pub fn period(&self) -> f64 {
        self.cruise_speeds.iter().map(|&v| self.cycle_length(v)).sum()
    }

    pub fn at(&self, t: f64) -> ProfilePoint {
        let mut tau = t.max(0.0) % self.period();
        for &vc in &self.cruise_speeds {
            let t_acc = vc / self.accel;
            let t_dec = vc / self.decel;
            if tau < t_acc {
                return ProfilePoint { v: self.accel * tau, a: self.accel };
            }
            tau -= t_acc;
            if tau < self.cruise_time {
                return ProfilePoint { v: vc, a: 0.0 };
            }
            tau -= self.cruise_time;
            if tau < t_dec {
                return ProfilePoint { v: vc - self.decel * tau, a: -self.decel };
            }
            tau -= t_dec;
            if tau < self.stop_time {
                return ProfilePoint { v: 0.0, a: 0.0 };
            }
            tau -= self.stop_time;
        }
        ProfilePoint { v: 0.0, a: 0.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_shape() {
        let p = SpeedProfile {
            cruise_speeds: vec![1.0],
            accel: 0.5,
            decel: 1.0,
            cruise_time: 4.0,
            stop_time: 2.0,
        };
        assert_eq!(p.period(), 9.0);
        assert_eq!(p.at(1.0), ProfilePoint { v: 0.5, a: 0.5 });
        assert_eq!(p.at(3.0), ProfilePoint { v: 1.0, a: 0.0 });
        assert_eq!(p.at(6.5), ProfilePoint { v: 0.5, a: -1.0 });
        assert_eq!(p.at(8.0), ProfilePoint { v: 0.0, a: 0.0 });
        assert_eq!(p.at(10.0), p.at(1.0));
    }

    #[test]
    fn speed_is_integral_of_acceleration() {
        let p = SpeedProfile::default();
        let dt = 1e-3;
        let mut v = 0.0;
        for k in 0..(p.period() / dt) as usize {
            let pt = p.at(k as f64 * dt);
            assert!((pt.v - v).abs() < 5e-3, "t = {}", k as f64 * dt);
            v += pt.a * dt;
        }
    }

    #[test]
    fn validation() {
        assert!(SpeedProfile::default().validate(3.0).is_ok());
        assert!(SpeedProfile::default().validate(2.0).is_err());
        assert!(SpeedProfile { cruise_speeds: vec![], ..Default::default() }.validate(3.0).is_err());
    }
}
