use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Longitudinal plant parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Vehicle mass without cargo, kg.
    pub mass: f64,
    /// Cargo, kg.
    pub load: f64,
    /// Traction force at 100 % throttle, N.
    pub throttle_max_force: f64,
    /// Braking force at 100 % brake, N.
    pub brake_max_force: f64,
    /// Shape exponent of both pedal maps: `F = F_max * (|cmd| / 100)^p`.
    pub force_exponent: f64,
    /// Aerodynamic drag, N·s²/m².
    pub drag: f64,
    /// Rolling resistance coefficient; the force is `coeff * (mass + load) * g`.
    pub rolling_coeff: f64,
    /// Actuator delay, s.
    pub delay: f64,
    /// IMU acceleration noise, m/s².
    pub imu_noise_std: f64,
    /// Control and logging rate, Hz.
    pub sample_rate: f64,
    pub v_max: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self::ax1(0.0)
    }
}

impl PlantConfig {
    /// Small low-speed delivery vehicle, 300 kg, 3 m/s.
    pub fn ax1(load: f64) -> Self {
        Self {
            mass: 300.0,
            load,
            throttle_max_force: 1862.0,
            brake_max_force: 1500.0,
            force_exponent: 1.2,
            drag: 0.8,
            rolling_coeff: 0.0408,
            delay: 0.2,
            imu_noise_std: 0.05,
            sample_rate: 100.0,
            v_max: 3.0,
        }
    }

    /// Passenger sedan, 1769 kg, 10 m/s.
    pub fn mkz(load: f64) -> Self {
        Self {
            mass: 1769.0,
            load,
            throttle_max_force: 7900.0,
            brake_max_force: 8000.0,
            force_exponent: 1.2,
            drag: 0.41,
            rolling_coeff: 0.015,
            delay: 0.2,
            imu_noise_std: 0.05,
            sample_rate: 100.0,
            v_max: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("mass", self.mass > 0.0),
            ("load", self.load >= 0.0),
            ("throttle_max_force", self.throttle_max_force > 0.0),
            ("brake_max_force", self.brake_max_force > 0.0),
            ("force_exponent", self.force_exponent > 0.0),
            ("drag", self.drag >= 0.0),
            ("rolling_coeff", self.rolling_coeff >= 0.0),
            ("delay", self.delay >= 0.0),
            ("imu_noise_std", self.imu_noise_std >= 0.0),
            ("sample_rate", self.sample_rate > 0.0),
            ("v_max", self.v_max > 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("plant {name} out of range")));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass + self.load
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Pedal force, N; negative when braking.
    pub fn pedal_force(&self, cmd: f64) -> f64 {
        let u = (cmd.abs() / 100.0).min(1.0).powf(self.force_exponent);
        if cmd >= 0.0 {
            self.throttle_max_force * u
        } else {
            -self.brake_max_force * u
        }
    }

    pub fn rolling_force(&self) -> f64 {
        self.rolling_coeff * self.total_mass() * GRAVITY
    }

    /// Acceleration while rolling forward at `v` with `cmd` applied. At
    /// `v = 0` this is the limit from above, i.e. what a calibration table
    /// should hold in its zero-speed column.
    pub fn steady_state_acc(&self, cmd: f64, v: f64) -> f64 {
        (self.pedal_force(cmd) - self.drag * v * v - self.rolling_force()) / self.total_mass()
    }
}

/// Simulated vehicle: state, actuator delay line and IMU noise source.
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: PlantConfig,
    t: f64,
    v: f64,
    station: f64,
    queue: VecDeque<f64>,
    lag: usize,
    last_acc: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Plant {
    /// Plant at rest. A command issued at `t` first shows up in the
    /// acceleration of the step that ends at `t + delay`.
    pub fn new(cfg: PlantConfig, seed: u64) -> Self {
        let lag = ((cfg.delay * cfg.sample_rate).round() as usize).saturating_sub(1);
        let noise = (cfg.imu_noise_std > 0.0).then(|| Normal::new(0.0, cfg.imu_noise_std).expect("finite std"));
        Self {
            t: 0.0,
            v: 0.0,
            station: 0.0,
            queue: std::iter::repeat_n(0.0, lag).collect(),
            lag,
            last_acc: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            cfg,
        }
    }

    pub fn config(&self) -> &PlantConfig {
        &self.cfg
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn speed(&self) -> f64 {
        self.v
    }

    pub fn station(&self) -> f64 {
        self.station
    }

    /// True acceleration of the most recent step.
    pub fn acceleration(&self) -> f64 {
        self.last_acc
    }

    /// Advances by `dt` with a newly issued command and returns the
    /// acceleration actually realized over the step (after the clamp at
    /// zero speed).
    pub fn step(&mut self, cmd: f64, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        self.queue.push_back(cmd.clamp(-100.0, 100.0));
        let applied = if self.queue.len() > self.lag {
            self.queue.pop_front().expect("non-empty queue")
        } else {
            0.0
        };
        let cfg = &self.cfg;
        let force = cfg.pedal_force(applied);
        let a = if self.v > 0.0 {
            (force - cfg.drag * self.v * self.v - cfg.rolling_force()) / cfg.total_mass()
        } else {
            // Static friction and brakes hold the vehicle until traction wins.
            ((force - cfg.rolling_force()) / cfg.total_mass()).max(0.0)
        };
        let v_next = (self.v + a * dt).max(0.0);
        let realized = (v_next - self.v) / dt;
        self.v = v_next;
        self.station += v_next * dt;
        self.t += dt;
        self.last_acc = realized;
        realized
    }

    /// `acc` plus one IMU noise draw.
    pub fn measure_acc(&mut self, acc: f64) -> f64 {
        match &self.noise {
            Some(n) => acc + n.sample(&mut self.rng),
            None => acc,
        }
    }
}
