//! Noisy scalar plant under proportional opposition control.
//!
//! ```text
//! x' = a x + b A + sigma_w w
//! S  = g(theta_s) x + sigma_v v,   g(theta) = exp(-(theta - c)^2 / (2 width^2))
//! A  = -beta S
//! ```
//!
//! The sensor gain `g` peaks at the sensor position `c`, so the sensing
//! location has an interior optimum. The target is `J = x`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::control::Plant;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPlantParams {
    pub a: f64,
    pub b: f64,
    pub process_noise: f64,
    pub sensor_noise: f64,
    pub sensor_center: f64,
    pub sensor_width: f64,
}

impl Default for LinearPlantParams {
    fn default() -> Self {
        Self { a: 0.9, b: 1.0, process_noise: 1.0, sensor_noise: 0.5, sensor_center: 5.0, sensor_width: 2.0 }
    }
}

impl LinearPlantParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a.abs() < 1.0) {
            return Err(Error::InvalidSystem(format!("linear-plant needs |a| < 1, got {}", self.a)));
        }
        if self.process_noise < 0.0 || self.sensor_noise < 0.0 || self.sensor_width <= 0.0 {
            return Err(Error::InvalidSystem("linear-plant noise levels must be >= 0 and width > 0".into()));
        }
        Ok(())
    }

    pub fn sensor_gain(&self, theta_s: f64) -> f64 {
        let z = (theta_s - self.sensor_center) / self.sensor_width;
        (-0.5 * z * z).exp()
    }

    /// Stationary variance of `x` under `A = -beta S`; `None` when unstable.
    pub fn stationary_variance(&self, theta_s: f64, beta: f64) -> Option<f64> {
        let g = self.sensor_gain(theta_s);
        let pole = self.a - beta * self.b * g;
        if pole.abs() >= 1.0 {
            return None;
        }
        let bs = beta * self.b * self.sensor_noise;
        Some((self.process_noise.powi(2) + bs * bs) / (1.0 - pole * pole))
    }
}

#[derive(Debug, Clone)]
pub struct LinearPlant {
    params: LinearPlantParams,
    x: f64,
    process: StreamRng,
    sensor: StreamRng,
    steps: usize,
}

impl LinearPlant {
    pub fn new(params: LinearPlantParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, x: 0.0, process: stream(seed, 1), sensor: stream(seed, 2), steps: 0 })
    }

    pub fn params(&self) -> &LinearPlantParams {
        &self.params
    }
}

impl Plant for LinearPlant {
    fn reset(&mut self, seed: u64) {
        self.x = 0.0;
        self.process = stream(seed, 1);
        self.sensor = stream(seed, 2);
        self.steps = 0;
    }

    fn sense(&mut self, theta_s: &[f64]) -> Vec<f64> {
        let v: f64 = self.sensor.sample(StandardNormal);
        vec![self.params.sensor_gain(theta_s[0]) * self.x + self.params.sensor_noise * v]
    }

    fn step(&mut self, actuation: &[f64]) -> Result<Vec<f64>> {
        let w: f64 = self.process.sample(StandardNormal);
        self.x = self.params.a * self.x + self.params.b * actuation[0] + self.params.process_noise * w;
        self.steps += 1;
        if !self.x.is_finite() || self.x.abs() > 1e12 {
            return Err(Error::Divergence { step: self.steps, detail: format!("state reached {}", self.x) });
        }
        Ok(vec![self.x])
    }

    fn target(&self, state: &[f64]) -> Vec<f64> {
        vec![state[0]]
    }

    fn state(&self) -> Vec<f64> {
        vec![self.x]
    }
}
