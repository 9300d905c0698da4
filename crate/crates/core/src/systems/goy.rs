//! Gledzer-Ohkitani-Yamada shell model.
//!
//! Shell `n` (0-based) carries a complex velocity `u_n` at wavenumber
//! `k_n = k0 lambda^(n+1)` and evolves as
//!
//! ```text
//! du_n/dt = i k_n [ u*_{n+1} u*_{n+2} - (eps/lambda) u*_{n-1} u*_{n+1}
//!                   - ((1-eps)/lambda^2) u*_{n-1} u*_{n-2} ]
//!           - nu k_n^2 u_n - d_n k_n^2 u_n + f_n
//! ```
//!
//! with out-of-range shells set to zero. The nonlinear term conserves
//! `E = 1/2 sum |u_n|^2` exactly, so the energy flux through shell `n` is
//! `Pi_n = -sum_{m <= n} Re(u*_m NL_m)`. The optional per-shell damping `d_n`
//! is the hook used for eddy-viscosity closures of truncated models.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GoyParams {
    pub n_shells: usize,
    pub lambda: f64,
    pub k0: f64,
    pub epsilon: f64,
    pub nu: f64,
    /// Real and imaginary part of the forcing on `forcing_shell`.
    pub forcing: f64,
    pub forcing_shell: usize,
    pub dt: f64,
    /// Extra eddy viscosity per shell (empty means none).
    pub closure: Vec<f64>,
}

impl Default for GoyParams {
    fn default() -> Self {
        Self {
            n_shells: 16,
            lambda: 2.0,
            k0: 1.0 / 16.0,
            epsilon: 0.5,
            nu: 1e-5,
            forcing: 5e-3,
            forcing_shell: 3,
            dt: 1e-3,
            closure: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GoyModel {
    params: GoyParams,
    k: Vec<f64>,
    damping: Vec<f64>,
    u: Vec<Complex64>,
    steps: usize,
}

impl GoyModel {
    pub fn new(params: GoyParams) -> Result<Self> {
        if params.n_shells < 3 {
            return Err(Error::InvalidSystem("goy-shell needs at least 3 shells".into()));
        }
        if params.forcing_shell >= params.n_shells {
            return Err(Error::InvalidSystem("forcing shell out of range".into()));
        }
        if !(params.dt > 0.0 && params.lambda > 1.0 && params.k0 > 0.0 && params.nu >= 0.0) {
            return Err(Error::InvalidSystem("goy-shell needs dt > 0, lambda > 1, k0 > 0, nu >= 0".into()));
        }
        if !params.closure.is_empty() && params.closure.len() != params.n_shells {
            return Err(Error::InvalidSystem("closure needs one coefficient per shell".into()));
        }
        let k: Vec<f64> = (0..params.n_shells).map(|n| params.k0 * params.lambda.powi(n as i32 + 1)).collect();
        let damping = (0..params.n_shells)
            .map(|n| (params.nu + params.closure.get(n).copied().unwrap_or(0.0)) * k[n] * k[n])
            .collect();
        let u = vec![Complex64::new(0.0, 0.0); params.n_shells];
        Ok(Self { params, k, damping, u, steps: 0 })
    }

    /// Random-phase initial condition with a Kolmogorov-like `k^{-1/3}`
    /// amplitude profile.
    pub fn randomize(&mut self, rng: &mut impl Rng, amplitude: f64) {
        for (u, &k) in self.u.iter_mut().zip(&self.k) {
            let phase = rng.gen::<f64>() * std::f64::consts::TAU;
            *u = Complex64::from_polar(amplitude * k.powf(-1.0 / 3.0), phase);
        }
        self.steps = 0;
    }

    pub fn params(&self) -> &GoyParams {
        &self.params
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn velocities(&self) -> &[Complex64] {
        &self.u
    }

    pub fn set_velocities(&mut self, u: Vec<Complex64>) -> Result<()> {
        if u.len() != self.params.n_shells {
            return Err(Error::DimensionMismatch(format!(
                "{} velocities for {} shells",
                u.len(),
                self.params.n_shells
            )));
        }
        self.u = u;
        Ok(())
    }

    /// `E = 1/2 sum |u_n|^2`.
    pub fn energy(&self) -> f64 {
        0.5 * self.u.iter().map(|u| u.norm_sqr()).sum::<f64>()
    }

    /// `E_n = 1/2 |u_n|^2`.
    pub fn shell_energies(&self) -> Vec<f64> {
        self.u.iter().map(|u| 0.5 * u.norm_sqr()).collect()
    }

    fn nonlinear(&self, u: &[Complex64], out: &mut [Complex64]) {
        let n = u.len();
        let l = self.params.lambda;
        let b = -self.params.epsilon / l;
        let c = -(1.0 - self.params.epsilon) / (l * l);
        let at = |i: isize| -> Complex64 {
            if i < 0 || i as usize >= n {
                Complex64::new(0.0, 0.0)
            } else {
                u[i as usize].conj()
            }
        };
        for (i, o) in out.iter_mut().enumerate() {
            let j = i as isize;
            let s = at(j + 1) * at(j + 2) + b * at(j - 1) * at(j + 1) + c * at(j - 1) * at(j - 2);
            *o = Complex64::new(0.0, self.k[i]) * s;
        }
    }

    /// Energy flux through each shell, `Pi_n = -sum_{m<=n} Re(u*_m NL_m)`.
    pub fn fluxes(&self) -> Vec<f64> {
        let mut nl = vec![Complex64::new(0.0, 0.0); self.u.len()];
        self.nonlinear(&self.u, &mut nl);
        let mut acc = 0.0;
        self.u
            .iter()
            .zip(&nl)
            .map(|(u, g)| {
                acc -= (u.conj() * g).re;
                acc
            })
            .collect()
    }

    fn rhs(&self, u: &[Complex64], extra: &[Complex64], out: &mut [Complex64]) {
        self.nonlinear(u, out);
        let f = Complex64::new(self.params.forcing, self.params.forcing);
        for i in 0..u.len() {
            out[i] -= self.damping[i] * u[i];
            if i == self.params.forcing_shell {
                out[i] += f;
            }
            if let Some(e) = extra.get(i) {
                out[i] += e;
            }
        }
    }

    /// One fourth-order Runge-Kutta step. `extra` is an additive forcing per
    /// shell held constant over the step (empty for none).
    pub fn step_with(&mut self, extra: &[Complex64]) -> Result<()> {
        let n = self.u.len();
        let h = self.params.dt;
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        let mut tmp = vec![zero; n];
        self.rhs(&self.u, extra, &mut k1);
        for i in 0..n {
            tmp[i] = self.u[i] + 0.5 * h * k1[i];
        }
        self.rhs(&tmp, extra, &mut k2);
        for i in 0..n {
            tmp[i] = self.u[i] + 0.5 * h * k2[i];
        }
        self.rhs(&tmp, extra, &mut k3);
        for i in 0..n {
            tmp[i] = self.u[i] + h * k3[i];
        }
        self.rhs(&tmp, extra, &mut k4);
        for i in 0..n {
            self.u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.steps += 1;
        if let Some(i) = self.u.iter().position(|u| !(u.re.is_finite() && u.im.is_finite()) || u.norm() > 1e6) {
            return Err(Error::Divergence { step: self.steps, detail: format!("shell {i} blew up") });
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_with(&[])
    }
}

/// Shell model under opposition forcing on one shell.
///
/// The sensor reads `(Re u_m, Im u_m)` at shell `m = round(theta_s[0])`; the
/// actuation is added to `du_m/dt`. One plant step spans `sample_every`
/// integrator steps. The target is the total energy.
#[derive(Debug, Clone)]
pub struct GoyPlant {
    model: GoyModel,
    sample_every: usize,
    amplitude: f64,
    shell: usize,
}

impl GoyPlant {
    pub fn new(params: GoyParams, sample_every: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if sample_every == 0 {
            return Err(Error::InvalidSystem("sample_every must be at least 1".into()));
        }
        let mut plant = Self { model: GoyModel::new(params)?, sample_every, amplitude, shell: 0 };
        crate::control::Plant::reset(&mut plant, seed);
        Ok(plant)
    }

    pub fn model(&self) -> &GoyModel {
        &self.model
    }
}

fn flatten(u: &[Complex64]) -> Vec<f64> {
    u.iter().flat_map(|c| [c.re, c.im]).collect()
}

impl crate::control::Plant for GoyPlant {
    fn reset(&mut self, seed: u64) {
        self.model.randomize(&mut crate::rng::stream(seed, 0), self.amplitude);
    }

    fn sense(&mut self, theta_s: &[f64]) -> Vec<f64> {
        let last = self.model.params.n_shells - 1;
        self.shell = theta_s[0].round().clamp(0.0, last as f64) as usize;
        let u = self.model.u[self.shell];
        vec![u.re, u.im]
    }

    fn step(&mut self, actuation: &[f64]) -> Result<Vec<f64>> {
        let mut extra = vec![Complex64::new(0.0, 0.0); self.model.params.n_shells];
        extra[self.shell] = Complex64::new(actuation[0], actuation.get(1).copied().unwrap_or(0.0));
        for _ in 0..self.sample_every {
            self.model.step_with(&extra)?;
        }
        Ok(flatten(&self.model.u))
    }

    fn target(&self, state: &[f64]) -> Vec<f64> {
        vec![0.5 * state.iter().map(|v| v * v).sum::<f64>()]
    }

    fn state(&self) -> Vec<f64> {
        flatten(&self.model.u)
    }

    fn proxy(&self, state: &[f64]) -> Vec<f64> {
        self.target(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn inviscid_unforced_energy_is_conserved() {
        let params = GoyParams { nu: 0.0, forcing: 0.0, dt: 1e-4, ..GoyParams::default() };
        let mut m = GoyModel::new(params).unwrap();
        m.randomize(&mut stream(3, 0), 0.05);
        let e0 = m.energy();
        for _ in 0..20_000 {
            m.step().unwrap();
        }
        assert!(((m.energy() - e0) / e0).abs() < 1e-8, "{} vs {e0}", m.energy());
    }

    #[test]
    fn flux_through_last_shell_vanishes() {
        let mut m = GoyModel::new(GoyParams::default()).unwrap();
        m.randomize(&mut stream(5, 0), 0.1);
        let pi = m.fluxes();
        assert!(pi.last().unwrap().abs() < 1e-14);
    }

    #[test]
    fn flux_matches_energy_budget_of_leading_shells() {
        let params = GoyParams { nu: 0.0, forcing: 0.0, dt: 1e-6, ..GoyParams::default() };
        let mut m = GoyModel::new(params).unwrap();
        m.randomize(&mut stream(9, 0), 0.1);
        let before: f64 = m.shell_energies()[..6].iter().sum();
        let pi = m.fluxes()[5];
        m.step().unwrap();
        let after: f64 = m.shell_energies()[..6].iter().sum();
        let rate = (after - before) / 1e-6;
        assert!((rate + pi).abs() < 1e-4 * pi.abs().max(1e-6), "{rate} vs {}", -pi);
    }
}
