//! Lorenz-96 ring, `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96Params {
    pub n_sites: usize,
    pub forcing: f64,
    pub dt: f64,
    pub sample_every: usize,
}

fn rhs(x: &[f64], f: f64, out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let ip1 = x[(i + 1) % n];
        let im1 = x[(i + n - 1) % n];
        let im2 = x[(i + n - 2) % n];
        out[i] = (ip1 - im2) * im1 - x[i] + f;
    }
}

fn rk4(x: &mut [f64], f: f64, h: f64) {
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4, mut t) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    rhs(x, f, &mut k1);
    for i in 0..n {
        t[i] = x[i] + 0.5 * h * k1[i];
    }
    rhs(&t, f, &mut k2);
    for i in 0..n {
        t[i] = x[i] + 0.5 * h * k2[i];
    }
    rhs(&t, f, &mut k3);
    for i in 0..n {
        t[i] = x[i] + h * k3[i];
    }
    rhs(&t, f, &mut k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Sampled trajectory, one column per site, `n` samples with transient.
pub fn trajectory(p: Lorenz96Params, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if p.n_sites < 4 || p.dt <= 0.0 || p.sample_every == 0 {
        return Err(Error::InvalidSystem("lorenz96 needs n_sites >= 4, dt > 0, sample_every >= 1".into()));
    }
    let mut rng = stream(seed, 0);
    let mut x: Vec<f64> = (0..p.n_sites).map(|_| p.forcing + rng.gen_range(-0.01..0.01)).collect();
    let mut cols = vec![Vec::with_capacity(n); p.n_sites];
    for step in 0..n {
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
        for _ in 0..p.sample_every {
            rk4(&mut x, p.forcing, p.dt);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::Divergence { step: step + 1, detail: "lorenz96 state left the attractor".into() });
        }
    }
    Ok(cols)
}
