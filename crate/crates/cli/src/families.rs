//! Parametric families available to `infoflux fit`.

use infoflux::modeling::SimRequest;
use infoflux::rng::stream;
use infoflux::{Error, SignalMatrix};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const AR1_BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `x = theta_0 + theta_1 z` with standard normal `z`.
    ScaledNoise,
    /// `x' = theta_0 x + theta_1 w`, observed as the pair `(x, x')`.
    Ar1,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::ScaledNoise => "scaled-noise",
            Family::Ar1 => "ar1",
        }
    }

    pub fn n_params(self) -> usize {
        2
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Family::ScaledNoise => &["x"],
            Family::Ar1 => &["x", "x_next"],
        }
    }

    /// Deterministic samples of the family at `theta`.
    pub fn simulate(self, theta: &[f64], req: &SimRequest) -> infoflux::Result<SignalMatrix> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!("{} takes {} parameters", self.name(), self.n_params())));
        }
        let mut rng = stream(req.seed, 0);
        let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
        let columns = match self {
            Family::ScaledNoise => vec![(0..req.n_samples).map(|_| theta[0] + theta[1] * normal()).collect()],
            Family::Ar1 => {
                if theta[0].abs() >= 1.0 {
                    return Err(Error::InvalidArgument(format!("ar1 needs |theta_0| < 1, got {}", theta[0])));
                }
                let mut x = 0.0;
                for _ in 0..AR1_BURN_IN {
                    x = theta[0] * x + theta[1] * normal();
                }
                let mut path = Vec::with_capacity(req.n_samples + 1);
                path.push(x);
                for _ in 0..req.n_samples {
                    x = theta[0] * x + theta[1] * normal();
                    path.push(x);
                }
                vec![path[..req.n_samples].to_vec(), path[1..].to_vec()]
            }
        };
        let names = self.columns().iter().map(|s| s.to_string()).collect();
        SignalMatrix::from_columns(columns, names, 1.0)
    }
}
