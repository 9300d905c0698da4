//! Desk-scale dynamical systems used as data sources and control plants.
//!
//! [`simulate`] turns a [`SystemSpec`] into a labeled [`SignalMatrix`]:
//!
//! | kind               | columns                                          |
//! |--------------------|--------------------------------------------------|
//! | `coupled-logistic` | `x`, `y`                                         |
//! | `lorenz96`         | `x0 .. x{n-1}`                                   |
//! | `goy-shell`        | band fluxes `pi_b0 ..`, or per-shell observables  |
//! | `linear-plant`     | `x`, `S`, `A`, `J`                               |
//! | `symbolic-map`     | fixture symbols as reals                         |
//!
//! Parameters missing from the spec take the documented defaults from
//! [`default_parameters`]; unknown names are rejected.

pub mod goy;
pub mod linear;
pub mod logistic;
pub mod lorenz96;
pub mod symbolic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::control::{rollout, ControllerParams, Plant, Rollout};
use crate::discretization::SignalMatrix;
use crate::error::{Error, Result};

pub use goy::{GoyModel, GoyParams, GoyPlant};
pub use linear::{LinearPlant, LinearPlantParams};
pub use symbolic::{fixture, symbolic_map_suite, SymbolicFixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    CoupledLogistic,
    #[serde(rename = "lorenz96")]
    Lorenz96,
    GoyShell,
    LinearPlant,
    SymbolicMap,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::CoupledLogistic => "coupled-logistic",
            SystemKind::Lorenz96 => "lorenz96",
            SystemKind::GoyShell => "goy-shell",
            SystemKind::LinearPlant => "linear-plant",
            SystemKind::SymbolicMap => "symbolic-map",
        }
    }

    /// Default integrator step for continuous systems.
    pub fn default_dt(self) -> Option<f64> {
        match self {
            SystemKind::Lorenz96 => Some(0.01),
            SystemKind::GoyShell => Some(1e-3),
            _ => None,
        }
    }
}

/// Goy-shell observable selector values for the `observable` parameter.
pub const GOY_BAND_FLUX: f64 = 0.0;
pub const GOY_SHELL_FLUX: f64 = 1.0;
pub const GOY_SHELL_ENERGY: f64 = 2.0;

/// Every accepted parameter of a kind with its default value.
pub fn default_parameters(kind: SystemKind) -> BTreeMap<String, f64> {
    let table: &[(&str, f64)] = match kind {
        SystemKind::CoupledLogistic => &[("r", 4.0), ("coupling", 0.0)],
        SystemKind::Lorenz96 => &[("n_sites", 8.0), ("forcing", 8.0), ("sample_every", 5.0)],
        SystemKind::GoyShell => &[
            ("n_shells", 16.0),
            ("lambda", 2.0),
            ("k0", 0.0625),
            ("epsilon", 0.5),
            ("nu", 1e-5),
            ("forcing", 5e-3),
            ("forcing_shell", 3.0),
            ("init_amplitude", 0.01),
            ("sample_every", 20.0),
            ("band_first", 5.0),
            ("band_size", 2.0),
            ("n_bands", 4.0),
            ("observable", GOY_BAND_FLUX),
        ],
        SystemKind::LinearPlant => &[
            ("a", 0.9),
            ("b", 1.0),
            ("process_noise", 1.0),
            ("sensor_noise", 0.5),
            ("sensor_center", 5.0),
            ("sensor_width", 2.0),
            ("sensor_position", 5.0),
            ("beta", 0.0),
        ],
        SystemKind::SymbolicMap => &[("fixture", 0.0)],
    };
    table.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Description of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    /// Total number of samples, transient included.
    pub n_steps: usize,
    #[serde(default)]
    pub transient_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Integrator step for continuous systems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, n_steps: usize, transient_steps: usize, seed: u64) -> Self {
        Self { kind, parameters: BTreeMap::new(), n_steps, transient_steps, seed, dt: None }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    /// The spec with every default filled in, after validation.
    pub fn resolved(&self) -> Result<SystemSpec> {
        if self.n_steps <= self.transient_steps {
            return Err(Error::InvalidSystem(format!(
                "n_steps ({}) must exceed transient_steps ({})",
                self.n_steps, self.transient_steps
            )));
        }
        if self.n_steps - self.transient_steps < 2 {
            return Err(Error::InvalidSystem("at least 2 recorded samples are required".into()));
        }
        let mut parameters = default_parameters(self.kind);
        for (k, &v) in &self.parameters {
            if !parameters.contains_key(k) {
                return Err(Error::InvalidSystem(format!("unknown parameter {k:?} for {}", self.kind.name())));
            }
            if !v.is_finite() {
                return Err(Error::InvalidSystem(format!("parameter {k:?} is not finite")));
            }
            parameters.insert(k.clone(), v);
        }
        let dt = match (self.kind.default_dt(), self.dt) {
            (None, Some(_)) => {
                return Err(Error::InvalidSystem(format!("{} is a discrete map and takes no dt", self.kind.name())))
            }
            (None, None) => None,
            (Some(d), None) => Some(d),
            (Some(_), Some(d)) if d > 0.0 && d.is_finite() => Some(d),
            (Some(_), Some(d)) => return Err(Error::InvalidSystem(format!("dt must be positive, got {d}"))),
        };
        Ok(SystemSpec { parameters, dt, ..self.clone() })
    }

    fn param(&self, name: &str) -> f64 {
        self.parameters[name]
    }

    fn count(&self, name: &str) -> Result<usize> {
        let v = self.param(name);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidSystem(format!("parameter {name:?} must be a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    fn goy_params(&self) -> Result<GoyParams> {
        Ok(GoyParams {
            n_shells: self.count("n_shells")?,
            lambda: self.param("lambda"),
            k0: self.param("k0"),
            epsilon: self.param("epsilon"),
            nu: self.param("nu"),
            forcing: self.param("forcing"),
            forcing_shell: self.count("forcing_shell")?,
            dt: self.dt.expect("resolved continuous spec has dt"),
            closure: Vec::new(),
        })
    }

    fn linear_params(&self) -> LinearPlantParams {
        LinearPlantParams {
            a: self.param("a"),
            b: self.param("b"),
            process_noise: self.param("process_noise"),
            sensor_noise: self.param("sensor_noise"),
            sensor_center: self.param("sensor_center"),
            sensor_width: self.param("sensor_width"),
        }
    }
}

fn drop_transient(cols: Vec<Vec<f64>>, transient: usize) -> Vec<Vec<f64>> {
    cols.into_iter().map(|c| c[transient..].to_vec()).collect()
}

/// Runs a system and returns its labeled observables with the transient
/// removed. Deterministic given the spec.
pub fn simulate(spec: &SystemSpec) -> Result<SignalMatrix> {
    let spec = spec.resolved()?;
    let (n, skip) = (spec.n_steps, spec.transient_steps);
    match spec.kind {
        SystemKind::CoupledLogistic => {
            let p = logistic::LogisticParams { r: spec.param("r"), coupling: spec.param("coupling") };
            let [x, y] = logistic::orbit(p, n, spec.seed)?;
            let cols = drop_transient(vec![x, y], skip);
            SignalMatrix::from_columns(cols, vec!["x".into(), "y".into()], 1.0)
        }
        SystemKind::Lorenz96 => {
            let p = lorenz96::Lorenz96Params {
                n_sites: spec.count("n_sites")?,
                forcing: spec.param("forcing"),
                dt: spec.dt.expect("resolved"),
                sample_every: spec.count("sample_every")?,
            };
            let cols = drop_transient(lorenz96::trajectory(p, n, spec.seed)?, skip);
            let names = (0..p.n_sites).map(|i| format!("x{i}")).collect();
            SignalMatrix::from_columns(cols, names, p.dt * p.sample_every as f64)
        }
        SystemKind::GoyShell => simulate_goy(&spec),
        SystemKind::LinearPlant => {
            let controller = ControllerParams::new(
                vec![spec.param("sensor_position")],
                vec![spec.param("beta")],
                vec![(f64::NEG_INFINITY, f64::INFINITY)],
                vec![(f64::NEG_INFINITY, f64::INFINITY)],
            )?;
            let mut plant = LinearPlant::new(spec.linear_params(), spec.seed)?;
            rollout_signal(&mut plant, &controller, &spec, 1.0)
        }
        SystemKind::SymbolicMap => {
            let suite = symbolic_map_suite();
            let idx = spec.count("fixture")?;
            let f = suite.get(idx).ok_or_else(|| Error::InvalidSystem(format!("fixture index {idx} out of range")))?;
            let s = f.trajectory(n, spec.seed)?;
            let cols = (0..s.n_vars()).map(|v| s.codes(v)[skip..].iter().map(|&c| c as f64).collect()).collect();
            let names = (0..s.n_vars()).map(|v| format!("q{v}")).collect();
            SignalMatrix::from_columns(cols, names, 1.0)
        }
    }
}

fn simulate_goy(spec: &SystemSpec) -> Result<SignalMatrix> {
    let params = spec.goy_params()?;
    let sample_every = spec.count("sample_every")?.max(1);
    let mut model = GoyModel::new(params.clone())?;
    model.randomize(&mut crate::rng::stream(spec.seed, 0), spec.param("init_amplitude"));
    let observable = spec.param("observable");
    let n_shells = params.n_shells;
    let (first, size, n_bands) = (spec.count("band_first")?, spec.count("band_size")?, spec.count("n_bands")?);
    if observable == GOY_BAND_FLUX && (size == 0 || n_bands == 0 || first + size * n_bands > n_shells) {
        return Err(Error::InvalidSystem(format!(
            "bands {first}..{} exceed {n_shells} shells",
            first + size * n_bands
        )));
    }
    let n_cols = if observable == GOY_BAND_FLUX { n_bands } else { n_shells };
    let kept = spec.n_steps - spec.transient_steps;
    let mut cols = vec![Vec::with_capacity(kept); n_cols];
    for step in 0..spec.n_steps {
        if step >= spec.transient_steps {
            let values = if observable == GOY_BAND_FLUX {
                let pi = model.fluxes();
                (0..n_bands)
                    .map(|b| pi[first + b * size..first + (b + 1) * size].iter().sum::<f64>() / size as f64)
                    .collect()
            } else if observable == GOY_SHELL_FLUX {
                model.fluxes()
            } else if observable == GOY_SHELL_ENERGY {
                model.shell_energies()
            } else {
                return Err(Error::InvalidSystem(format!("unknown goy observable {observable}")));
            };
            for (c, v) in cols.iter_mut().zip(values) {
                c.push(v);
            }
        }
        for _ in 0..sample_every {
            model.step().map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { step, detail },
                other => other,
            })?;
        }
    }
    let names = if observable == GOY_BAND_FLUX {
        (0..n_bands).map(|b| format!("pi_b{b}")).collect()
    } else if observable == GOY_SHELL_FLUX {
        (0..n_shells).map(|n| format!("pi_{n}")).collect()
    } else {
        (0..n_shells).map(|n| format!("e_{n}")).collect()
    };
    SignalMatrix::from_columns(cols, names, params.dt * sample_every as f64)
}

fn rollout_signal<P: Plant>(
    plant: &mut P,
    controller: &ControllerParams,
    spec: &SystemSpec,
    dt: f64,
) -> Result<SignalMatrix> {
    let r = rollout(plant, controller, spec.n_steps, spec.transient_steps, spec.seed)?;
    let (cols, names) = rollout_columns(&r);
    SignalMatrix::from_columns(cols, names, dt)
}

/// Flattens a rollout into `(x.., S.., A.., J..)` columns.
pub fn rollout_columns(r: &Rollout) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut cols = Vec::new();
    let mut names = Vec::new();
    for (label, channel) in [("x", &r.q), ("S", &r.s), ("A", &r.a), ("J", &r.j)] {
        let width = channel.first().map_or(0, Vec::len);
        for c in 0..width {
            cols.push(Rollout::component(channel, c));
            names.push(if width == 1 { label.to_string() } else { format!("{label}{c}") });
        }
    }
    (cols, names)
}

/// Proportional opposition law `A = -beta S`, the only law supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlLaw {
    #[default]
    ProportionalOpposition,
}

/// Runs a linear-plant or goy-shell system under `law` with `controller`,
/// recording `(Q-proxy, S, A, J)` channels.
pub fn simulate_controlled(spec: &SystemSpec, controller: &ControllerParams, law: ControlLaw) -> Result<SignalMatrix> {
    let ControlLaw::ProportionalOpposition = law;
    controller.validate()?;
    if controller.theta_s.is_empty() || controller.theta_aa.is_empty() {
        return Err(Error::InvalidArgument("controller needs a sensor parameter and a gain".into()));
    }
    let spec = spec.resolved()?;
    let mut plant = build_plant(&spec)?;
    let dt = match &plant {
        AnyPlant::Linear(_) => 1.0,
        AnyPlant::Goy(_) => spec.dt.expect("resolved") * spec.count("sample_every")?.max(1) as f64,
    };
    rollout_signal(&mut plant, controller, &spec, dt)
}

/// Either controllable plant kind, built from a spec.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyPlant {
    Linear(LinearPlant),
    Goy(GoyPlant),
}

/// Builds the plant described by a linear-plant or goy-shell spec.
pub fn build_plant(spec: &SystemSpec) -> Result<AnyPlant> {
    let spec = spec.resolved()?;
    match spec.kind {
        SystemKind::LinearPlant => Ok(AnyPlant::Linear(LinearPlant::new(spec.linear_params(), spec.seed)?)),
        SystemKind::GoyShell => {
            let sample_every = spec.count("sample_every")?.max(1);
            Ok(AnyPlant::Goy(GoyPlant::new(spec.goy_params()?, sample_every, spec.param("init_amplitude"), spec.seed)?))
        }
        other => Err(Error::InvalidSystem(format!("{} cannot be controlled", other.name()))),
    }
}

macro_rules! delegate {
    ($self:ident, $p:ident => $e:expr) => {
        match $self {
            AnyPlant::Linear($p) => $e,
            AnyPlant::Goy($p) => $e,
        }
    };
}

impl Plant for AnyPlant {
    fn reset(&mut self, seed: u64) {
        delegate!(self, p => p.reset(seed))
    }

    fn set_passive(&mut self, theta_pa: &[f64]) {
        delegate!(self, p => p.set_passive(theta_pa))
    }

    fn sense(&mut self, theta_s: &[f64]) -> Vec<f64> {
        delegate!(self, p => p.sense(theta_s))
    }

    fn step(&mut self, actuation: &[f64]) -> Result<Vec<f64>> {
        delegate!(self, p => p.step(actuation))
    }

    fn target(&self, state: &[f64]) -> Vec<f64> {
        delegate!(self, p => p.target(state))
    }

    fn state(&self) -> Vec<f64> {
        delegate!(self, p => p.state())
    }

    fn proxy(&self, state: &[f64]) -> Vec<f64> {
        delegate!(self, p => p.proxy(state))
    }
}
