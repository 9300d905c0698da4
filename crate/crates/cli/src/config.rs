//! Config schemas of the subcommands.
//!
//! Relative paths inside a config are resolved against the directory of the
//! config file.

use std::path::{Path, PathBuf};

use infoflux::causality::DEFAULT_SUBSET_CAP;
use infoflux::control::{ControlOptions, ControlTarget, ControllerParams};
use infoflux::discretization::BinCount;
use infoflux::modeling::{KlFitOptions, ModelParams};
use infoflux::systems::{SystemKind, SystemSpec};
use infoflux::PartitionSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::families::Family;
use crate::{CliError, RunArgs};

/// Reads and validates a config file.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let err = |message: String| CliError::Config { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Resolves `path` against the directory holding the config.
pub fn resolve_path(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    config.parent().map_or_else(|| path.to_path_buf(), |dir| dir.join(path))
}

/// Rejects flags a command does not use.
pub fn reject_flags(args: &RunArgs, command: &'static str, flags: &[&'static str]) -> Result<(), CliError> {
    for &flag in flags {
        let set = match flag {
            "seed" => args.seed.is_some(),
            "bins" => args.bins.is_some(),
            "lag" => args.lag.is_some(),
            "order" => args.order.is_some(),
            "tolerance" => args.tolerance.is_some(),
            _ => false,
        };
        if set {
            return Err(CliError::Flag { flag, command });
        }
    }
    Ok(())
}

pub fn override_bins(partition: &mut PartitionSpec, bins: Option<usize>) {
    if let Some(b) = bins {
        partition.bins = BinCount::All(b);
    }
}

fn one() -> usize {
    1
}

fn unit_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub format: SignalFormat,
}

/// Where a signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSource {
    /// A CSV file with a header row.
    Csv {
        path: PathBuf,
        #[serde(default = "unit_dt")]
        dt: f64,
    },
    /// A little-endian binary file with its JSON sidecar.
    Binary { path: PathBuf },
    /// A simulated system.
    System(SystemSpec),
    /// A symbolic fixture: exact transition PMF when `n_samples` is absent,
    /// otherwise a sampled trajectory.
    Fixture {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_samples: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

impl InputSource {
    fn set_seed(&mut self, seed: u64) {
        match self {
            InputSource::System(spec) => spec.seed = seed,
            InputSource::Fixture { seed: s, .. } => *s = seed,
            _ => {}
        }
    }
}

fn default_identity_tolerance() -> f64 {
    1e-10
}

fn default_cap() -> u64 {
    DEFAULT_SUBSET_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalityConfig {
    pub input: InputSource,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default = "one")]
    pub lag: usize,
    /// Source-subset size of the map (1, 2 or 3).
    #[serde(default = "one")]
    pub order: usize,
    /// Targets of the full decomposition; all variables when absent.
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
    #[serde(default = "default_cap")]
    pub subset_cap: u64,
    #[serde(default = "default_identity_tolerance")]
    pub identity_tolerance: f64,
}

impl CausalityConfig {
    pub fn apply(&mut self, args: &RunArgs) -> Result<(), CliError> {
        if let Some(s) = args.seed {
            self.input.set_seed(s);
        }
        override_bins(&mut self.partition, args.bins);
        self.lag = args.lag.unwrap_or(self.lag);
        self.order = args.order.unwrap_or(self.order);
        self.identity_tolerance = args.tolerance.unwrap_or(self.identity_tolerance);
        if !(self.identity_tolerance >= 0.0) {
            return Err(CliError::Config {
                path: "identity_tolerance".into(),
                message: format!("must be >= 0, got {}", self.identity_tolerance),
            });
        }
        if let InputSource::System(spec) = &mut self.input {
            *spec = spec.resolved()?;
        }
        Ok(())
    }
}

/// Reference data of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSource {
    /// Samples of the family itself at known parameters.
    Theta {
        theta: Vec<f64>,
        /// Defaults to the fit seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Observed samples; columns are matched by position.
    Csv {
        path: PathBuf,
        #[serde(default = "unit_dt")]
        dt: f64,
    },
}

fn default_fit_partition() -> PartitionSpec {
    PartitionSpec::quantile(16)
}

fn default_floor() -> Option<f64> {
    Some(infoflux::infocore::KlOptions::DEFAULT_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlCheck {
    pub grid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub family: Family,
    pub reference: ReferenceSource,
    pub init: ModelParams,
    /// Observable columns of the family output; all when absent.
    #[serde(default)]
    pub columns: Option<Vec<usize>>,
    /// Partition of the reference; its cells are frozen for the whole fit.
    #[serde(default = "default_fit_partition")]
    pub partition: PartitionSpec,
    /// Floor on model masses in the KL; `null` for the plain divergence.
    #[serde(default = "default_floor")]
    pub kl_floor: Option<f64>,
    #[serde(default)]
    pub options: KlFitOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ml_check: Option<MlCheck>,
}

impl FitConfig {
    pub fn apply(&mut self, args: &RunArgs) -> Result<(), CliError> {
        reject_flags(args, "fit", &["lag", "order"])?;
        if let Some(s) = args.seed {
            self.options.seed = s;
            if let ReferenceSource::Theta { seed, .. } = &mut self.reference {
                *seed = None;
            }
        }
        if let ReferenceSource::Theta { seed, .. } = &mut self.reference {
            seed.get_or_insert(self.options.seed);
        }
        override_bins(&mut self.partition, args.bins);
        if let Some(t) = args.tolerance {
            self.options.descent.tol = t;
        }
        let n_out = self.family.columns().len();
        let columns = self.columns.get_or_insert_with(|| (0..n_out).collect());
        if let Some(&c) = columns.iter().find(|&&c| c >= n_out) {
            return Err(CliError::Config {
                path: "columns".into(),
                message: format!("column {c} out of range for {} outputs", n_out),
            });
        }
        if self.init.theta.len() != self.family.n_params() {
            return Err(CliError::Config {
                path: "init".into(),
                message: format!("{} takes {} parameters", self.family.name(), self.family.n_params()),
            });
        }
        Ok(())
    }
}

/// A controllable plant without run length or seed, which come from the
/// control options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: SystemKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl PlantConfig {
    pub fn spec(&self, opts: &ControlOptions) -> SystemSpec {
        SystemSpec {
            kind: self.kind,
            parameters: self.parameters.clone(),
            n_steps: opts.n_steps,
            transient_steps: opts.transient,
            seed: opts.seed,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub plant: PlantConfig,
    pub target: ControlTarget,
    pub init: ControllerParams,
    #[serde(default)]
    pub options: ControlOptions,
}

impl ControlConfig {
    pub fn apply(&mut self, args: &RunArgs) -> Result<(), CliError> {
        reject_flags(args, "control", &["lag", "order"])?;
        if let Some(s) = args.seed {
            self.options.seed = s;
        }
        if let Some(b) = args.bins {
            self.options.info_bins = b;
        }
        if let Some(t) = args.tolerance {
            self.options.descent.tol = t;
        }
        let resolved = self.plant.spec(&self.options).resolved()?;
        self.plant.parameters = resolved.parameters;
        self.plant.dt = resolved.dt;
        Ok(())
    }
}
