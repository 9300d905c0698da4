//! Information-theoretic control analysis and the KL-minimizing controller
//! search.
//!
//! The analysis functions work on exact or estimated joint PMFs of the
//! target `J`, sensor `S`, actuator `A` and a state proxy `Q`:
//! loop classification from `I(A; Q)`, channel capacity, observability
//! `O_J = I(J; S) / H(J)`, controllability `C_J = I(J+; A) / H(J+)` and the
//! missing information `(1 - score) H`.
//!
//! [`optimize_controller`] searches sensor, passive and active actuator
//! parameters of a [`Plant`] in three alternating steps: raise `I(J; S)`
//! over the sensor parameters (and `I(J; A)` over the passive ones), then
//! lower `KL(J+, J^)` over the active ones, where `J^ = Gamma J + b` is `J`
//! affinely reshaped towards the target moments, relaxed by factors that
//! shrink every outer iteration.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{discretize, estimate_joint_pmf, JointPMF, PartitionSpec, SignalMatrix, SymbolSeries};
use crate::error::{Error, Result};
use crate::infocore::{entropy, kl_divergence, kl_divergence_with, mutual_information, Bits, KlOptions};
use crate::optim::{maximize, minimize, DescentOptions};
use crate::rng::stream;

/// Closed interval per parameter.
pub type Bounds = Vec<(f64, f64)>;

/// Controller parameters split into sensor, passive-actuator and
/// active-actuator blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerParams {
    pub theta_s: Vec<f64>,
    #[serde(default)]
    pub theta_pa: Vec<f64>,
    pub theta_aa: Vec<f64>,
    pub bounds_s: Bounds,
    #[serde(default)]
    pub bounds_pa: Bounds,
    pub bounds_aa: Bounds,
}

fn check_block(name: &str, values: &[f64], bounds: &Bounds) -> Result<()> {
    if values.len() != bounds.len() {
        return Err(Error::InvalidArgument(format!("{name}: {} values but {} bounds", values.len(), bounds.len())));
    }
    for (i, (&v, &(lo, hi))) in values.iter().zip(bounds).enumerate() {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("{name}[{i}]: empty range [{lo}, {hi}]")));
        }
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name}[{i}] = {v} outside [{lo}, {hi}]")));
        }
    }
    Ok(())
}

impl ControllerParams {
    pub fn new(theta_s: Vec<f64>, theta_aa: Vec<f64>, bounds_s: Bounds, bounds_aa: Bounds) -> Result<Self> {
        let p = Self { theta_s, theta_pa: Vec::new(), theta_aa, bounds_s, bounds_pa: Vec::new(), bounds_aa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_block("theta_s", &self.theta_s, &self.bounds_s)?;
        check_block("theta_pa", &self.theta_pa, &self.bounds_pa)?;
        check_block("theta_aa", &self.theta_aa, &self.bounds_aa)
    }
}

/// A controllable simulator.
///
/// Instances must be independent: the optimizer clones a plant per probe
/// and runs probes in parallel.
pub trait Plant: Send + Sync {
    /// Restarts the plant with fresh noise streams derived from `seed`.
    fn reset(&mut self, seed: u64);
    /// Applies passive actuator parameters; plants without any ignore this.
    fn set_passive(&mut self, _theta_pa: &[f64]) {}
    /// Sensor reading at the current state for sensor parameters `theta_s`.
    fn sense(&mut self, theta_s: &[f64]) -> Vec<f64>;
    /// Advances one step under `actuation`, returning the new state.
    fn step(&mut self, actuation: &[f64]) -> Result<Vec<f64>>;
    /// Control target `J` of a state.
    fn target(&self, state: &[f64]) -> Vec<f64>;
    /// Current state.
    fn state(&self) -> Vec<f64>;
    /// Low-dimensional stand-in for the state `Q` used in loop analysis.
    fn proxy(&self, state: &[f64]) -> Vec<f64> {
        state.to_vec()
    }
}

/// Q-proxy, sensor, actuation and target samples of one controlled run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub q: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    /// `J^n`.
    pub j: Vec<Vec<f64>>,
    /// `J^{n+1}`.
    pub j_next: Vec<Vec<f64>>,
}

impl Rollout {
    /// Samples of component `c` of a recorded channel.
    pub fn component(channel: &[Vec<f64>], c: usize) -> Vec<f64> {
        channel.iter().map(|v| v[c]).collect()
    }
}

/// Runs `plant` for `n_steps` under `A^n = -beta S^n` with
/// `beta = params.theta_aa[0]`, discarding the first `transient` steps.
pub fn rollout<P: Plant + ?Sized>(
    plant: &mut P,
    params: &ControllerParams,
    n_steps: usize,
    transient: usize,
    seed: u64,
) -> Result<Rollout> {
    if n_steps <= transient {
        return Err(Error::InvalidArgument(format!("n_steps {n_steps} must exceed transient {transient}")));
    }
    let beta = params.theta_aa.first().copied().unwrap_or(0.0);
    plant.reset(seed);
    plant.set_passive(&params.theta_pa);
    let mut out = Rollout::default();
    let kept = n_steps - transient;
    for c in [&mut out.q, &mut out.s, &mut out.a, &mut out.j, &mut out.j_next] {
        c.reserve(kept);
    }
    for n in 0..n_steps {
        let state = plant.state();
        let s = plant.sense(&params.theta_s);
        let a: Vec<f64> = s.iter().map(|v| -beta * v).collect();
        let next = plant.step(&a)?;
        if n >= transient {
            out.j.push(plant.target(&state));
            out.j_next.push(plant.target(&next));
            out.q.push(plant.proxy(&state));
            out.s.push(s);
            out.a.push(a);
        }
    }
    Ok(out)
}

/// Mutual information treated as zero for open loops on exact PMFs.
pub const EXACT_OPEN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub kind: LoopKind,
    /// `I(A; Q)`.
    pub actuator_info: Bits,
    /// `I(S; Q)`.
    pub sensor_info: Bits,
    pub threshold: f64,
}

/// Classifies a loop from a joint PMF over `(Q, S, A)`.
///
/// The loop is open when `I(A; Q) <= threshold`. When `actuator_noise_free`
/// is set, `A` is a function of `S` and data processing requires
/// `I(A; Q) <= I(S; Q)`; a violation is reported as an error.
pub fn classify_loop(joint: &JointPMF, threshold: f64, actuator_noise_free: bool) -> Result<LoopReport> {
    if joint.n_dims() != 3 {
        return Err(Error::DimensionMismatch(format!("expected a (Q, S, A) joint, got {} dims", joint.n_dims())));
    }
    let actuator_info = mutual_information(joint, &[2], &[0])?;
    let sensor_info = mutual_information(joint, &[1], &[0])?;
    if actuator_noise_free && actuator_info.0 > sensor_info.0 + 1e-10 {
        return Err(Error::DataProcessingViolation(format!(
            "I(A;Q) = {} exceeds I(S;Q) = {}",
            actuator_info, sensor_info
        )));
    }
    let kind = if actuator_info.0 <= threshold { LoopKind::Open } else { LoopKind::Closed };
    Ok(LoopReport { kind, actuator_info, sensor_info, threshold })
}

/// Estimated MI noise floor between variables `a` and `b` of `symbols`: the
/// mean plug-in MI after randomly permuting `b`, over `n_shuffles` draws.
pub fn mi_noise_floor(symbols: &SymbolSeries, a: usize, b: usize, n_shuffles: usize, seed: u64) -> Result<f64> {
    if n_shuffles == 0 {
        return Err(Error::InvalidArgument("need at least one shuffle".into()));
    }
    let total: f64 = (0..n_shuffles)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut shuffled = symbols.codes(b).to_vec();
            shuffled.shuffle(&mut stream(seed, k as u64));
            let pair = SymbolSeries::from_codes(
                vec![symbols.codes(a).to_vec(), shuffled],
                vec![symbols.alphabet()[a], symbols.alphabet()[b]],
            )?;
            let joint = estimate_joint_pmf(&pair, &[(0, 0), (1, 0)])?;
            Ok(mutual_information(&joint, &[0], &[1])?.0)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(total / n_shuffles as f64)
}

/// Open/closed threshold for sampled PMFs: three times the shuffle floor.
pub fn sampled_open_threshold(symbols: &SymbolSeries, q: usize, a: usize, seed: u64) -> Result<f64> {
    Ok(3.0 * mi_noise_floor(symbols, a, q, 20, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub bits: Bits,
    /// Capacity-achieving input distribution.
    pub input: Vec<f64>,
    pub iterations: usize,
}

/// Capacity of a discrete memoryless channel `channel[s][a] = p(a | s)` by
/// Blahut-Arimoto iteration from the uniform input, stopped when the upper
/// and lower capacity estimates are within `tol` bits.
pub fn channel_capacity(channel: &[Vec<f64>], tol: f64) -> Result<CapacityReport> {
    if channel.is_empty() || channel[0].is_empty() {
        return Err(Error::InvalidPmf("empty channel".into()));
    }
    let n_out = channel[0].len();
    for (s, row) in channel.iter().enumerate() {
        if row.len() != n_out {
            return Err(Error::InvalidPmf(format!("row {s} has {} outputs, expected {n_out}", row.len())));
        }
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPmf(format!("row {s} is not a distribution")));
        }
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let n_in = channel.len();
    let mut p = vec![1.0 / n_in as f64; n_in];
    let divergences = |p: &[f64]| -> Vec<f64> {
        let q: Vec<f64> = (0..n_out).map(|a| (0..n_in).map(|s| p[s] * channel[s][a]).sum()).collect();
        channel
            .iter()
            .map(|row| row.iter().zip(&q).filter(|(w, _)| **w > 0.0).map(|(w, qa)| w * (w / qa).log2()).sum())
            .collect()
    };
    const MAX_ITER: usize = 100_000;
    for it in 0..MAX_ITER {
        let d = divergences(&p);
        let info: f64 = p.iter().zip(&d).map(|(pi, di)| pi * di).sum();
        let upper = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if upper - info < tol {
            return Ok(CapacityReport { bits: Bits(info.max(0.0)), input: p, iterations: it });
        }
        let w: Vec<f64> = p.iter().zip(&d).map(|(pi, di)| pi * di.exp2()).collect();
        let z: f64 = w.iter().sum();
        p = w.into_iter().map(|x| x / z).collect();
    }
    let d = divergences(&p);
    let info: f64 = p.iter().zip(&d).map(|(pi, di)| pi * di).sum();
    log::warn!("capacity iteration hit {MAX_ITER} iterations");
    Ok(CapacityReport { bits: Bits(info.max(0.0)), input: p, iterations: MAX_ITER })
}

fn normalized_information(joint: &JointPMF) -> Result<f64> {
    if joint.n_dims() != 2 {
        return Err(Error::DimensionMismatch(format!("expected a 2-variable joint, got {}", joint.n_dims())));
    }
    let h = entropy(joint, &[0])?.0;
    if h <= 1e-15 {
        return Err(Error::ZeroTargetEntropy);
    }
    Ok((mutual_information(joint, &[0], &[1])?.0 / h).clamp(0.0, 1.0))
}

/// `O_J = I(J; S) / H(J)` for a joint over `(J, S)`.
pub fn observability(joint: &JointPMF) -> Result<f64> {
    normalized_information(joint)
}

/// `C_J = I(J+; A) / H(J+)` for a joint over `(J+, A)`.
///
/// The caller asserts that every target state is reachable by some control.
pub fn controllability(joint: &JointPMF) -> Result<f64> {
    normalized_information(joint)
}

/// `(1 - score) * entropy`.
pub fn missing_information(entropy: Bits, score: f64) -> Result<Bits> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidArgument(format!("score {score} outside [0, 1]")));
    }
    Ok(Bits((1.0 - score) * entropy.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyObservability {
    /// `1 - I(W; S) / H(J)`.
    pub bound: f64,
    pub observability: f64,
    /// `observability <= bound + 1e-10`.
    pub holds: bool,
}

/// Observability ceiling imposed by sensor noise, for a joint over
/// `(J, S, W)`.
///
/// The inequality `O_J <= 1 - I(W; S) / H(J)` needs `W` independent of `J`
/// and `H(S) <= H(J)`; `holds` reports whether it is met.
pub fn noisy_observability_bound(joint: &JointPMF) -> Result<NoisyObservability> {
    if joint.n_dims() != 3 {
        return Err(Error::DimensionMismatch(format!("expected a (J, S, W) joint, got {} dims", joint.n_dims())));
    }
    let h = entropy(joint, &[0])?.0;
    if h <= 1e-15 {
        return Err(Error::ZeroTargetEntropy);
    }
    let bound = 1.0 - mutual_information(joint, &[2], &[1])?.0 / h;
    let obs = observability(&joint.marginalize(&[0, 1])?)?;
    Ok(NoisyObservability { bound, observability: obs, holds: obs <= bound + 1e-10 })
}

/// Targeted statistics of `J` and the initial relaxation factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTarget {
    pub mu_target: Vec<f64>,
    /// Target covariance; only its diagonal shapes the auxiliary target.
    pub sigma_target: Vec<Vec<f64>>,
    #[serde(default = "default_relax")]
    pub relax_mu: f64,
    #[serde(default = "default_relax")]
    pub relax_sigma: f64,
}

fn default_relax() -> f64 {
    0.6
}

impl ControlTarget {
    pub fn scalar(mean: f64, variance: f64) -> Self {
        Self { mu_target: vec![mean], sigma_target: vec![vec![variance]], relax_mu: 0.6, relax_sigma: 0.6 }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mu_target.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty control target".into()));
        }
        if self.sigma_target.len() != n || self.sigma_target.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("target covariance must be {n}x{n}")));
        }
        if (0..n).any(|i| !(self.sigma_target[i][i] >= 0.0)) {
            return Err(Error::InvalidArgument("target variances must be non-negative".into()));
        }
        for x in [self.relax_mu, self.relax_sigma] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidArgument(format!("relaxation factor {x} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Samples of `J^ = Gamma J + b` with diagonal `Gamma`, matching the relaxed
/// moments `mu_rel = (1 - xi_mu) mu_D + xi_mu mu^` and
/// `var_rel = (1 - xi_sigma) var_D + xi_sigma var^` exactly (population
/// moments). `relax` is `(xi_mu, xi_sigma)`, each in `[0, 1]`.
pub fn auxiliary_samples(samples: &SignalMatrix, target: &ControlTarget, relax: (f64, f64)) -> Result<SignalMatrix> {
    let n = samples.n_vars();
    if target.mu_target.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} target variables but {} target means",
            target.mu_target.len()
        )));
    }
    let (xm, xs) = relax;
    if !(0.0..=1.0).contains(&xm) || !(0.0..=1.0).contains(&xs) {
        return Err(Error::InvalidArgument(format!("relaxation {relax:?} outside [0, 1]")));
    }
    let n_t = samples.n_samples() as f64;
    let mut cols = Vec::with_capacity(n);
    for v in 0..n {
        let col = samples.column(v);
        let mean = col.iter().sum::<f64>() / n_t;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n_t;
        let mu_rel = (1.0 - xm) * target.mu_target[v] + xm * mean;
        let var_rel = (1.0 - xs) * target.sigma_target[v][v] + xs * var;
        let gamma = if var > 0.0 {
            (var_rel / var).sqrt()
        } else if var_rel > 0.0 {
            return Err(Error::DegenerateRescale(format!("variable {v} has zero variance")));
        } else {
            1.0
        };
        let b = mu_rel - gamma * mean;
        cols.push(col.iter().map(|x| gamma * x + b).collect());
    }
    SignalMatrix::from_columns(cols, samples.names().to_vec(), samples.dt())
}

/// Joint PMF of `values` (columns) on fixed per-variable `edges`.
pub fn pmf_on_edges(values: &SignalMatrix, edges: &[Vec<f64>]) -> Result<JointPMF> {
    if edges.len() != values.n_vars() {
        return Err(Error::DimensionMismatch(format!("{} edge sets for {} variables", edges.len(), values.n_vars())));
    }
    let symbols = discretize(values, &PartitionSpec::explicit_per_variable(edges.to_vec()))?;
    let sel: Vec<(usize, usize)> = (0..values.n_vars()).map(|v| (v, 0)).collect();
    estimate_joint_pmf(&symbols, &sel)
}

/// PMF of the auxiliary target `J^` on the reference partition `edges`.
pub fn build_auxiliary_target(
    samples: &SignalMatrix,
    target: &ControlTarget,
    relax: (f64, f64),
    edges: &[Vec<f64>],
) -> Result<JointPMF> {
    pmf_on_edges(&auxiliary_samples(samples, target, relax)?, edges)
}

/// `KL(jn1, reference)` on matched partitions.
pub fn kl_to_reference(jn1: &JointPMF, reference: &JointPMF) -> Result<Bits> {
    kl_divergence(jn1, reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlOptions {
    /// Plant steps per rollout, transient included.
    pub n_steps: usize,
    pub transient: usize,
    /// Seed shared by every rollout (common random numbers).
    pub seed: u64,
    /// Cells of the reference partition of `J`.
    pub target_bins: usize,
    /// Quantile cells for `S`, `A` and `J` in mutual-information estimates.
    pub info_bins: usize,
    pub max_outer: usize,
    pub relax_decay: f64,
    pub relax_floor: f64,
    /// Floor on reference masses in the KL objective.
    pub kl_floor: f64,
    pub descent: DescentOptions,
}

impl Default for ControlOptions {
    fn default() -> Self {
        Self {
            n_steps: 100_000,
            transient: 1_000,
            seed: 0,
            target_bins: 16,
            info_bins: 8,
            max_outer: 20,
            relax_decay: 0.5,
            relax_floor: 1e-3,
            kl_floor: KlOptions::DEFAULT_FLOOR,
            descent: DescentOptions { max_iter: 50, fd_width_fraction: Some(1e-3), ..DescentOptions::default() },
        }
    }
}

/// One outer iteration of the controller search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub iteration: usize,
    pub theta: ControllerParams,
    pub kl: f64,
    pub obs_mi: f64,
    pub ctrl_mi: f64,
    pub relax: (f64, f64),
    pub accepted: bool,
    /// Set when the plant failed and the gain bounds were contracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlTrace {
    pub records: Vec<ControlRecord>,
}

impl ControlTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &ControlRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Whether accepted KL values strictly decrease.
    pub fn is_strictly_decreasing(&self) -> bool {
        let kl: Vec<f64> = self.accepted().map(|r| r.kl).collect();
        kl.windows(2).all(|w| w[1] < w[0])
    }
}

/// Quantities of one controlled rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `KL(J+, J^)` against the unrelaxed target.
    pub kl: f64,
    pub obs_mi: f64,
    pub ctrl_mi: f64,
    pub j_next: SignalMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub params: ControllerParams,
    pub kl: f64,
    pub initial_kl: f64,
    /// Reference partition of `J`.
    pub target_edges: Vec<Vec<f64>>,
    pub trace: ControlTrace,
}

fn channel_matrix(channel: &[Vec<f64>]) -> Result<SignalMatrix> {
    let width = channel.first().map_or(0, Vec::len);
    let cols = (0..width).map(|c| Rollout::component(channel, c)).collect();
    let names = (0..width).map(|c| format!("v{c}")).collect();
    SignalMatrix::from_columns(cols, names, 1.0)
}

/// Plug-in `I(X; Y)` with quantile bins; zero when either side is constant.
fn binned_mi(x: &[Vec<f64>], y: &[Vec<f64>], bins: usize) -> Result<f64> {
    let constant = |ch: &[Vec<f64>]| ch.iter().all(|v| v == &ch[0]);
    if constant(x) || constant(y) {
        return Ok(0.0);
    }
    let (mx, my) = (channel_matrix(x)?, channel_matrix(y)?);
    let (nx, ny) = (mx.n_vars(), my.n_vars());
    let mut cols = mx.columns().to_vec();
    cols.extend(my.columns().iter().cloned());
    let names = (0..nx + ny).map(|i| format!("v{i}")).collect();
    let joined = SignalMatrix::from_columns(cols, names, 1.0)?;
    let symbols = match discretize(&joined, &PartitionSpec::quantile(bins)) {
        Ok(s) => s,
        Err(Error::DegenerateVariable { .. }) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let sel: Vec<(usize, usize)> = (0..nx + ny).map(|v| (v, 0)).collect();
    let joint = estimate_joint_pmf(&symbols, &sel)?;
    let a: Vec<usize> = (0..nx).collect();
    let b: Vec<usize> = (nx..nx + ny).collect();
    Ok(mutual_information(&joint, &a, &b)?.0)
}

/// A plant, a target and the options of a controller search.
pub struct ControlProblem<'a, P: Plant + Clone> {
    plant: &'a P,
    target: &'a ControlTarget,
    opts: ControlOptions,
    edges: Vec<Vec<f64>>,
}

impl<'a, P: Plant + Clone> ControlProblem<'a, P> {
    /// Fixes the reference partition of `J` from an uncontrolled rollout
    /// (`reference` with zero active gain): `target_bins` equal cells over
    /// the range of `J+` widened by 25% on each side.
    pub fn new(
        plant: &'a P,
        target: &'a ControlTarget,
        reference: &ControllerParams,
        opts: ControlOptions,
    ) -> Result<Self> {
        target.validate()?;
        reference.validate()?;
        if opts.target_bins < 2 || opts.info_bins < 2 {
            return Err(Error::InvalidArgument("need at least 2 bins".into()));
        }
        let mut free = reference.clone();
        free.theta_aa.iter_mut().for_each(|x| *x = 0.0);
        let r = rollout(&mut plant.clone(), &free, opts.n_steps, opts.transient, opts.seed)?;
        let j = channel_matrix(&r.j_next)?;
        if j.n_vars() != target.mu_target.len() {
            return Err(Error::DimensionMismatch(format!(
                "plant target has {} components, control target {}",
                j.n_vars(),
                target.mu_target.len()
            )));
        }
        let edges = j
            .columns()
            .iter()
            .map(|c| {
                let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let pad = 0.25 * (hi - lo).max(1e-12);
                let (lo, hi) = (lo - pad, hi + pad);
                (0..=opts.target_bins).map(|k| lo + (hi - lo) * k as f64 / opts.target_bins as f64).collect()
            })
            .collect();
        Ok(Self { plant, target, opts, edges })
    }

    pub fn target_edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn options(&self) -> &ControlOptions {
        &self.opts
    }

    fn run(&self, params: &ControllerParams) -> Result<Rollout> {
        rollout(&mut self.plant.clone(), params, self.opts.n_steps, self.opts.transient, self.opts.seed)
    }

    fn kl_against(&self, j_next: &SignalMatrix, reference: &JointPMF) -> Result<f64> {
        let p = pmf_on_edges(j_next, &self.edges)?;
        let opts = KlOptions { epsilon_floor: Some(self.opts.kl_floor) };
        Ok(kl_divergence_with(&p, reference, opts)?.bits.0)
    }

    /// Rollout statistics at `params`, with the KL taken against the
    /// unrelaxed target.
    pub fn evaluate(&self, params: &ControllerParams) -> Result<Evaluation> {
        let r = self.run(params)?;
        let j_next = channel_matrix(&r.j_next)?;
        let reference = build_auxiliary_target(&j_next, self.target, (0.0, 0.0), &self.edges)?;
        let kl = self.kl_against(&j_next, &reference)?;
        let bins = self.opts.info_bins;
        Ok(Evaluation { kl, obs_mi: binned_mi(&r.j, &r.s, bins)?, ctrl_mi: binned_mi(&r.j_next, &r.a, bins)?, j_next })
    }

    /// The outer objective: `KL(J+, J^)` against the unrelaxed target.
    pub fn kl(&self, params: &ControllerParams) -> Result<f64> {
        Ok(self.evaluate(params)?.kl)
    }

    fn sensor_step(&self, params: &mut ControllerParams, gain: &[f64]) -> Result<()> {
        if params.theta_s.is_empty() {
            return Ok(());
        }
        let bins = self.opts.info_bins;
        let f = |ts: &[f64]| -> Result<f64> {
            let p = ControllerParams { theta_s: ts.to_vec(), theta_aa: gain.to_vec(), ..params.clone() };
            let r = self.run(&p)?;
            binned_mi(&r.j, &r.s, bins)
        };
        params.theta_s = maximize(f, &params.theta_s, &params.bounds_s, &self.opts.descent)?.theta;
        if !params.theta_pa.is_empty() {
            let f = |tp: &[f64]| -> Result<f64> {
                let p = ControllerParams { theta_pa: tp.to_vec(), theta_aa: gain.to_vec(), ..params.clone() };
                let r = self.run(&p)?;
                binned_mi(&r.j, &r.a, bins)
            };
            params.theta_pa = maximize(f, &params.theta_pa, &params.bounds_pa, &self.opts.descent)?.theta;
        }
        Ok(())
    }

    fn actuator_step(&self, params: &mut ControllerParams, relax: (f64, f64)) -> Result<()> {
        let current = channel_matrix(&self.run(params)?.j_next)?;
        let reference = build_auxiliary_target(&current, self.target, relax, &self.edges)?;
        let f = |ta: &[f64]| -> Result<f64> {
            let p = ControllerParams { theta_aa: ta.to_vec(), ..params.clone() };
            match self.run(&p) {
                Ok(r) => self.kl_against(&channel_matrix(&r.j_next)?, &reference),
                Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        };
        params.theta_aa = minimize(f, &params.theta_aa, &params.bounds_aa, &self.opts.descent)?.theta;
        Ok(())
    }

    /// Three-step search from `init`; returns the best parameters seen.
    pub fn optimize(&self, init: &ControllerParams) -> Result<ControlOutcome> {
        init.validate()?;
        let first = self.evaluate(init)?;
        let relax0 = (self.target.relax_mu, self.target.relax_sigma);
        let mut trace = ControlTrace {
            records: vec![ControlRecord {
                iteration: 0,
                theta: init.clone(),
                kl: first.kl,
                obs_mi: first.obs_mi,
                ctrl_mi: first.ctrl_mi,
                relax: relax0,
                accepted: true,
                failure: None,
            }],
        };
        let mut best = init.clone();
        let mut best_kl = first.kl;
        let mut relax = relax0;
        let mut bounds_aa = init.bounds_aa.clone();
        for iteration in 1..=self.opts.max_outer {
            let mut cand = ControllerParams { bounds_aa: bounds_aa.clone(), ..best.clone() };
            let gain = if iteration == 1 { vec![0.0; cand.theta_aa.len()] } else { cand.theta_aa.clone() };
            let step = self.sensor_step(&mut cand, &gain).and_then(|_| self.actuator_step(&mut cand, relax));
            let outcome = step.and_then(|_| self.evaluate(&cand));
            match outcome {
                Ok(e) => {
                    let accepted = e.kl < best_kl;
                    trace.records.push(ControlRecord {
                        iteration,
                        theta: cand.clone(),
                        kl: e.kl,
                        obs_mi: e.obs_mi,
                        ctrl_mi: e.ctrl_mi,
                        relax,
                        accepted,
                        failure: None,
                    });
                    if !accepted {
                        break;
                    }
                    best = cand;
                    best_kl = e.kl;
                }
                Err(err @ (Error::Divergence { .. } | Error::NonFiniteObjective(_))) => {
                    // contract the active bounds halfway towards the best gain
                    for (b, &x) in bounds_aa.iter_mut().zip(&best.theta_aa) {
                        b.1 = 0.5 * (b.1 + x);
                    }
                    trace.records.push(ControlRecord {
                        iteration,
                        theta: cand,
                        kl: f64::INFINITY,
                        obs_mi: 0.0,
                        ctrl_mi: 0.0,
                        relax,
                        accepted: false,
                        failure: Some(err.to_string()),
                    });
                }
                Err(e) => return Err(e),
            }
            relax = (
                (relax.0 * self.opts.relax_decay).max(self.opts.relax_floor),
                (relax.1 * self.opts.relax_decay).max(self.opts.relax_floor),
            );
        }
        Ok(ControlOutcome { params: best, kl: best_kl, initial_kl: first.kl, target_edges: self.edges.clone(), trace })
    }
}

/// Runs the controller search on `plant` from `init`, using `init` (with
/// zero active gain) to fix the reference partition of `J`.
pub fn optimize_controller<P: Plant + Clone>(
    plant: &P,
    target: &ControlTarget,
    init: &ControllerParams,
    opts: ControlOptions,
) -> Result<ControlOutcome> {
    ControlProblem::new(plant, target, init, opts)?.optimize(init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{LinearPlant, LinearPlantParams};
    use proptest::prelude::*;

    fn binary_entropy(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    fn joint(dims: Vec<usize>, cells: Vec<(Vec<u32>, f64)>) -> JointPMF {
        JointPMF::from_masses(dims, cells).unwrap()
    }

    #[test]
    fn capacity_examples() {
        let identity = |k: usize| {
            (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect::<Vec<Vec<f64>>>()
        };
        assert_eq!(channel_capacity(&identity(2), 1e-9).unwrap().bits.0, 1.0);
        assert!((channel_capacity(&identity(5), 1e-9).unwrap().bits.0 - 5f64.log2()).abs() < 1e-9);
        let bsc = vec![vec![0.89, 0.11], vec![0.11, 0.89]];
        let c = channel_capacity(&bsc, 1e-9).unwrap().bits.0;
        assert!((c - (1.0 - binary_entropy(0.11))).abs() < 1e-6);
        let noisy = vec![vec![0.3, 0.7], vec![0.3, 0.7]];
        assert!(channel_capacity(&noisy, 1e-9).unwrap().bits.0.abs() < 1e-12);
        assert!(channel_capacity(&[vec![0.5, 0.6]], 1e-9).is_err());
    }

    #[test]
    fn asymmetric_channel_capacity_matches_closed_form() {
        // Z-channel with crossover q: C = log2(1 + (1-q) q^(q/(1-q)))
        let q: f64 = 0.3;
        let z = vec![vec![1.0, 0.0], vec![q, 1.0 - q]];
        let c = channel_capacity(&z, 1e-12).unwrap().bits.0;
        let exact = (1.0 + (1.0 - q) * q.powf(q / (1.0 - q))).log2();
        assert!((c - exact).abs() < 1e-9, "{c} vs {exact}");
    }

    #[test]
    fn observability_examples() {
        let uniform4: Vec<(Vec<u32>, f64)> = (0..4).map(|j| (vec![j, j], 0.25)).collect();
        assert_eq!(observability(&joint(vec![4, 4], uniform4)).unwrap(), 1.0);
        let high_bit: Vec<(Vec<u32>, f64)> = (0..4).map(|j| (vec![j, j / 2], 0.25)).collect();
        assert!((observability(&joint(vec![4, 2], high_bit)).unwrap() - 0.5).abs() < 1e-15);
        let indep = JointPMF::uniform(vec![4, 3]).unwrap();
        assert!(observability(&indep).unwrap().abs() < 1e-15);
        let constant = joint(vec![2, 2], vec![(vec![0, 0], 0.5), (vec![0, 1], 0.5)]);
        assert!(matches!(observability(&constant), Err(Error::ZeroTargetEntropy)));
    }

    #[test]
    fn controllability_examples() {
        let det: Vec<(Vec<u32>, f64)> = (0..3).map(|a| (vec![(a + 1) % 3, a], 1.0 / 3.0)).collect();
        assert_eq!(controllability(&joint(vec![3, 3], det)).unwrap(), 1.0);
        assert!(controllability(&JointPMF::uniform(vec![3, 3]).unwrap()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn missing_information_examples() {
        assert!((missing_information(Bits(120.0), 0.8).unwrap().0 - 24.0).abs() < 1e-12);
        assert_eq!(missing_information(Bits(3.0), 1.0).unwrap().0, 0.0);
        assert_eq!(missing_information(Bits(3.0), 0.0).unwrap().0, 3.0);
        assert!(missing_information(Bits(3.0), 1.5).is_err());
    }

    #[test]
    fn loop_classification() {
        // Q uniform on 2, S = Q, A independent noise
        let open: Vec<(Vec<u32>, f64)> = (0..2).flat_map(|q| (0..2).map(move |a| (vec![q, q, a], 0.25))).collect();
        let r = classify_loop(&joint(vec![2, 2, 2], open), EXACT_OPEN_THRESHOLD, false).unwrap();
        assert_eq!(r.kind, LoopKind::Open);
        assert!(r.actuator_info.0.abs() < 1e-15);
        // A = -S with S = Q
        let closed: Vec<(Vec<u32>, f64)> = (0..2).map(|q| (vec![q, q, 1 - q], 0.5)).collect();
        let r = classify_loop(&joint(vec![2, 2, 2], closed), EXACT_OPEN_THRESHOLD, true).unwrap();
        assert_eq!(r.kind, LoopKind::Closed);
        assert!((r.actuator_info.0 - 1.0).abs() < 1e-15);
        // A carrying more about Q than S violates data processing
        let bad: Vec<(Vec<u32>, f64)> = (0..2).map(|q| (vec![q, 0, q], 0.5)).collect();
        assert!(classify_loop(&joint(vec![2, 2, 2], bad), EXACT_OPEN_THRESHOLD, true).is_err());
    }

    #[test]
    fn noisy_sensor_loop_is_partially_closed() {
        // Q uniform on 4, S = Q xor noise bit (p=0.2) on the low bit, A = S
        let mut cells = Vec::new();
        for q in 0..4u32 {
            for (w, pw) in [(0u32, 0.8), (1, 0.2)] {
                let s = q ^ w;
                cells.push((vec![q, s, s], 0.25 * pw));
            }
        }
        let r = classify_loop(&joint(vec![4, 4, 4], cells), EXACT_OPEN_THRESHOLD, true).unwrap();
        assert_eq!(r.kind, LoopKind::Closed);
        assert!(r.actuator_info.0 > 0.0 && r.actuator_info.0 < 2.0);
    }

    #[test]
    fn noise_floor_separates_independent_from_coupled() {
        let mut rng = stream(4, 0);
        use rand::Rng;
        let q: Vec<u32> = (0..20_000).map(|_| rng.gen_range(0..4)).collect();
        let a_ind: Vec<u32> = (0..20_000).map(|_| rng.gen_range(0..4)).collect();
        let s =
            SymbolSeries::from_codes(vec![q.clone(), a_ind, q.iter().map(|x| x / 2).collect()], vec![4, 4, 2]).unwrap();
        let thr = sampled_open_threshold(&s, 0, 1, 9).unwrap();
        let mi = |b: usize| {
            let j = estimate_joint_pmf(&s, &[(0, 0), (b, 0)]).unwrap();
            mutual_information(&j, &[0], &[1]).unwrap().0
        };
        assert!(mi(1) <= thr, "{} vs {thr}", mi(1));
        assert!(mi(2) > thr);
    }

    #[test]
    fn noisy_observability_holds_for_modular_noise() {
        // J uniform on 4, S = J + W mod 4
        for p in [0.0, 0.1, 0.3, 0.5] {
            let mut cells = Vec::new();
            for j in 0..4u32 {
                for (w, pw) in [(0u32, 1.0 - p), (1, p)] {
                    if pw > 0.0 {
                        cells.push((vec![j, (j + w) % 4, w], 0.25 * pw));
                    }
                }
            }
            let r = noisy_observability_bound(&joint(vec![4, 4, 2], cells)).unwrap();
            assert!(r.holds, "{r:?}");
            if p == 0.0 {
                assert_eq!(r.bound, 1.0);
            }
        }
    }

    #[test]
    fn auxiliary_target_moments() {
        let mut rng = stream(1, 0);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let col: Vec<f64> = (0..50_000).map(|_| 2.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let j = SignalMatrix::unnamed(vec![col.clone()]).unwrap();
        let target = ControlTarget::scalar(0.0, 1.0);
        let moments = |s: &SignalMatrix| {
            let c = s.column(0);
            let m = c.iter().sum::<f64>() / c.len() as f64;
            (m, c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / c.len() as f64)
        };
        let (m, v) = moments(&auxiliary_samples(&j, &target, (0.0, 0.0)).unwrap());
        assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        let same = auxiliary_samples(&j, &target, (1.0, 1.0)).unwrap();
        for (a, b) in same.column(0).iter().zip(&col) {
            assert!((a - b).abs() < 1e-9);
        }
        let (m, v) = moments(&auxiliary_samples(&j, &target, (0.5, 0.5)).unwrap());
        let (m0, v0) = moments(&j);
        assert!((m - 0.5 * m0).abs() < 1e-9 && (v - (0.5 + 0.5 * v0)).abs() < 1e-9);
        let flat = SignalMatrix::unnamed(vec![vec![1.0; 10]]).unwrap();
        assert!(matches!(auxiliary_samples(&flat, &target, (0.0, 0.0)), Err(Error::DegenerateRescale(_))));
    }

    #[test]
    fn kl_to_reference_examples() {
        let edges: Vec<f64> = (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect();
        let gaussian = |shift: f64| {
            let w: Vec<f64> = (0..20).map(|k| (-(edges[k] + 0.25 - shift).powi(2) / 2.0).exp()).collect();
            let z: f64 = w.iter().sum();
            JointPMF::from_dense(vec![20], &w.iter().map(|x| x / z).collect::<Vec<_>>()).unwrap()
        };
        let reference = gaussian(0.0);
        assert_eq!(kl_to_reference(&reference, &reference).unwrap().0, 0.0);
        let mut prev = f64::INFINITY;
        for shift in [2.0, 1.5, 1.0, 0.5, 0.25] {
            let kl = kl_to_reference(&gaussian(shift), &reference).unwrap().0;
            assert!(kl > 0.0 && kl < prev);
            prev = kl;
        }
        let a = JointPMF::from_dense(vec![2], &[1.0, 0.0]).unwrap();
        let b = JointPMF::from_dense(vec![2], &[0.0, 1.0]).unwrap();
        assert!(kl_to_reference(&a, &b).unwrap().is_infinite());
    }

    #[test]
    fn controllability_of_linear_plant_grows_with_signal_to_noise() {
        let ctrl = ControllerParams::new(vec![5.0], vec![0.5], vec![(0.0, 10.0)], vec![(0.0, 1.0)]).unwrap();
        let mut prev = 0.0;
        for sensor_noise in [1.0, 0.5, 0.2, 0.05] {
            let params = LinearPlantParams { sensor_noise, ..Default::default() };
            let mut plant = LinearPlant::new(params, 0).unwrap();
            let r = rollout(&mut plant, &ctrl, 50_000, 500, 3).unwrap();
            let c = binned_mi(&r.j_next, &r.a, 8).unwrap() / binned_mi(&r.j_next, &r.j_next, 8).unwrap();
            assert!(c > prev && c < 1.0, "sensor noise {sensor_noise}: {c}");
            prev = c;
        }
    }

    #[test]
    fn control_search_improves_and_is_monotone() {
        let plant = LinearPlant::new(LinearPlantParams::default(), 0).unwrap();
        let target = ControlTarget::scalar(0.0, 0.5);
        let init = ControllerParams::new(vec![3.0], vec![0.1], vec![(0.0, 10.0)], vec![(0.0, 1.2)]).unwrap();
        let opts = ControlOptions { n_steps: 30_000, ..Default::default() };
        let problem = ControlProblem::new(&plant, &target, &init, opts).unwrap();
        let out = problem.optimize(&init).unwrap();
        assert!(out.kl < out.initial_kl);
        assert!(out.trace.is_strictly_decreasing());
        assert_eq!(problem.kl(&out.params).unwrap(), out.kl);
    }

    #[test]
    fn unstable_initial_gain_is_a_plant_failure() {
        let plant = LinearPlant::new(LinearPlantParams::default(), 0).unwrap();
        let target = ControlTarget::scalar(0.0, 0.5);
        let init = ControllerParams::new(vec![5.0], vec![3.0], vec![(0.0, 10.0)], vec![(0.0, 3.0)]).unwrap();
        let opts = ControlOptions { n_steps: 20_000, ..Default::default() };
        let problem = ControlProblem::new(&plant, &target, &init, opts).unwrap();
        assert!(matches!(problem.optimize(&init), Err(Error::Divergence { .. })));
    }

    #[test]
    fn empty_gain_range_is_rejected() {
        assert!(ControllerParams::new(vec![5.0], vec![0.5], vec![(0.0, 10.0)], vec![(1.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(w in proptest::collection::vec(0.0f64..1.0, 12)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let j = JointPMF::from_weights(vec![4, 3], w.iter().enumerate().map(|(i, &x)| (vec![(i / 3) as u32, (i % 3) as u32], x))).unwrap();
            if let Ok(o) = observability(&j) {
                prop_assert!((0.0..=1.0).contains(&o));
                let h = entropy(&j, &[0]).unwrap();
                let mi = mutual_information(&j, &[0], &[1]).unwrap().0;
                let missing = missing_information(h, o).unwrap().0;
                prop_assert!((missing + mi - h.0).abs() < 1e-10);
            }
        }

        #[test]
        fn deterministic_actuator_never_beats_sensor(w in proptest::collection::vec(0.0f64..1.0, 9), map in proptest::collection::vec(0u32..3, 3)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            // (Q, S) from weights, A = map(S)
            let qs = JointPMF::from_weights(vec![3, 3], w.iter().enumerate().map(|(i, &x)| (vec![(i / 3) as u32, (i % 3) as u32], x))).unwrap();
            let qsa = qs.pushforward(vec![3, 3, 3], |k| vec![k[0], k[1], map[k[1] as usize]]).unwrap();
            let r = classify_loop(&qsa, EXACT_OPEN_THRESHOLD, true).unwrap();
            prop_assert!(r.actuator_info.0 <= r.sensor_info.0 + 1e-10);
            prop_assert!(entropy(&qsa, &[2]).unwrap().0 <= entropy(&qsa, &[1]).unwrap().0 + 1e-10);
        }
    }
}
