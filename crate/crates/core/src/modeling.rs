//! Model assessment through information preservation.
//!
//! A reduced-order model `Q^` of a true state `Q~` can only be accurate if
//! it shares enough information with it. Given `H(Q~)` and `I(Q~; Q^)`:
//!
//! * [`fano_error_probability_bound`] lower-bounds `Pr(|Q^ - Q~| > eps)`
//!   (generalized Fano inequality, with `eps / delta_q` cells treated as
//!   "close enough");
//! * [`expected_error_lower_bound`] turns that into a bound on the mean
//!   error through Markov's inequality;
//! * [`pinsker_statistical_bound`] bounds the L1 distance between
//!   distributions by their KL divergence.
//!
//! [`kl_fit`] tunes model parameters by minimizing the KL divergence between
//! a reference PMF and the PMF of simulated observables, and
//! [`ml_equivalence_check`] confirms that on an empirical reference this is
//! maximum likelihood.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::discretization::{
    discretize, estimate_joint_pmf, JointPMF, PartitionSpec, Scheme, SignalMatrix, SymbolSeries,
};
use crate::error::{Error, Result};
use crate::infocore::{
    entropy, joint_entropy, kl_divergence, kl_divergence_with, mutual_information, rescale_pmf, Bits, KlOptions,
};
use crate::optim::{minimize, DescentOptions};

/// Inputs of the Fano-type bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelAssessment {
    pub truth_entropy: Bits,
    pub model_mutual_info: Bits,
    /// Error tolerance, in state units.
    pub epsilon: f64,
    /// Partition cell size, in state units.
    pub delta_q: f64,
    pub n_states: usize,
}

impl ModelAssessment {
    /// Assessment for a joint PMF over `(truth, model)` on a common
    /// partition with `dims[0]` states.
    pub fn from_joint(joint: &JointPMF, epsilon: f64, delta_q: f64) -> Result<Self> {
        if joint.n_dims() != 2 {
            return Err(Error::DimensionMismatch("assessment needs a (truth, model) joint".into()));
        }
        Ok(Self {
            truth_entropy: entropy(joint, &[0])?,
            model_mutual_info: mutual_information(joint, &[0], &[1])?,
            epsilon,
            delta_q,
            n_states: joint.dims()[0],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.delta_q > 0.0) {
            return Err(Error::InvalidArgument("epsilon and delta_q must be positive".into()));
        }
        if self.n_states < 2 {
            return Err(Error::InvalidArgument("at least 2 states are required".into()));
        }
        if self.epsilon / self.delta_q >= self.n_states as f64 {
            return Err(Error::ToleranceExceedsStateSpace(format!(
                "epsilon / delta_q = {} but only {} states",
                self.epsilon / self.delta_q,
                self.n_states
            )));
        }
        Ok(())
    }

    /// `[H - I - log2(eps/dq) - 1] / [log2 N - log2(eps/dq)]`, unclamped.
    fn raw_bound(&self) -> Result<f64> {
        self.validate()?;
        let ratio = (self.epsilon / self.delta_q).log2();
        let denom = (self.n_states as f64).log2() - ratio;
        if denom <= 0.0 {
            return Err(Error::ToleranceExceedsStateSpace(format!("denominator {denom}")));
        }
        Ok((self.truth_entropy.0 - self.model_mutual_info.0 - ratio - 1.0) / denom)
    }
}

/// Lower bound on `Pr(error > eps)`, clamped into `[0, 1]`.
pub fn fano_error_probability_bound(a: &ModelAssessment) -> Result<f64> {
    Ok(a.raw_bound()?.clamp(0.0, 1.0))
}

/// Lower bound on the expected error: `eps` times the Fano bound, clamped
/// below at zero but not above at one.
pub fn expected_error_lower_bound(a: &ModelAssessment) -> Result<f64> {
    Ok(a.epsilon * a.raw_bound()?.max(0.0))
}

/// `sqrt(2 ln2 KL(p, q))`, an upper bound on `|p - q|_1`; infinite when the
/// divergence is.
pub fn pinsker_statistical_bound(p: &JointPMF, q: &JointPMF) -> Result<f64> {
    let kl = kl_divergence(p, q)?;
    if kl.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok((2.0 * std::f64::consts::LN_2 * kl.0).sqrt())
}

/// Parametric-model coefficients with per-coefficient bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let p = Self { theta, bounds };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.bounds.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters but {} bounds",
                self.theta.len(),
                self.bounds.len()
            )));
        }
        for (i, (&t, &(lo, hi))) in self.theta.iter().zip(&self.bounds).enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!("empty bound for parameter {i}")));
            }
            if !(lo..=hi).contains(&t) {
                return Err(Error::InvalidArgument(format!("parameter {i} = {t} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// What the generator is asked to produce for one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimRequest {
    pub seed: u64,
    pub n_samples: usize,
}

/// Columns of a simulated signal and the partition they are binned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub columns: Vec<usize>,
    pub partition: PartitionSpec,
}

impl ObservableSpec {
    fn symbols(&self, signal: &SignalMatrix) -> Result<SymbolSeries> {
        discretize(&signal.select(&self.columns)?, &self.partition)
    }

    fn pmf(&self, signal: &SignalMatrix) -> Result<JointPMF> {
        let s = self.symbols(signal)?;
        let sel: Vec<(usize, usize)> = (0..s.n_vars()).map(|v| (v, 0)).collect();
        estimate_joint_pmf(&s, &sel)
    }
}

/// Scalar objective of a simulated signal, in bits.
pub trait FitObjective: Sync {
    fn evaluate(&self, signal: &SignalMatrix) -> Result<Bits>;
}

/// `KL(reference, pmf(observables))` on a frozen partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatch {
    reference: JointPMF,
    observable: ObservableSpec,
    kl: KlOptions,
}

impl ReferenceMatch {
    /// Uses an existing reference PMF. The observable partition must be
    /// explicit so every evaluation bins on the same cells.
    pub fn new(reference: JointPMF, observable: ObservableSpec, kl: KlOptions) -> Result<Self> {
        if observable.partition.scheme != Scheme::ExplicitEdges {
            return Err(Error::InvalidPartition("a fixed reference needs explicit edges".into()));
        }
        observable.partition.validate(observable.columns.len())?;
        Ok(Self { reference, observable, kl })
    }

    /// Builds the reference from a signal; the cells that partition produces
    /// on the reference are frozen for all later evaluations.
    pub fn from_signal(reference: &SignalMatrix, observable: &ObservableSpec, kl: KlOptions) -> Result<Self> {
        let symbols = observable.symbols(reference)?;
        let frozen = ObservableSpec {
            columns: observable.columns.clone(),
            partition: PartitionSpec::explicit_per_variable(symbols.edges().to_vec()),
        };
        let pmf = frozen.pmf(reference)?;
        Self::new(pmf, frozen, kl)
    }

    pub fn reference(&self) -> &JointPMF {
        &self.reference
    }

    pub fn observable(&self) -> &ObservableSpec {
        &self.observable
    }
}

impl FitObjective for ReferenceMatch {
    fn evaluate(&self, signal: &SignalMatrix) -> Result<Bits> {
        let model = self.observable.pmf(signal)?;
        Ok(kl_divergence_with(&self.reference, &model, self.kl)?.bits)
    }
}

/// Scale-similarity objective: the PMF of column `small` should match the
/// PMF of column `large` rescaled by `gamma`, both on `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarMatch {
    pub large: usize,
    pub small: usize,
    pub gamma: f64,
    pub edges: Vec<f64>,
    pub kl: KlOptions,
}

impl FitObjective for SelfSimilarMatch {
    fn evaluate(&self, signal: &SignalMatrix) -> Result<Bits> {
        let spec = PartitionSpec::explicit(self.edges.clone());
        let binned = |c: usize| -> Result<JointPMF> {
            let s = discretize(&signal.select(&[c])?, &spec)?;
            estimate_joint_pmf(&s, &[(0, 0)])
        };
        let target = rescale_pmf(&binned(self.large)?, self.gamma, &self.edges)?;
        Ok(kl_divergence_with(&target, &binned(self.small)?, self.kl)?.bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KlFitOptions {
    pub descent: DescentOptions,
    /// Seed handed to every simulation of the run (common random numbers).
    pub seed: u64,
    /// Samples per simulated batch.
    pub batch_len: usize,
}

impl Default for KlFitOptions {
    fn default() -> Self {
        Self { descent: DescentOptions::default(), seed: 0, batch_len: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub iteration: usize,
    pub kl_bits: f64,
    pub theta: Vec<f64>,
    pub step: f64,
    pub accepted: bool,
}

/// Every objective evaluation of a fit, in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<FitRecord>,
}

impl OptimizationTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &FitRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Whether accepted KL values never increase.
    pub fn is_monotone(&self) -> bool {
        let kl: Vec<f64> = self.accepted().map(|r| r.kl_bits).collect();
        kl.windows(2).all(|w| w[1] <= w[0])
    }

    /// CSV with columns `iteration, kl_bits, theta_0.., step, accepted`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n_theta = self.records.first().map_or(0, |r| r.theta.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "kl_bits".to_string()];
        header.extend((0..n_theta).map(|i| format!("theta_{i}")));
        header.extend(["step".to_string(), "accepted".to_string()]);
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string(), r.kl_bits.to_string()];
            row.extend(r.theta.iter().map(f64::to_string));
            row.extend([r.step.to_string(), r.accepted.to_string()]);
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub kl_bits: f64,
    pub initial_kl_bits: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: OptimizationTrace,
}

/// Minimizes `objective(simulate(theta))` over the bounds of `init` by
/// finite-difference gradient descent with Barzilai-Borwein steps.
///
/// `simulate` must be deterministic for a given request; every evaluation
/// of one fit uses the same seed. Returns the best parameters seen.
pub fn kl_fit<S, O>(simulate: S, objective: &O, init: &ModelParams, opts: &KlFitOptions) -> Result<FitOutcome>
where
    S: Fn(&[f64], &SimRequest) -> Result<SignalMatrix> + Sync,
    O: FitObjective + ?Sized,
{
    init.validate()?;
    let request = SimRequest { seed: opts.seed, n_samples: opts.batch_len };
    let f = |theta: &[f64]| -> Result<f64> {
        let signal = simulate(theta, &request)?;
        Ok(objective.evaluate(&signal)?.0)
    };
    let initial = f(&init.theta)?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteObjective(
            "KL at the initial parameters is infinite; enable the epsilon floor".into(),
        ));
    }
    let r = minimize(f, &init.theta, &init.bounds, &opts.descent)?;
    let records = r
        .trace
        .into_iter()
        .map(|d| FitRecord {
            iteration: d.iteration,
            kl_bits: d.value,
            theta: d.theta,
            step: d.step,
            accepted: d.accepted,
        })
        .collect();
    Ok(FitOutcome {
        params: ModelParams { theta: r.theta, bounds: init.bounds.clone() },
        kl_bits: r.value,
        initial_kl_bits: initial,
        converged: r.converged,
        iterations: r.iterations,
        trace: OptimizationTrace { records },
    })
}

/// Outcome of comparing the KL and likelihood criteria over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlEquivalenceReport {
    /// `KL(empirical, family(theta_i))` for each grid point.
    pub kl_bits: Vec<f64>,
    /// Mean log2-likelihood per sample for each grid point.
    pub mean_log_likelihood: Vec<f64>,
    pub kl_argmin: usize,
    pub ll_argmax: usize,
    /// The two criteria agree, counting exact ties as agreement.
    pub agree: bool,
    /// Euclidean distance between the two selected grid points.
    pub discrepancy: f64,
    /// Largest deviation from `KL = -mean_ll - H(empirical)`.
    pub identity_residual: f64,
}

/// Checks that minimizing `KL(empirical, family(theta))` over `grid`
/// selects the same point as maximizing the likelihood of `samples`.
///
/// `samples` must hold a single variable; `family` returns a one-variable
/// PMF over the same alphabet.
pub fn ml_equivalence_check<F>(samples: &SymbolSeries, family: F, grid: &[Vec<f64>]) -> Result<MlEquivalenceReport>
where
    F: Fn(&[f64]) -> Result<JointPMF>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    if samples.n_vars() != 1 {
        return Err(Error::InvalidArgument("samples must hold a single variable".into()));
    }
    let empirical = estimate_joint_pmf(samples, &[(0, 0)])?;
    let h = joint_entropy(&empirical).0;
    let n = samples.n_samples() as f64;
    let pmfs: Vec<JointPMF> = grid.iter().map(|t| family(t)).collect::<Result<_>>()?;
    if pmfs.len() > 1 && pmfs.iter().all(|p| p == &pmfs[0]) {
        return Err(Error::DegenerateFamily("family is constant over the grid".into()));
    }
    let mut kl_bits = Vec::with_capacity(grid.len());
    let mut mean_ll = Vec::with_capacity(grid.len());
    let mut residual: f64 = 0.0;
    for p in &pmfs {
        if p.dims() != empirical.dims() {
            return Err(Error::DimensionMismatch(format!(
                "family gives {:?}, samples {:?}",
                p.dims(),
                empirical.dims()
            )));
        }
        let ll: f64 = samples.codes(0).iter().map(|&c| p.mass_of(&[c]).log2()).sum::<f64>() / n;
        let kl = kl_divergence(&empirical, p)?.0;
        if kl.is_finite() {
            residual = residual.max((kl - (-ll - h)).abs());
        }
        kl_bits.push(kl);
        mean_ll.push(ll);
    }
    let argbest =
        |v: &[f64], better: fn(f64, f64) -> bool| (1..v.len()).fold(0, |b, i| if better(v[i], v[b]) { i } else { b });
    let kl_argmin = argbest(&kl_bits, |a, b| a < b);
    let ll_argmax = argbest(&mean_ll, |a, b| a > b);
    let tie = 1e-12 * (1.0 + kl_bits[kl_argmin].abs());
    let agree = kl_argmin == ll_argmax
        || ((kl_bits[ll_argmax] - kl_bits[kl_argmin]).abs() <= tie
            && (mean_ll[ll_argmax] - mean_ll[kl_argmin]).abs() <= tie);
    let discrepancy = grid[kl_argmin].iter().zip(&grid[ll_argmax]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(MlEquivalenceReport {
        kl_bits,
        mean_log_likelihood: mean_ll,
        kl_argmin,
        ll_argmax,
        agree,
        discrepancy,
        identity_residual: residual,
    })
}
