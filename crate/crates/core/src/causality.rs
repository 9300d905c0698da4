//! Information flux between observable variables.
//!
//! For a target `j`, the flux from a subset `S` of present observables to the
//! future of `j` is the alternating sum
//!
//! ```text
//! T_{S->j} = sum_{k=0}^{|S|} (-1)^k sum_{R subset S, |R| = |S|-k} H(Y_j^{n+lag} | Y_{all \ R}^n)
//! ```
//!
//! i.e. the conditional co-information `I(Y_j^+; Y_{s_1}; ...; Y_{s_M} | Y_{not S})`.
//! Summed over every non-empty subset and added to the leak
//! `H(Y_j^+ | Y^n)`, the fluxes recover `H(Y_j^+)` exactly. Every entropy in
//! the sum is a marginal of one joint PMF over `(Y_j^+, Y_1^n, ..., Y_N^n)`,
//! so that identity holds to rounding error.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{estimate_joint_pmf, JointPMF, SignalMatrix, SymbolSeries};
use crate::error::{Error, Result};
use crate::infocore::{conditional_entropy, Bits};

/// Default cap on `2^{N_v}` for full subset enumeration.
pub const DEFAULT_SUBSET_CAP: u64 = 1 << 20;

/// Parameters of a flux computation on symbolized data.
#[derive(Debug, Clone, Copy)]
pub struct FluxQuery<'a> {
    pub symbols: &'a SymbolSeries,
    pub target: usize,
    /// Step count between present and future samples.
    pub lag: usize,
    /// Largest subset size enumerated by [`flux_report`].
    pub max_order: usize,
    pub subset_cap: u64,
}

impl<'a> FluxQuery<'a> {
    /// Query enumerating every subset order.
    pub fn new(symbols: &'a SymbolSeries, target: usize, lag: usize) -> Self {
        Self { symbols, target, lag, max_order: symbols.n_vars(), subset_cap: DEFAULT_SUBSET_CAP }
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn with_subset_cap(mut self, cap: u64) -> Self {
        self.subset_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.symbols.n_vars();
        if self.target >= n {
            return Err(Error::InvalidArgument(format!("target {} out of range ({n} variables)", self.target)));
        }
        if self.lag == 0 {
            return Err(Error::InvalidArgument("lag must be at least 1".into()));
        }
        if self.max_order == 0 || self.max_order > n {
            return Err(Error::InvalidArgument(format!("max_order must be in 1..={n}, got {}", self.max_order)));
        }
        if n > 63 {
            return Err(Error::SubsetExplosion { n_vars: n, cap: self.subset_cap });
        }
        Ok(())
    }

    /// Joint PMF over `(Y_target^{n+lag}, Y_0^n, ..., Y_{N-1}^n)`.
    pub fn joint(&self) -> Result<JointPMF> {
        self.validate()?;
        let n = self.symbols.n_vars();
        if self.lag >= self.symbols.n_samples() {
            return Err(Error::InsufficientSamples(format!(
                "lag {} with {} samples",
                self.lag,
                self.symbols.n_samples()
            )));
        }
        let mut selection = vec![(self.target, self.lag)];
        selection.extend((0..n).map(|v| (v, 0)));
        estimate_joint_pmf(self.symbols, &selection)
    }

    pub fn engine(&self) -> Result<FluxEngine> {
        FluxEngine::from_joint(self.joint()?)
    }
}

/// Flux evaluator over one joint PMF whose dimension 0 is the future target
/// and dimensions `1..=N` are the present observables.
///
/// Conditional entropies `H(Y_j^+ | Y_C)` are memoized by the bitmask of `C`.
#[derive(Debug, Clone)]
pub struct FluxEngine {
    joint: JointPMF,
    n_vars: usize,
    memo: HashMap<u64, Bits>,
}

impl FluxEngine {
    pub fn from_joint(joint: JointPMF) -> Result<Self> {
        if joint.n_dims() < 2 {
            return Err(Error::InvalidArgument(
                "flux joint needs the future target plus at least one observable".into(),
            ));
        }
        let n_vars = joint.n_dims() - 1;
        if n_vars > 63 {
            return Err(Error::InvalidArgument(format!("{n_vars} observables exceed 63")));
        }
        Ok(Self { joint, n_vars, memo: HashMap::new() })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn joint(&self) -> &JointPMF {
        &self.joint
    }

    fn full_mask(&self) -> u64 {
        if self.n_vars == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_vars) - 1
        }
    }

    fn compute(&self, mask: u64) -> Result<Bits> {
        let given: Vec<usize> = (0..self.n_vars).filter(|v| mask >> v & 1 == 1).map(|v| v + 1).collect();
        conditional_entropy(&self.joint, &[0], &given)
    }

    /// Fills the memo for every mask in `masks` (in parallel).
    fn prepare(&mut self, masks: impl IntoIterator<Item = u64>) -> Result<()> {
        let mut todo: Vec<u64> = masks.into_iter().filter(|m| !self.memo.contains_key(m)).collect();
        todo.sort_unstable();
        todo.dedup();
        let this = &*self;
        let values: Vec<Result<Bits>> = todo.par_iter().map(|&m| this.compute(m)).collect();
        for (m, v) in todo.into_iter().zip(values) {
            self.memo.insert(m, v?);
        }
        Ok(())
    }

    fn masks_for(&self, subset: &[usize]) -> Vec<u64> {
        let full = self.full_mask();
        let sub = subset.iter().fold(0u64, |acc, &v| acc | 1 << v);
        // every R subset of `sub`
        let mut out = Vec::new();
        let mut r = sub;
        loop {
            out.push(full & !r);
            if r == 0 {
                break;
            }
            r = (r - 1) & sub;
        }
        out
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("flux subset is empty".into()));
        }
        for (i, &v) in subset.iter().enumerate() {
            if v >= self.n_vars {
                return Err(Error::InvalidArgument(format!("variable {v} out of range ({} variables)", self.n_vars)));
            }
            if subset[..i].contains(&v) {
                return Err(Error::InvalidArgument(format!("variable {v} repeated in subset")));
            }
        }
        Ok(())
    }

    /// `H(Y_j^+ | Y_given)` for a set of observables (0-based).
    pub fn conditional(&mut self, given: &[usize]) -> Result<Bits> {
        let mask = given.iter().fold(0u64, |acc, &v| acc | 1 << v);
        self.prepare([mask])?;
        Ok(self.memo[&mask])
    }

    /// Information flux from `subset` to the target.
    pub fn flux(&mut self, subset: &[usize]) -> Result<Bits> {
        self.check_subset(subset)?;
        let masks = self.masks_for(subset);
        self.prepare(masks)?;
        Ok(self.flux_memoized(subset))
    }

    fn flux_memoized(&self, subset: &[usize]) -> Bits {
        let full = self.full_mask();
        let m = subset.len();
        let mut total = 0.0;
        // k components removed from `subset`; the rest `R` leave the conditioning set
        for k in 0..=m {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for kept in combinations(subset, m - k) {
                let r = kept.iter().fold(0u64, |acc, &v| acc | 1 << v);
                total += sign * self.memo[&(full & !r)].0;
            }
        }
        Bits(total)
    }

    /// `H(Y_j^+ | Y^n)`.
    pub fn leak(&mut self) -> Result<Bits> {
        let full = self.full_mask();
        self.prepare([full])?;
        Ok(self.memo[&full])
    }

    /// `H(Y_j^+)`.
    pub fn target_entropy(&mut self) -> Result<Bits> {
        self.prepare([0])?;
        Ok(self.memo[&0])
    }

    /// Every subset flux up to `max_order` plus leak and normalizations.
    pub fn report(&mut self, max_order: usize, subset_cap: u64) -> Result<FluxReport> {
        if self.n_vars >= 64 || (1u64 << self.n_vars) > subset_cap {
            return Err(Error::SubsetExplosion { n_vars: self.n_vars, cap: subset_cap });
        }
        if max_order == 0 || max_order > self.n_vars {
            return Err(Error::InvalidArgument(format!("max_order must be in 1..={}, got {max_order}", self.n_vars)));
        }
        let subsets = enumerate_subsets(self.n_vars, max_order);
        let masks: Vec<u64> = subsets.iter().flat_map(|s| self.masks_for(s)).chain([0]).collect();
        self.prepare(masks)?;
        let h = self.memo[&0];
        let leak = self.memo[&self.full_mask()];
        let normalize = |b: Bits| if h.0 > 0.0 { b.0 / h.0 } else { 0.0 };
        let this = &*self;
        let fluxes: Vec<SubsetFlux> = subsets
            .par_iter()
            .map(|s| {
                let bits = this.flux_memoized(s);
                SubsetFlux { subset: s.clone(), bits, normalized: normalize(bits) }
            })
            .collect();
        Ok(FluxReport {
            n_vars: self.n_vars,
            max_order,
            fluxes,
            leak,
            target_entropy: h,
            normalized_leak: normalize(leak),
        })
    }
}

/// Subsets of `0..n` with sizes `1..=max_order`, ordered by (size, lexicographic).
pub fn enumerate_subsets(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..n).collect();
    (1..=max_order.min(n)).flat_map(|m| combinations(&all, m)).collect()
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Flux of one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetFlux {
    pub subset: Vec<usize>,
    pub bits: Bits,
    pub normalized: f64,
}

/// All subset fluxes into one target, with the leak and normalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    pub n_vars: usize,
    pub max_order: usize,
    /// Ordered by (subset size, lexicographic).
    pub fluxes: Vec<SubsetFlux>,
    pub leak: Bits,
    pub target_entropy: Bits,
    pub normalized_leak: f64,
}

impl FluxReport {
    pub fn flux(&self, subset: &[usize]) -> Option<Bits> {
        self.fluxes.iter().find(|f| f.subset == subset).map(|f| f.bits)
    }

    /// Whether every subset was enumerated, so the decomposition must close.
    pub fn is_complete(&self) -> bool {
        self.max_order == self.n_vars
    }

    /// `sum fluxes + leak - H(Y_j^+)`.
    pub fn decomposition_residual(&self) -> f64 {
        let sum: f64 = self.fluxes.iter().map(|f| f.bits.0).sum();
        sum + self.leak.0 - self.target_entropy.0
    }

    /// `sum normalized + normalized leak - 1`.
    pub fn normalized_residual(&self) -> f64 {
        let sum: f64 = self.fluxes.iter().map(|f| f.normalized).sum();
        sum + self.normalized_leak - 1.0
    }
}

/// Flux from `subset` to the target of `query`.
pub fn information_flux(query: &FluxQuery<'_>, subset: &[usize]) -> Result<Bits> {
    query.engine()?.flux(subset)
}

/// Leak `H(Y_j^+ | Y^n)` of the target of `query`.
pub fn information_leak(query: &FluxQuery<'_>) -> Result<Bits> {
    query.engine()?.leak()
}

/// Enumerates every subset up to `query.max_order`.
pub fn flux_report(query: &FluxQuery<'_>) -> Result<FluxReport> {
    query.validate()?;
    let n = query.symbols.n_vars();
    if (1u64 << n) > query.subset_cap {
        return Err(Error::SubsetExplosion { n_vars: n, cap: query.subset_cap });
    }
    query.engine()?.report(query.max_order, query.subset_cap)
}

/// Flux matrix (order 1) or subset-by-target table (orders 2 and 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityMap {
    pub order: usize,
    pub lag: usize,
    /// Row labels: source subsets ordered lexicographically.
    pub sources: Vec<Vec<usize>>,
    /// `values[row][target]` in bits.
    pub values: Vec<Vec<f64>>,
    /// Entries whose source subset contains the target (display masking only).
    pub self_flux: Vec<Vec<bool>>,
}

impl CausalityMap {
    pub fn n_targets(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Off-diagonal entries (source subset excludes the target).
    pub fn off_diagonal(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.self_flux)
            .flat_map(|(row, mask)| row.iter().zip(mask).filter(|(_, &m)| !m).map(|(&v, _)| v))
            .collect()
    }
}

/// Fluxes of every subset of size `order` into every target.
pub fn causality_map(symbols: &SymbolSeries, lag: usize, order: usize) -> Result<CausalityMap> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("order must be 1, 2 or 3, got {order}")));
    }
    let n = symbols.n_vars();
    if order > n {
        return Err(Error::InvalidArgument(format!("order {order} exceeds {n} variables")));
    }
    let all: Vec<usize> = (0..n).collect();
    let sources = combinations(&all, order);
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|target| -> Result<Vec<f64>> {
            let query = FluxQuery::new(symbols, target, lag).with_max_order(order);
            query.validate()?;
            let mut engine = query.engine()?;
            sources.iter().map(|s| engine.flux(s).map(|b| b.0)).collect()
        })
        .collect::<Result<_>>()?;
    let values = (0..sources.len()).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
    let self_flux = sources.iter().map(|s| (0..n).map(|t| s.contains(&t)).collect()).collect();
    Ok(CausalityMap { order, lag, sources, values, self_flux })
}

/// Lagged, non-centered normalized cross-correlation
///
/// `C_{i->j} = sum_n x_i(t_n) x_j(t_n + lag) / (|x_i| |x_j|)`
///
/// with norms over the full record.
pub fn correlation_map(signal: &SignalMatrix, lag: usize) -> Result<Vec<Vec<f64>>> {
    let n_t = signal.n_samples();
    if lag >= n_t {
        return Err(Error::InsufficientSamples(format!("lag {lag} with {n_t} samples")));
    }
    let norms: Vec<f64> = signal.columns().iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    if let Some(v) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::InvalidSignal(format!("variable {v} has zero norm")));
    }
    let n_v = signal.n_vars();
    Ok((0..n_v)
        .map(|i| {
            let xi = signal.column(i);
            (0..n_v)
                .map(|j| {
                    let xj = &signal.column(j)[lag..];
                    let dot: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                    dot / (norms[i] * norms[j])
                })
                .collect()
        })
        .collect())
}

/// Flux reports for one target across several lags.
pub fn lag_sweep(symbols: &SymbolSeries, target: usize, lags: &[usize]) -> Result<Vec<(usize, FluxReport)>> {
    lags.iter().map(|&lag| flux_report(&FluxQuery::new(symbols, target, lag)).map(|r| (lag, r))).collect()
}
