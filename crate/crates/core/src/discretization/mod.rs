//! Phase-space partitioning of continuous signals and plug-in estimation of
//! joint probability mass functions from symbol co-occurrence counts.
//!
//! A [`SignalMatrix`] is binned per variable into a [`SymbolSeries`] using a
//! [`PartitionSpec`]. Every cell is half-open, `[edge_k, edge_{k+1})`, with the
//! top cell closed. Under the equiprobable-quantile scheme the codes are
//! assigned by rank (stable sort, so tied values fill lower bins first), which
//! makes the symbolization invariant under any strictly increasing transform
//! of a variable.

mod pmf;
mod signal;

pub use pmf::{estimate_joint_pmf, JointPMF, Selection};
pub use signal::SignalMatrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of cells per variable.
pub const DEFAULT_BINS: usize = 8;

/// How bin edges are placed for each variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    EquiprobableQuantile,
    UniformWidth,
    ExplicitEdges,
}

/// Bin count shared by all variables or given per variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinCount {
    All(usize),
    PerVariable(Vec<usize>),
}

impl BinCount {
    fn for_var(&self, v: usize) -> Result<usize> {
        match self {
            BinCount::All(n) => Ok(*n),
            BinCount::PerVariable(list) => list
                .get(v)
                .copied()
                .ok_or_else(|| Error::InvalidPartition(format!("no bin count given for variable {v}"))),
        }
    }
}

/// Phase-space partition recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub scheme: Scheme,
    pub bins: BinCount,
    /// Explicit edges, one list per variable. A single list is applied to
    /// every variable. Only read by [`Scheme::ExplicitEdges`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Vec<f64>>>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self::quantile(DEFAULT_BINS)
    }
}

impl PartitionSpec {
    pub fn quantile(bins: usize) -> Self {
        Self { scheme: Scheme::EquiprobableQuantile, bins: BinCount::All(bins), edges: None }
    }

    pub fn uniform(bins: usize) -> Self {
        Self { scheme: Scheme::UniformWidth, bins: BinCount::All(bins), edges: None }
    }

    /// Explicit edges applied to every variable.
    pub fn explicit(edges: Vec<f64>) -> Self {
        let bins = edges.len().saturating_sub(1);
        Self { scheme: Scheme::ExplicitEdges, bins: BinCount::All(bins), edges: Some(vec![edges]) }
    }

    /// Explicit edges, one list per variable.
    pub fn explicit_per_variable(edges: Vec<Vec<f64>>) -> Self {
        let bins = edges.iter().map(|e| e.len().saturating_sub(1)).collect();
        Self { scheme: Scheme::ExplicitEdges, bins: BinCount::PerVariable(bins), edges: Some(edges) }
    }

    /// Checks the spec against a signal with `n_vars` variables.
    pub fn validate(&self, n_vars: usize) -> Result<()> {
        if let BinCount::PerVariable(list) = &self.bins {
            if list.len() != n_vars {
                return Err(Error::InvalidPartition(format!(
                    "{} per-variable bin counts for {n_vars} variables",
                    list.len()
                )));
            }
        }
        match self.scheme {
            Scheme::ExplicitEdges => {
                for v in 0..n_vars {
                    let e = self.explicit_edges_for(v)?;
                    check_edges(e)?;
                }
            }
            _ => {
                for v in 0..n_vars {
                    let n = self.bins.for_var(v)?;
                    if n < 2 {
                        return Err(Error::InvalidPartition(format!("variable {v}: need at least 2 bins, got {n}")));
                    }
                }
            }
        }
        Ok(())
    }

    fn explicit_edges_for(&self, v: usize) -> Result<&[f64]> {
        let edges =
            self.edges.as_ref().ok_or_else(|| Error::InvalidPartition("explicit-edges scheme without edges".into()))?;
        match edges.len() {
            1 => Ok(&edges[0]),
            _ => edges
                .get(v)
                .map(Vec::as_slice)
                .ok_or_else(|| Error::InvalidPartition(format!("no edges given for variable {v}"))),
        }
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 3 {
        return Err(Error::InvalidPartition(format!("need at least 3 edges (2 cells), got {}", edges.len())));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidPartition("non-finite edge".into()));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidPartition("edges must be strictly increasing".into()));
    }
    Ok(())
}

/// Code of `x` for the cell list `edges` (half-open cells, top cell closed).
/// Values outside `[edges[0], edges[last]]` fall into the end cells.
pub fn bin_index(edges: &[f64], x: f64) -> u32 {
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|&b| b <= x) as u32
}

/// Symbolic realization of a signal on a finite partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSeries {
    codes: Vec<Vec<u32>>,
    alphabet: Vec<usize>,
    edges: Vec<Vec<f64>>,
    origin: Option<PartitionSpec>,
}

impl SymbolSeries {
    /// Wraps pre-computed codes, one column per variable.
    pub fn from_codes(codes: Vec<Vec<u32>>, alphabet: Vec<usize>) -> Result<Self> {
        if codes.is_empty() || codes.len() != alphabet.len() {
            return Err(Error::InvalidSelection(format!(
                "{} code columns with {} alphabet sizes",
                codes.len(),
                alphabet.len()
            )));
        }
        let n_t = codes[0].len();
        for (v, (col, &k)) in codes.iter().zip(&alphabet).enumerate() {
            if col.len() != n_t {
                return Err(Error::InvalidSelection(format!("ragged code column {v}")));
            }
            if k == 0 {
                return Err(Error::InvalidSelection(format!("empty alphabet for variable {v}")));
            }
            if let Some(t) = col.iter().position(|&c| c as usize >= k) {
                return Err(Error::InvalidSelection(format!(
                    "code {} at sample {t} of variable {v} outside alphabet of size {k}",
                    col[t]
                )));
            }
        }
        let edges = alphabet.iter().map(|&k| (0..=k).map(|e| e as f64).collect()).collect();
        Ok(Self { codes, alphabet, edges, origin: None })
    }

    pub fn n_samples(&self) -> usize {
        self.codes[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self, v: usize) -> &[u32] {
        &self.codes[v]
    }

    pub fn alphabet(&self) -> &[usize] {
        &self.alphabet
    }

    /// Resolved cell edges per variable. Integer-spaced for series built from
    /// raw codes.
    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn origin(&self) -> Option<&PartitionSpec> {
        self.origin.as_ref()
    }
}

/// Bins every variable of `signal` according to `spec`.
pub fn discretize(signal: &SignalMatrix, spec: &PartitionSpec) -> Result<SymbolSeries> {
    let n_v = signal.n_vars();
    spec.validate(n_v)?;
    let mut codes = Vec::with_capacity(n_v);
    let mut alphabet = Vec::with_capacity(n_v);
    let mut all_edges = Vec::with_capacity(n_v);
    for v in 0..n_v {
        let col = signal.column(v);
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite value in variable {v}")));
        }
        let (c, edges) = match spec.scheme {
            Scheme::EquiprobableQuantile => quantile_codes(col, spec.bins.for_var(v)?, v)?,
            Scheme::UniformWidth => uniform_codes(col, spec.bins.for_var(v)?),
            Scheme::ExplicitEdges => {
                let edges = spec.explicit_edges_for(v)?.to_vec();
                (col.iter().map(|&x| bin_index(&edges, x)).collect(), edges)
            }
        };
        alphabet.push(edges.len() - 1);
        codes.push(c);
        all_edges.push(edges);
    }
    Ok(SymbolSeries { codes, alphabet, edges: all_edges, origin: Some(spec.clone()) })
}

fn quantile_codes(col: &[f64], bins: usize, v: usize) -> Result<(Vec<u32>, Vec<f64>)> {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep sample order
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let lo = col[order[0]];
    let hi = col[order[n - 1]];
    if lo == hi {
        return Err(Error::DegenerateVariable {
            variable: v,
            reason: "constant column under the quantile scheme (quantiles collide)".into(),
        });
    }
    let mut codes = vec![0u32; n];
    for (rank, &t) in order.iter().enumerate() {
        codes[t] = ((rank * bins) / n) as u32;
    }
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(lo);
    for k in 1..bins {
        let r = (k * n).div_ceil(bins).min(n - 1);
        edges.push(col[order[r]]);
    }
    edges.push(hi);
    Ok((codes, edges))
}

fn uniform_codes(col: &[f64], bins: usize) -> (Vec<u32>, Vec<f64>) {
    let (mut lo, mut hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if lo == hi {
        // single occupied cell; widen so the edges stay strictly increasing
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
    edges.push(hi);
    let codes = col.iter().map(|&x| bin_index(&edges, x)).collect();
    (codes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(col: Vec<f64>) -> SignalMatrix {
        SignalMatrix::unnamed(vec![col]).unwrap()
    }

    #[test]
    fn median_split() {
        let s = one((1..=8).map(f64::from).collect());
        let sym = discretize(&s, &PartitionSpec::quantile(2)).unwrap();
        assert_eq!(sym.codes(0), &[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(sym.alphabet(), &[2]);
    }

    #[test]
    fn uniform_width_half_open() {
        let s = one(vec![0.0, 0.5, 1.0]);
        let sym = discretize(&s, &PartitionSpec::uniform(2)).unwrap();
        // the midpoint edge belongs to the upper cell, the maximum to the closed top cell
        assert_eq!(sym.codes(0), &[0, 1, 1]);
        assert_eq!(sym.edges()[0], vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn uniform_stream_quantile_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let col: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let sym = discretize(&one(col), &PartitionSpec::quantile(4)).unwrap();
        let mut counts = [0usize; 4];
        for &c in sym.codes(0) {
            counts[c as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn constant_column_is_degenerate_under_quantiles() {
        let err = discretize(&one(vec![3.0; 10]), &PartitionSpec::quantile(4)).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariable { variable: 0, .. }));
        // uniform width keeps a single occupied cell
        let sym = discretize(&one(vec![3.0; 10]), &PartitionSpec::uniform(4)).unwrap();
        assert!(sym.codes(0).iter().all(|&c| c == sym.codes(0)[0]));
    }

    #[test]
    fn ties_fill_lower_bins_first() {
        let s = one(vec![1.0, 1.0, 1.0, 2.0]);
        let sym = discretize(&s, &PartitionSpec::quantile(2)).unwrap();
        assert_eq!(sym.codes(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn explicit_edges_clamp_outliers() {
        let s = one(vec![-5.0, 0.0, 0.99, 1.0, 2.0, 9.0]);
        let sym = discretize(&s, &PartitionSpec::explicit(vec![0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(sym.codes(0), &[0, 0, 0, 1, 2, 2]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = one(vec![0.0, 1.0]);
        assert!(discretize(&s, &PartitionSpec::quantile(1)).is_err());
        assert!(discretize(&s, &PartitionSpec::explicit(vec![0.0, 0.0, 1.0])).is_err());
        let bad = PartitionSpec { scheme: Scheme::ExplicitEdges, bins: BinCount::All(2), edges: None };
        assert!(discretize(&s, &bad).is_err());
    }

    #[test]
    fn from_codes_checks_alphabet() {
        assert!(SymbolSeries::from_codes(vec![vec![0, 2]], vec![2]).is_err());
        assert!(SymbolSeries::from_codes(vec![vec![0, 1]], vec![2]).is_ok());
    }

    proptest! {
        #[test]
        fn quantile_codes_invariant_under_increasing_maps(
            xs in proptest::collection::vec(-100.0f64..100.0, 4..200),
            bins in 2usize..10,
        ) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let a = discretize(&one(xs.clone()), &PartitionSpec::quantile(bins)).unwrap();
            let mapped: Vec<f64> = xs.iter().map(|&x| (x / 50.0).exp() * 3.0 + 7.0).collect();
            let b = discretize(&one(mapped), &PartitionSpec::quantile(bins)).unwrap();
            prop_assert_eq!(a.codes(0), b.codes(0));
        }
    }
}
