use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::SymbolSeries;
use crate::error::{Error, Result};

const MASS_TOLERANCE: f64 = 1e-9;

/// `(variable index, time lag)`: the estimator reads `codes[t + lag][variable]`.
pub type Selection = (usize, usize);

/// Sparse joint probability mass function over discrete symbol tuples.
///
/// Zero cells are never stored. Cells iterate in lexicographic tuple order,
/// so every sum over a PMF is computed in the same order on every call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPMF {
    dims: Vec<usize>,
    mass: BTreeMap<Vec<u32>, f64>,
    /// Optional real-valued cell edges per dimension.
    edges: Vec<Option<Vec<f64>>>,
}

impl JointPMF {
    /// Builds a PMF from `(tuple, mass)` pairs. Duplicate tuples are summed,
    /// zero masses dropped; the total must be 1 within `1e-9`.
    pub fn from_masses<I>(dims: Vec<usize>, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        check_dims(&dims)?;
        let mut mass: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (key, p) in cells {
            check_key(&dims, &key)?;
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidPmf(format!("invalid mass {p} at {key:?}")));
            }
            if p > 0.0 {
                *mass.entry(key).or_insert(0.0) += p;
            }
        }
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidPmf(format!("total mass {total} differs from 1")));
        }
        let n = dims.len();
        Ok(Self { dims, mass, edges: vec![None; n] })
    }

    /// Normalizes non-negative weights (counts) into a PMF.
    pub fn from_weights<I>(dims: Vec<usize>, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let cells: Vec<_> = cells.into_iter().collect();
        let total: f64 = cells.iter().map(|(_, w)| *w).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidPmf(format!("total weight {total} is not positive")));
        }
        Self::from_masses(dims, cells.into_iter().map(|(k, w)| (k, w / total)))
    }

    /// Builds a PMF from a dense row-major array (last dimension fastest).
    pub fn from_dense(dims: Vec<usize>, values: &[f64]) -> Result<Self> {
        check_dims(&dims)?;
        let size: usize = dims.iter().product();
        if values.len() != size {
            return Err(Error::InvalidPmf(format!("dense array of length {} for dims {dims:?}", values.len())));
        }
        let cells = values.iter().enumerate().map(|(flat, &p)| (unflatten(&dims, flat), p));
        Self::from_masses(dims.clone(), cells)
    }

    /// Uniform PMF over every cell of `dims`.
    pub fn uniform(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let size: usize = dims.iter().product();
        let p = 1.0 / size as f64;
        Self::from_dense(dims, &vec![p; size])
    }

    /// Attaches real-valued cell edges to dimension `dim`.
    pub fn with_edges(mut self, dim: usize, edges: Vec<f64>) -> Result<Self> {
        if dim >= self.dims.len() {
            return Err(Error::InvalidVariableSet(format!("dimension {dim} out of range")));
        }
        if edges.len() != self.dims[dim] + 1 {
            return Err(Error::InvalidPmf(format!("{} edges for alphabet of size {}", edges.len(), self.dims[dim])));
        }
        self.edges[dim] = Some(edges);
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    /// Number of cells with non-zero mass.
    pub fn support_count(&self) -> usize {
        self.mass.len()
    }

    pub fn edges(&self, dim: usize) -> Option<&[f64]> {
        self.edges.get(dim).and_then(|e| e.as_deref())
    }

    pub fn mass_of(&self, key: &[u32]) -> f64 {
        self.mass.get(key).copied().unwrap_or(0.0)
    }

    /// Non-zero cells in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> + '_ {
        self.mass.iter().map(|(k, &p)| (k, p))
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Dense row-major copy (last dimension fastest).
    pub fn to_dense(&self) -> Vec<f64> {
        let size: usize = self.dims.iter().product();
        let mut out = vec![0.0; size];
        for (k, p) in self.iter() {
            out[flatten(&self.dims, k)] = p;
        }
        out
    }

    /// Sums out every dimension not listed in `keep`; the result's dimensions
    /// follow the order of `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPMF> {
        if keep.is_empty() {
            return Err(Error::InvalidVariableSet("marginal over no dimensions".into()));
        }
        self.check_set(keep)?;
        if keep.iter().copied().eq(0..self.dims.len()) {
            return Ok(self.clone());
        }
        let mut mass: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (k, p) in self.iter() {
            let sub: Vec<u32> = keep.iter().map(|&d| k[d]).collect();
            *mass.entry(sub).or_insert(0.0) += p;
        }
        Ok(JointPMF {
            dims: keep.iter().map(|&d| self.dims[d]).collect(),
            mass,
            edges: keep.iter().map(|&d| self.edges[d].clone()).collect(),
        })
    }

    /// Restricts to the slice where each `(dim, symbol)` holds and
    /// renormalizes over the remaining dimensions (in their original order).
    pub fn condition(&self, given: &[(usize, u32)]) -> Result<JointPMF> {
        let dims_given: Vec<usize> = given.iter().map(|&(d, _)| d).collect();
        self.check_set(&dims_given)?;
        for &(d, s) in given {
            if s as usize >= self.dims[d] {
                return Err(Error::InvalidVariableSet(format!("symbol {s} outside alphabet of dimension {d}")));
            }
        }
        let rest: Vec<usize> = (0..self.dims.len()).filter(|d| !dims_given.contains(d)).collect();
        if rest.is_empty() {
            return Err(Error::InvalidVariableSet("conditioning on every dimension".into()));
        }
        let mut mass: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let mut event = 0.0;
        for (k, p) in self.iter() {
            if given.iter().all(|&(d, s)| k[d] == s) {
                event += p;
                let sub: Vec<u32> = rest.iter().map(|&d| k[d]).collect();
                *mass.entry(sub).or_insert(0.0) += p;
            }
        }
        if event <= 0.0 {
            return Err(Error::ImpossibleCondition);
        }
        for p in mass.values_mut() {
            *p /= event;
        }
        Ok(JointPMF {
            dims: rest.iter().map(|&d| self.dims[d]).collect(),
            mass,
            edges: rest.iter().map(|&d| self.edges[d].clone()).collect(),
        })
    }

    /// Joint PMF of two independent blocks (`self` dimensions first).
    pub fn product(&self, other: &JointPMF) -> JointPMF {
        let mut mass = BTreeMap::new();
        for (a, p) in self.iter() {
            for (b, q) in other.iter() {
                let mut k = a.clone();
                k.extend_from_slice(b);
                mass.insert(k, p * q);
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().cloned());
        JointPMF { dims, mass, edges }
    }

    /// Pushforward through a deterministic map of tuples.
    pub fn pushforward<F>(&self, dims: Vec<usize>, map: F) -> Result<JointPMF>
    where
        F: Fn(&[u32]) -> Vec<u32>,
    {
        JointPMF::from_masses(dims, self.iter().map(|(k, p)| (map(k), p)))
    }

    /// Reorders dimensions; `order[i]` is the source dimension of output `i`.
    pub fn permute(&self, order: &[usize]) -> Result<JointPMF> {
        if order.len() != self.dims.len() {
            return Err(Error::InvalidVariableSet("permutation must cover every dimension".into()));
        }
        self.marginalize(order)
    }

    /// `sum |p - q|` over the union of supports.
    pub fn l1_distance(&self, other: &JointPMF) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let mut d = 0.0;
        for (k, p) in self.iter() {
            d += (p - other.mass_of(k)).abs();
        }
        for (k, q) in other.iter() {
            if !self.mass.contains_key(k) {
                d += q;
            }
        }
        Ok(d)
    }

    pub(crate) fn check_set(&self, set: &[usize]) -> Result<()> {
        for (i, &d) in set.iter().enumerate() {
            if d >= self.dims.len() {
                return Err(Error::InvalidVariableSet(format!(
                    "dimension {d} out of range ({} dimensions)",
                    self.dims.len()
                )));
            }
            if set[..i].contains(&d) {
                return Err(Error::InvalidVariableSet(format!("dimension {d} repeated")));
            }
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::InvalidPmf("a PMF needs at least one dimension".into()));
    }
    if dims.iter().any(|&k| k == 0 || k > u32::MAX as usize) {
        return Err(Error::InvalidPmf(format!("invalid alphabet sizes {dims:?}")));
    }
    Ok(())
}

fn check_key(dims: &[usize], key: &[u32]) -> Result<()> {
    if key.len() != dims.len() || key.iter().zip(dims).any(|(&s, &k)| s as usize >= k) {
        return Err(Error::InvalidPmf(format!("tuple {key:?} outside dims {dims:?}")));
    }
    Ok(())
}

fn flatten(dims: &[usize], key: &[u32]) -> usize {
    key.iter().zip(dims).fold(0, |acc, (&s, &k)| acc * k + s as usize)
}

fn unflatten(dims: &[usize], mut flat: usize) -> Vec<u32> {
    let mut key = vec![0u32; dims.len()];
    for (slot, &k) in key.iter_mut().zip(dims).rev() {
        *slot = (flat % k) as u32;
        flat /= k;
    }
    key
}

/// Plug-in estimate of the joint PMF of lagged symbols.
///
/// Counts the tuples `(codes[t + lag_1][v_1], ..., codes[t + lag_m][v_m])`
/// over every `t` for which all lags stay inside the record and normalizes by
/// the number of such `t`.
pub fn estimate_joint_pmf(symbols: &SymbolSeries, selection: &[Selection]) -> Result<JointPMF> {
    if selection.is_empty() {
        return Err(Error::InvalidSelection("empty selection".into()));
    }
    let n_t = symbols.n_samples();
    for &(v, _) in selection {
        if v >= symbols.n_vars() {
            return Err(Error::InvalidSelection(format!("variable {v} out of range ({} variables)", symbols.n_vars())));
        }
    }
    let max_lag = selection.iter().map(|&(_, l)| l).max().unwrap_or(0);
    if max_lag >= n_t {
        return Err(Error::InsufficientSamples(format!("lag {max_lag} leaves no samples in a record of length {n_t}")));
    }
    let valid = n_t - max_lag;
    let dims: Vec<usize> = selection.iter().map(|&(v, _)| symbols.alphabet()[v]).collect();
    let capacity = dims.iter().try_fold(1u64, |acc, &k| acc.checked_mul(k as u64));
    if capacity.is_none() {
        return Err(Error::InvalidSelection(format!("alphabet product of {dims:?} overflows")));
    }
    let columns: Vec<&[u32]> = selection.iter().map(|&(v, l)| &symbols.codes(v)[l..]).collect();
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for t in 0..valid {
        let key = columns.iter().zip(&dims).fold(0u64, |acc, (col, &k)| acc * k as u64 + col[t] as u64);
        *counts.entry(key).or_insert(0) += 1;
    }
    if counts.len() as f64 > 0.1 * valid as f64 {
        log::warn!("{} occupied cells for {valid} samples; the plug-in estimate is likely biased", counts.len());
    }
    let mass: BTreeMap<Vec<u32>, f64> =
        counts.into_iter().map(|(key, c)| (unflatten(&dims, key as usize), c as f64 / valid as f64)).collect();
    let edges = selection.iter().map(|&(v, _)| Some(symbols.edges()[v].clone())).collect();
    Ok(JointPMF { dims, mass, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(cols: Vec<Vec<u32>>, k: usize) -> SymbolSeries {
        let n = cols.len();
        SymbolSeries::from_codes(cols, vec![k; n]).unwrap()
    }

    fn xor_triple() -> JointPMF {
        let cells = (0..2u32).flat_map(|x| (0..2u32).map(move |y| (vec![x, y, x ^ y], 0.25)));
        JointPMF::from_masses(vec![2, 2, 2], cells).unwrap()
    }

    #[test]
    fn alternating_series_lag_one() {
        let s = series(vec![(0..100).map(|t| (t % 2) as u32).collect()], 2);
        let p = estimate_joint_pmf(&s, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(p.support_count(), 2);
        assert!((p.mass_of(&[0, 1]) - 0.5).abs() < 0.01);
        assert!((p.mass_of(&[1, 0]) - 0.5).abs() < 0.01);
        assert_eq!(p.mass_of(&[0, 0]), 0.0);
    }

    #[test]
    fn fair_coin_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = series(vec![(0..100_000).map(|_| rng.gen_range(0..2)).collect()], 2);
        let p = estimate_joint_pmf(&s, &[(0, 0)]).unwrap();
        assert!((p.mass_of(&[0]) - 0.5).abs() < 0.01);
        assert!((p.mass_of(&[1]) - 0.5).abs() < 0.01);
    }

    #[test]
    fn independent_pair_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        // exhaustive count oracle
        let mut oracle = [0usize; 4];
        for t in 0..n {
            oracle[(a[t] * 2 + b[t]) as usize] += 1;
        }
        let p = estimate_joint_pmf(&series(vec![a, b], 2), &[(0, 0), (1, 0)]).unwrap();
        for (i, &c) in oracle.iter().enumerate() {
            let key = vec![(i / 2) as u32, (i % 2) as u32];
            assert_eq!(p.mass_of(&key), c as f64 / n as f64);
            assert!((p.mass_of(&key) - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn selection_errors() {
        let s = series(vec![vec![0, 1, 0]], 2);
        assert!(estimate_joint_pmf(&s, &[]).is_err());
        assert!(estimate_joint_pmf(&s, &[(0, 3)]).is_err());
        assert!(estimate_joint_pmf(&s, &[(1, 0)]).is_err());
        assert!(estimate_joint_pmf(&s, &[(0, 2)]).is_ok());
    }

    #[test]
    fn marginal_of_product_is_factor() {
        let px = JointPMF::from_dense(vec![3], &[0.2, 0.3, 0.5]).unwrap();
        let py = JointPMF::from_dense(vec![2], &[0.6, 0.4]).unwrap();
        let joint = px.product(&py);
        let m = joint.marginalize(&[0]).unwrap();
        for s in 0..3u32 {
            assert!((m.mass_of(&[s]) - px.mass_of(&[s])).abs() < 1e-15);
        }
        assert_eq!(joint.marginalize(&[0, 1]).unwrap(), joint);
    }

    #[test]
    fn xor_pairs_are_uniform() {
        let p = xor_triple();
        for keep in [[0, 1], [0, 2], [1, 2]] {
            let m = p.marginalize(&keep).unwrap();
            assert_eq!(m.support_count(), 4);
            assert!(m.iter().all(|(_, q)| q == 0.25));
        }
    }

    #[test]
    fn conditioning() {
        let px = JointPMF::from_dense(vec![2], &[0.3, 0.7]).unwrap();
        let py = JointPMF::from_dense(vec![2], &[0.6, 0.4]).unwrap();
        let c = px.product(&py).condition(&[(1, 0)]).unwrap();
        assert!((c.mass_of(&[0]) - 0.3).abs() < 1e-15);

        let corr = JointPMF::from_masses(vec![2, 2], [(vec![0, 0], 0.5), (vec![1, 1], 0.5)]).unwrap();
        let c = corr.condition(&[(0, 1)]).unwrap();
        assert_eq!(c.mass_of(&[1]), 1.0);
        assert!(matches!(
            JointPMF::from_masses(vec![2, 2], [(vec![0, 0], 1.0)]).unwrap().condition(&[(0, 1)]),
            Err(Error::ImpossibleCondition)
        ));

        let c = xor_triple().condition(&[(2, 0)]).unwrap();
        assert_eq!(c.support_count(), 2);
        assert_eq!(c.mass_of(&[0, 0]), 0.5);
        assert_eq!(c.mass_of(&[1, 1]), 0.5);
    }

    #[test]
    fn invalid_sets() {
        let p = xor_triple();
        assert!(p.marginalize(&[]).is_err());
        assert!(p.marginalize(&[0, 0]).is_err());
        assert!(p.marginalize(&[3]).is_err());
        assert!(p.condition(&[(0, 2)]).is_err());
    }

    fn random_pmf(dims: Vec<usize>, seed: u64) -> JointPMF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size: usize = dims.iter().product();
        let w: Vec<f64> = (0..size).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen() }).collect();
        let mut w = w;
        w[0] += 1e-3;
        let total: f64 = w.iter().sum();
        JointPMF::from_dense(dims, &w.iter().map(|x| x / total).collect::<Vec<_>>()).unwrap()
    }

    proptest! {
        #[test]
        fn estimated_mass_sums_to_one(
            codes in proptest::collection::vec((0u32..4, 0u32..3), 3..300),
            lag in 0usize..3,
        ) {
            prop_assume!(lag < codes.len());
            let a = codes.iter().map(|c| c.0).collect();
            let b = codes.iter().map(|c| c.1).collect();
            let s = SymbolSeries::from_codes(vec![a, b], vec![4, 3]).unwrap();
            let p = estimate_joint_pmf(&s, &[(0, lag), (1, 0), (0, 0)]).unwrap();
            prop_assert!((p.total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nested_marginals_compose(seed in 0u64..1000) {
            let p = random_pmf(vec![2, 3, 2, 2], seed);
            let twice = p.marginalize(&[3, 1, 0]).unwrap().marginalize(&[2, 1]).unwrap();
            let once = p.marginalize(&[0, 1]).unwrap();
            prop_assert!(twice.l1_distance(&once).unwrap() < 1e-14);
        }

        #[test]
        fn conditional_times_marginal_is_joint(seed in 0u64..1000, y in 0u32..3) {
            let p = random_pmf(vec![2, 3, 2], seed);
            let py = p.marginalize(&[1]).unwrap().mass_of(&[y]);
            prop_assume!(py > 0.0);
            let c = p.condition(&[(1, y)]).unwrap();
            for (k, q) in c.iter() {
                let joint = p.mass_of(&[k[0], y, k[1]]);
                prop_assert!((q * py - joint).abs() < 1e-12);
            }
        }
    }
}
