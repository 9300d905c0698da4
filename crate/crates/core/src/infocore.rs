//! Information-theoretic functionals over [`JointPMF`] values.
//!
//! Everything is computed in bits. Entropies of different variable groups are
//! always marginals of one shared PMF, so identities such as the chain rule
//! and the flux decomposition hold to rounding error rather than up to
//! estimator noise.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Deref, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::discretization::JointPMF;
use crate::error::{Error, Result};

/// An information quantity in log-base-2 units.
///
/// `f64::INFINITY` is the flagged-infinite value (e.g. KL divergence with
/// unmatched support).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bits(pub f64);

impl Bits {
    pub const ZERO: Bits = Bits(0.0);
    pub const INFINITE: Bits = Bits(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn to_nats(self) -> f64 {
        self.0 * std::f64::consts::LN_2
    }
}

impl Add for Bits {
    type Output = Bits;
    fn add(self, rhs: Bits) -> Bits {
        Bits(self.0 + rhs.0)
    }
}

impl Sub for Bits {
    type Output = Bits;
    fn sub(self, rhs: Bits) -> Bits {
        Bits(self.0 - rhs.0)
    }
}

impl Neg for Bits {
    type Output = Bits;
    fn neg(self) -> Bits {
        Bits(-self.0)
    }
}

impl Sum for Bits {
    fn sum<I: Iterator<Item = Bits>>(iter: I) -> Bits {
        Bits(iter.map(|b| b.0).sum())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf bits")
        } else {
            write!(f, "{:.6} bits", self.0)
        }
    }
}

/// Ordered set of distinct dimension indices into a [`JointPMF`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct VariableSet(Vec<usize>);

impl VariableSet {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].contains(d) {
                return Err(Error::InvalidVariableSet(format!("dimension {d} repeated")));
            }
        }
        Ok(Self(dims))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn union(&self, other: &[usize]) -> Result<Self> {
        let mut dims = self.0.clone();
        dims.extend_from_slice(other);
        Self::new(dims)
    }
}

impl Deref for VariableSet {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

fn disjoint(sets: &[&[usize]]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let Some(d) = a.iter().find(|d| b.contains(d)) {
                return Err(Error::InvalidVariableSet(format!("dimension {d} appears in more than one set")));
            }
        }
    }
    Ok(())
}

fn concat(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

/// Shannon entropy of every dimension of `pmf`, with `0 log 0 = 0`.
pub fn joint_entropy(pmf: &JointPMF) -> Bits {
    Bits(pmf.iter().map(|(_, p)| -p * p.log2()).sum::<f64>())
}

/// `H(over)` from the marginal of `pmf`. The entropy of the empty set is 0.
pub fn entropy(pmf: &JointPMF, over: &[usize]) -> Result<Bits> {
    if over.is_empty() {
        pmf.check_set(over)?;
        return Ok(Bits::ZERO);
    }
    Ok(joint_entropy(&pmf.marginalize(over)?))
}

/// `H(target | given) = H(target, given) - H(given)`.
pub fn conditional_entropy(pmf: &JointPMF, target: &[usize], given: &[usize]) -> Result<Bits> {
    disjoint(&[target, given])?;
    let joint = entropy(pmf, &concat(target, given))?;
    Ok(joint - entropy(pmf, given)?)
}

/// `I(a; b) = H(a) - H(a | b)`.
pub fn mutual_information(pmf: &JointPMF, a: &[usize], b: &[usize]) -> Result<Bits> {
    conditional_mutual_information(pmf, a, b, &[])
}

/// `I(a; b | given) = H(a | given) - H(a | b, given)`.
pub fn conditional_mutual_information(pmf: &JointPMF, a: &[usize], b: &[usize], given: &[usize]) -> Result<Bits> {
    disjoint(&[a, b, given])?;
    let h_a_given = conditional_entropy(pmf, a, given)?;
    let h_a_bgiven = conditional_entropy(pmf, a, &concat(b, given))?;
    Ok(h_a_given - h_a_bgiven)
}

/// Conditional co-information `I(p_1; ...; p_m | given)` by the recursion
///
/// `I(p_1; ...; p_m | G) = I(p_1; ...; p_{m-1} | G) - I(p_1; ...; p_{m-1} | p_m, G)`
///
/// down to the pairwise conditional mutual information. May be negative for
/// three or more parts.
pub fn co_information(pmf: &JointPMF, parts: &[&[usize]], given: &[usize]) -> Result<Bits> {
    if parts.len() < 2 {
        return Err(Error::InvalidArgument(format!("co-information needs at least 2 parts, got {}", parts.len())));
    }
    let mut all: Vec<&[usize]> = parts.to_vec();
    all.push(given);
    disjoint(&all)?;
    co_information_rec(pmf, parts, given)
}

fn co_information_rec(pmf: &JointPMF, parts: &[&[usize]], given: &[usize]) -> Result<Bits> {
    if parts.len() == 2 {
        return conditional_mutual_information(pmf, parts[0], parts[1], given);
    }
    let (last, head) = parts.split_last().expect("at least 3 parts");
    let outer = co_information_rec(pmf, head, given)?;
    let inner = co_information_rec(pmf, head, &concat(last, given))?;
    Ok(outer - inner)
}

/// Options for [`kl_divergence_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KlOptions {
    /// When set, model masses below this floor are raised to it, keeping
    /// the divergence finite under support mismatch.
    pub epsilon_floor: Option<f64>,
}

impl KlOptions {
    pub const DEFAULT_FLOOR: f64 = 1e-12;

    pub fn regularized() -> Self {
        Self { epsilon_floor: Some(Self::DEFAULT_FLOOR) }
    }
}

/// KL divergence together with the cells responsible for an infinite value.
#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub bits: Bits,
    /// Cells where `p > 0` but `q = 0`.
    pub unmatched: Vec<Vec<u32>>,
}

/// `KL(p, q) = sum p log2(p / q)`; flagged infinite when `p` has mass where
/// `q` has none.
pub fn kl_divergence(p: &JointPMF, q: &JointPMF) -> Result<Bits> {
    Ok(kl_divergence_with(p, q, KlOptions::default())?.bits)
}

pub fn kl_divergence_with(p: &JointPMF, q: &JointPMF, opts: KlOptions) -> Result<KlReport> {
    if p.dims() != q.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", p.dims(), q.dims())));
    }
    let mut sum = 0.0;
    let mut unmatched = Vec::new();
    for (k, pk) in p.iter() {
        let mut qk = q.mass_of(k);
        if qk == 0.0 {
            unmatched.push(k.clone());
        }
        if let Some(eps) = opts.epsilon_floor {
            qk = qk.max(eps);
        }
        if qk > 0.0 {
            sum += pk * (pk / qk).log2();
        }
    }
    let bits = if !unmatched.is_empty() && opts.epsilon_floor.is_none() {
        Bits::INFINITE
    } else {
        // rounding can leave tiny negatives for p == q
        Bits(sum.max(0.0))
    };
    Ok(KlReport { bits, unmatched })
}

/// Cross entropy `H(p) + KL(p, q)`.
pub fn cross_entropy(p: &JointPMF, q: &JointPMF) -> Result<Bits> {
    let kl = kl_divergence(p, q)?;
    if kl.is_infinite() {
        return Ok(Bits::INFINITE);
    }
    Ok(joint_entropy(p) + kl)
}

/// PMF of `gamma * X` on the cells `reference` for a single binned variable
/// `X` whose PMF carries its cell edges.
///
/// Source cell `[e_k, e_{k+1})` becomes `[gamma e_k, gamma e_{k+1})`; its
/// mass is spread uniformly over that interval and accumulated into the
/// overlapping reference cells. Mass beyond the reference range lands in the
/// end cells.
pub fn rescale_pmf(pmf: &JointPMF, gamma: f64, reference: &[f64]) -> Result<JointPMF> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if pmf.n_dims() != 1 {
        return Err(Error::InvalidArgument("rescaling needs a single-variable PMF".into()));
    }
    let edges = pmf.edges(0).ok_or_else(|| Error::InvalidArgument("PMF carries no edge metadata".into()))?;
    if reference.len() < 2 || reference.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidPartition("reference edges must be strictly increasing".into()));
    }
    let n_ref = reference.len() - 1;
    let mut out = vec![0.0; n_ref];
    for (k, p) in pmf.iter() {
        let c = k[0] as usize;
        let (a, b) = (gamma * edges[c], gamma * edges[c + 1]);
        let width = b - a;
        if a < reference[0] {
            out[0] += p * ((reference[0].min(b) - a) / width);
        }
        if b > reference[n_ref] {
            out[n_ref - 1] += p * ((b - reference[n_ref].max(a)) / width);
        }
        for (j, cell) in out.iter_mut().enumerate() {
            let overlap = b.min(reference[j + 1]) - a.max(reference[j]);
            if overlap > 0.0 {
                *cell += p * (overlap / width);
            }
        }
    }
    let total: f64 = out.iter().sum();
    let out: Vec<f64> = out.iter().map(|x| x / total).collect();
    JointPMF::from_dense(vec![n_ref], &out)?.with_edges(0, reference.to_vec())
}
