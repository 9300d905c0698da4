//! Small symbolic dynamical systems whose joint PMFs are known exactly.
//!
//! Each fixture is a Markov transition on tuples of symbols together with an
//! initial (for most fixtures stationary) distribution of the present
//! state. [`SymbolicFixture::one_step_joint`] enumerates the exact joint of
//! present and next states; the samplers draw from the same law.

use rand::Rng;

use crate::discretization::{JointPMF, SymbolSeries};
use crate::error::{Error, Result};
use crate::rng::stream;

type Transition = Box<dyn Fn(&[u32]) -> Vec<(Vec<u32>, f64)> + Send + Sync>;

pub struct SymbolicFixture {
    pub name: &'static str,
    pub description: &'static str,
    alphabet: Vec<usize>,
    initial: Vec<(Vec<u32>, f64)>,
    transition: Transition,
    stationary: bool,
}

impl std::fmt::Debug for SymbolicFixture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolicFixture")
            .field("name", &self.name)
            .field("alphabet", &self.alphabet)
            .field("stationary", &self.stationary)
            .finish()
    }
}

fn draw<'a>(rng: &mut impl Rng, cells: &'a [(Vec<u32>, f64)]) -> &'a [u32] {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in cells {
        acc += p;
        if u < acc {
            return k;
        }
    }
    &cells.last().expect("non-empty distribution").0
}

fn all_tuples(alphabet: &[usize]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &k in alphabet {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..k as u32).map(move |s| {
                    let mut t = t.clone();
                    t.push(s);
                    t
                })
            })
            .collect();
    }
    out
}

fn uniform_over(alphabet: &[usize]) -> Vec<(Vec<u32>, f64)> {
    let tuples = all_tuples(alphabet);
    let p = 1.0 / tuples.len() as f64;
    tuples.into_iter().map(|t| (t, p)).collect()
}

fn flip(bit: u32, p: f64) -> [(u32, f64); 2] {
    [(bit, 1.0 - p), (1 - bit, p)]
}

impl SymbolicFixture {
    pub fn alphabet(&self) -> &[usize] {
        &self.alphabet
    }

    pub fn n_vars(&self) -> usize {
        self.alphabet.len()
    }

    /// Whether the initial distribution is invariant under the transition.
    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Exact joint over `(present_0..present_{V-1}, next_0..next_{V-1})`.
    pub fn one_step_joint(&self) -> JointPMF {
        let mut dims = self.alphabet.clone();
        dims.extend(&self.alphabet);
        let cells = self.initial.iter().flat_map(|(present, p)| {
            (self.transition)(present).into_iter().map(move |(next, q)| {
                let mut key = present.clone();
                key.extend(next);
                (key, p * q)
            })
        });
        JointPMF::from_masses(dims, cells).expect("fixture transitions are stochastic")
    }

    /// Exact joint over `(next_target, present_0..present_{V-1})`, the layout
    /// expected by [`crate::causality::FluxEngine::from_joint`].
    pub fn flux_joint(&self, target: usize) -> Result<JointPMF> {
        let v = self.n_vars();
        if target >= v {
            return Err(Error::InvalidSelection(format!("target {target} out of range ({v} variables)")));
        }
        let mut keep = vec![v + target];
        keep.extend(0..v);
        self.one_step_joint().marginalize(&keep)
    }

    /// `n` independent draws of (present, next) pairs, as `2V` columns.
    pub fn sample_pairs(&self, n: usize, seed: u64) -> Result<SymbolSeries> {
        let mut rng = stream(seed, 0);
        let v = self.n_vars();
        let mut codes = vec![Vec::with_capacity(n); 2 * v];
        for _ in 0..n {
            let present = draw(&mut rng, &self.initial).to_vec();
            let next_dist = (self.transition)(&present);
            let next = draw(&mut rng, &next_dist);
            for (c, &s) in codes.iter_mut().zip(present.iter().chain(next)) {
                c.push(s);
            }
        }
        let mut alphabet = self.alphabet.clone();
        alphabet.extend(&self.alphabet);
        SymbolSeries::from_codes(codes, alphabet)
    }

    /// A single orbit of `n` states started from the stationary law.
    pub fn trajectory(&self, n: usize, seed: u64) -> Result<SymbolSeries> {
        if !self.stationary {
            return Err(Error::InvalidSystem(format!("fixture {} has no stationary orbit", self.name)));
        }
        let mut rng = stream(seed, 0);
        let mut state = draw(&mut rng, &self.initial).to_vec();
        let mut codes = vec![Vec::with_capacity(n); self.n_vars()];
        for _ in 0..n {
            for (c, &s) in codes.iter_mut().zip(&state) {
                c.push(s);
            }
            let next = (self.transition)(&state);
            state = draw(&mut rng, &next).to_vec();
        }
        SymbolSeries::from_codes(codes, self.alphabet.clone())
    }
}

/// `q -> q + 1 mod 4`.
pub fn rotation() -> SymbolicFixture {
    SymbolicFixture {
        name: "rotation",
        description: "rotation q -> q + 1 mod 4",
        alphabet: vec![4],
        initial: uniform_over(&[4]),
        transition: Box::new(|q| vec![(vec![(q[0] + 1) % 4], 1.0)]),
        stationary: true,
    }
}

/// A fixed permutation of six states.
pub fn permutation() -> SymbolicFixture {
    const PERM: [u32; 6] = [3, 0, 4, 1, 5, 2];
    SymbolicFixture {
        name: "permutation",
        description: "permutation 0->3, 1->0, 2->4, 3->1, 4->5, 5->2",
        alphabet: vec![6],
        initial: uniform_over(&[6]),
        transition: Box::new(|q| vec![(vec![PERM[q[0] as usize]], 1.0)]),
        stationary: true,
    }
}

/// `q -> 2q mod 4`, which merges states and forgets the high bit.
pub fn doubling() -> SymbolicFixture {
    SymbolicFixture {
        name: "doubling",
        description: "doubling map q -> 2q mod 4 from a uniform state",
        alphabet: vec![4],
        initial: uniform_over(&[4]),
        transition: Box::new(|q| vec![(vec![(2 * q[0]) % 4], 1.0)]),
        stationary: false,
    }
}

/// Two fair input bits and `y' = x1 xor x2`.
pub fn xor() -> SymbolicFixture {
    SymbolicFixture {
        name: "xor",
        description: "fresh fair bits x1, x2 and y' = x1 xor x2",
        alphabet: vec![2, 2, 2],
        initial: uniform_over(&[2, 2, 2]),
        transition: Box::new(|q| {
            let y = q[0] ^ q[1];
            all_tuples(&[2, 2]).into_iter().map(|t| (vec![t[0], t[1], y], 0.25)).collect()
        }),
        stationary: true,
    }
}

/// Chain `x -> y -> z` of binary symmetric channels with flip probability
/// 0.1, fed by fresh fair bits.
pub fn markov_chain() -> SymbolicFixture {
    const FLIP: f64 = 0.1;
    SymbolicFixture {
        name: "markov-chain",
        description: "fresh bit x, y' = noisy copy of x, z' = noisy copy of y",
        alphabet: vec![2, 2, 2],
        initial: uniform_over(&[2, 2, 2]),
        transition: Box::new(|q| {
            let mut out = Vec::with_capacity(8);
            for x in 0..2 {
                for (y, py) in flip(q[0], FLIP) {
                    for (z, pz) in flip(q[1], FLIP) {
                        out.push((vec![x, y, z], 0.5 * py * pz));
                    }
                }
            }
            out
        }),
        stationary: true,
    }
}

/// Two independent binary Markov chains with flip probabilities 0.1 and 0.3.
pub fn independent_chains() -> SymbolicFixture {
    SymbolicFixture {
        name: "independent-chains",
        description: "two uncoupled binary Markov chains",
        alphabet: vec![2, 2],
        initial: uniform_over(&[2, 2]),
        transition: Box::new(|q| {
            let mut out = Vec::with_capacity(4);
            for (a, pa) in flip(q[0], 0.1) {
                for (b, pb) in flip(q[1], 0.3) {
                    out.push((vec![a, b], pa * pb));
                }
            }
            out
        }),
        stationary: true,
    }
}

/// Every fixture, in catalog order.
pub fn symbolic_map_suite() -> Vec<SymbolicFixture> {
    vec![rotation(), permutation(), doubling(), xor(), markov_chain(), independent_chains()]
}

/// Looks a fixture up by name.
pub fn fixture(name: &str) -> Result<SymbolicFixture> {
    symbolic_map_suite()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::InvalidSystem(format!("unknown fixture {name:?}")))
}
