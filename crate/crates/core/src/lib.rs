//! Information-theoretic causality, reduced-order model assessment and
//! control for discrete-time dynamical systems.
//!
//! The crate is organized bottom-up:
//!
//! - [`discretization`]: signals, phase-space partitions and plug-in joint PMFs.
//! - [`infocore`]: entropies, mutual informations, co-information, KL divergence.
//! - [`causality`]: information fluxes, leaks and causality maps.
//! - [`modeling`]: Fano/Markov/Pinsker error bounds and KL-minimizing fits.
//! - [`control`]: observability, controllability, channel capacity and the
//!   KL-minimizing controller search.
//! - [`systems`]: desk-scale simulators and exact symbolic fixtures.
//! - [`io`]: CSV and binary signal formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causality;
pub mod control;
pub mod discretization;
pub mod error;
pub mod infocore;
pub mod io;
pub mod modeling;
pub mod optim;
pub mod rng;
pub mod systems;

pub use discretization::{discretize, estimate_joint_pmf, JointPMF, PartitionSpec, Scheme, SignalMatrix, SymbolSeries};
pub use error::{Error, Result};
pub use infocore::{Bits, VariableSet};
