//! Qubit POVMs realized as sequences of destructive weak measurements.
//!
//! The pipeline has three stages:
//!
//! 1. **Pre-processing** ([`povm::decompose_to_lipovms`]): a POVM with linearly
//!    dependent elements is split, with classical probabilities, into a tree of
//!    linearly independent POVMs of at most four outcomes.
//! 2. **Walk** ([`walk`]): each leaf is converted to a projective POVM
//!    ([`povm::to_ppovm`]) and executed as a random walk in the probability
//!    simplex, where every step is a weak swap with a fresh `|0>` ancilla
//!    followed by a projective ancilla measurement.
//! 3. **Post-processing**: the vertex the walk converges to is relabeled through
//!    the conditional matrix `p(i|k)`.
//!
//! [`engine`] samples the full pipeline and provides an exact enumerator over
//! short outcome strings used as a verification oracle.

pub mod algebra;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod povm;
pub mod tolerance;
pub mod walk;

pub use algebra::{BlochForm, ComplexMatrix2, EigenPair2, HermitianOp, Ket};
pub use error::{Error, Result};
pub use povm::{LipovmTree, Povm, PpovmPlan};
pub use tolerance::Tolerances;
pub use walk::{StepPlan, WalkConfig, WalkState};
