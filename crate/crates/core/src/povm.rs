//! POVM validation and the classical pre- and post-processing around the walk.
//!
//! A POVM with linearly dependent elements is split into a probability tree of
//! linearly independent POVMs ([`decompose_to_lipovms`]). Each leaf is then
//! replaced by a projective POVM plus a column-stochastic relabeling matrix
//! ([`to_ppovm`]).

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{eigh2, pauli_decompose, HermitianOp, Ket};
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// A validated qubit POVM.
///
/// `labels[i]` is the outcome identifier of `elements[i]` in the POVM the
/// decomposition started from, so leaves of a [`LipovmTree`] can be mapped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Povm {
    elements: Vec<HermitianOp>,
    labels: Vec<usize>,
}

impl Povm {
    /// Validates positivity and completeness; labels must be distinct.
    pub fn with_labels(
        elements: Vec<HermitianOp>,
        labels: Vec<usize>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Empty);
        }
        if labels.len() != elements.len() {
            return Err(Error::LabelMismatch {
                labels: labels.len(),
                elements: elements.len(),
            });
        }
        for (index, e) in elements.iter().enumerate() {
            let min_eigenvalue = e.min_eigenvalue();
            if min_eigenvalue < -tol.psd {
                return Err(Error::NotPositive {
                    index,
                    min_eigenvalue,
                });
            }
        }
        let residual = elements
            .iter()
            .copied()
            .sum::<HermitianOp>()
            .max_distance(&HermitianOp::identity());
        if residual > tol.completeness {
            return Err(Error::Incomplete { residual });
        }
        Ok(Povm { elements, labels })
    }

    pub fn elements(&self) -> &[HermitianOp] {
        &self.elements
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Largest original label plus one.
    pub fn label_span(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    fn without_zero_elements(&self, tol: &Tolerances) -> Result<Povm> {
        let (elements, labels): (Vec<_>, Vec<_>) = self
            .elements
            .iter()
            .zip(&self.labels)
            .filter(|(e, _)| e.trace() > tol.zero_weight)
            .map(|(e, l)| (*e, *l))
            .unzip();
        Povm::with_labels(elements, labels, tol)
    }
}

/// Validates a list of elements as a POVM with labels `0..n`.
pub fn validate_povm(elements: Vec<HermitianOp>, tol: &Tolerances) -> Result<Povm> {
    let labels = (0..elements.len()).collect();
    Povm::with_labels(elements, labels, tol)
}

/// Checks that `rho` is a density operator.
pub fn validate_state(rho: &HermitianOp, tol: &Tolerances) -> Result<()> {
    let trace = rho.trace();
    if (trace - 1.0).abs() > tol.completeness {
        return Err(Error::InvalidState(format!("trace {trace}")));
    }
    let min = rho.min_eigenvalue();
    if min < -tol.psd {
        return Err(Error::InvalidState(format!("eigenvalue {min:e}")));
    }
    Ok(())
}

/// `Tr[E_i rho]` for every element.
pub fn born_probabilities(povm: &Povm, rho: &HermitianOp, tol: &Tolerances) -> Result<Vec<f64>> {
    validate_state(rho, tol)?;
    Ok(povm.elements.iter().map(|e| e.trace_product(rho)).collect())
}

/// `<psi|E_i|psi>` for a normalized pure state.
pub fn born_probabilities_pure(povm: &Povm, psi: &Ket) -> Vec<f64> {
    povm.elements.iter().map(|e| e.expectation(psi)).collect()
}

/// Real coordinates `(q, q v)` of a Hermitian operator.
fn pauli_coordinates(e: &HermitianOp) -> [f64; 4] {
    let b = pauli_decompose(e);
    if b.q == 0.0 {
        [0.0, b.v[0], b.v[1], b.v[2]]
    } else {
        [b.q, b.q * b.v[0], b.q * b.v[1], b.q * b.v[2]]
    }
}

/// Coefficients `c` with `sum c_i E_i = 0`, sorted descending.
///
/// `coefficients[j]` multiplies `elements[order[j]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceWitness {
    pub coefficients: Vec<f64>,
    pub order: Vec<usize>,
}

impl DependenceWitness {
    /// Builds a witness from unsorted coefficients: normalizes to
    /// `max |c| = 1` with that entry positive and stable-sorts descending.
    pub fn from_coefficients(c: &[f64]) -> Self {
        let (pivot, _) = c
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        let scale = c[pivot];
        let normalized: Vec<f64> = c.iter().map(|v| v / scale).collect();
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| normalized[b].total_cmp(&normalized[a]));
        DependenceWitness {
            coefficients: order.iter().map(|&i| normalized[i]).collect(),
            order,
        }
    }

    /// Max-norm of `sum c_i E_i`.
    pub fn residual(&self, povm: &Povm) -> f64 {
        self.order
            .iter()
            .zip(&self.coefficients)
            .map(|(&i, &c)| povm.elements[i].scale(c))
            .sum::<HermitianOp>()
            .matrix()
            .max_norm()
    }
}

/// Returns a witness iff the elements are linearly dependent in the real
/// 4-dimensional space of Hermitian matrices.
///
/// The witness is the right-singular vector of the smallest singular value
/// of the `4 x n` coordinate matrix.
pub fn find_dependence(povm: &Povm, tol: &Tolerances) -> Option<DependenceWitness> {
    let n = povm.len();
    let rows = n.max(4);
    let mut a = DMatrix::<f64>::zeros(rows, n);
    for (j, e) in povm.elements.iter().enumerate() {
        for (i, x) in pauli_coordinates(e).into_iter().enumerate() {
            a[(i, j)] = x;
        }
    }
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    let (min_idx, min_val) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| {
            if v < bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let max_val = sv.iter().copied().fold(0.0, f64::max);
    if n <= 4 && min_val >= tol.dependence_ratio * max_val {
        return None;
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let c: Vec<f64> = (0..n).map(|j| v_t[(min_idx, j)]).collect();
    Some(DependenceWitness::from_coefficients(&c))
}

/// One pre-processing split: perform `a` with probability `p_a`, else `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub a: Povm,
    pub p_a: f64,
    pub b: Povm,
    pub p_b: f64,
}

pub fn split_once(povm: &Povm, w: &DependenceWitness, tol: &Tolerances) -> Result<Split> {
    let n = povm.len();
    if w.coefficients.len() != n || w.order.len() != n {
        return Err(Error::InconsistentWitness {
            residual: f64::INFINITY,
        });
    }
    let residual = w.residual(povm);
    if residual > tol.witness_residual {
        return Err(Error::InconsistentWitness { residual });
    }
    let c = &w.coefficients;
    let (c1, cn) = (c[0], c[n - 1]);
    if !(c1 > 0.0 && cn < 0.0) || c.windows(2).any(|p| p[0] < p[1]) {
        return Err(Error::Invariant(format!(
            "witness must be sorted with c_1 > 0 > c_n, got {c:?}"
        )));
    }
    let side = |positions: std::ops::Range<usize>, pivot: f64| -> Result<Povm> {
        let mut elements = Vec::new();
        let mut labels = Vec::new();
        for j in positions {
            let weight = (pivot - c[j]) / pivot;
            if weight > tol.zero_weight {
                let i = w.order[j];
                elements.push(povm.elements[i].scale(weight));
                labels.push(povm.labels[i]);
            }
        }
        Povm::with_labels(elements, labels, tol)
    };
    let a = side(1..n, c1)?;
    let b = side(0..n - 1, cn)?;
    Ok(Split {
        a,
        p_a: c1 / (c1 - cn),
        b,
        p_b: -cn / (c1 - cn),
    })
}

/// Probability tree whose leaves are linearly independent POVMs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LipovmTree {
    Leaf {
        povm: Povm,
    },
    Branch {
        witness: DependenceWitness,
        p_a: f64,
        a: Box<LipovmTree>,
        p_b: f64,
        b: Box<LipovmTree>,
    },
}

/// A leaf of a [`LipovmTree`] with the product of branch probabilities on
/// its path.
#[derive(Debug, Clone, Copy)]
pub struct LeafRef<'a> {
    pub id: usize,
    pub probability: f64,
    pub povm: &'a Povm,
}

impl LipovmTree {
    /// Leaves in depth-first order (`a` before `b`); `id` is the position.
    pub fn leaves(&self) -> Vec<LeafRef<'_>> {
        let mut out = Vec::new();
        self.collect_leaves(1.0, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, prob: f64, out: &mut Vec<LeafRef<'a>>) {
        match self {
            LipovmTree::Leaf { povm } => out.push(LeafRef {
                id: out.len(),
                probability: prob,
                povm,
            }),
            LipovmTree::Branch { p_a, a, p_b, b, .. } => {
                a.collect_leaves(prob * p_a, out);
                b.collect_leaves(prob * p_b, out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            LipovmTree::Leaf { .. } => 0,
            LipovmTree::Branch { a, b, .. } => 1 + a.depth().max(b.depth()),
        }
    }

    /// Walks from the root choosing branches with their probabilities;
    /// returns the leaf id. Consumes one uniform draw per branch.
    pub fn sample_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                LipovmTree::Leaf { .. } => return offset,
                LipovmTree::Branch { p_a, a, b, .. } => {
                    if rng.gen::<f64>() < *p_a {
                        node = a;
                    } else {
                        offset += a.leaf_count();
                        node = b;
                    }
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            LipovmTree::Leaf { .. } => 1,
            LipovmTree::Branch { a, b, .. } => a.leaf_count() + b.leaf_count(),
        }
    }

    /// Marginal probability of each original label when a leaf is drawn and
    /// measured directly: `sum_leaves P(leaf) Tr[E rho]`.
    pub fn outcome_probabilities(&self, rho: &HermitianOp, span: usize) -> Vec<f64> {
        let mut p = vec![0.0; span];
        for leaf in self.leaves() {
            for (e, &l) in leaf.povm.elements.iter().zip(&leaf.povm.labels) {
                p[l] += leaf.probability * e.trace_product(rho);
            }
        }
        p
    }
}

pub const MAX_DECOMPOSITION_DEPTH: usize = 32;

/// Repeatedly splits until every leaf is linearly independent.
///
/// Zero elements are removed first; they carry no probability.
pub fn decompose_to_lipovms(povm: &Povm, tol: &Tolerances) -> Result<LipovmTree> {
    let cleaned = povm.without_zero_elements(tol)?;
    decompose_at(cleaned, tol, 0)
}

fn decompose_at(povm: Povm, tol: &Tolerances, depth: usize) -> Result<LipovmTree> {
    if depth > MAX_DECOMPOSITION_DEPTH {
        return Err(Error::DepthExceeded {
            depth: MAX_DECOMPOSITION_DEPTH,
        });
    }
    let Some(witness) = find_dependence(&povm, tol) else {
        return Ok(LipovmTree::Leaf { povm });
    };
    let split = split_once(&povm, &witness, tol)?;
    Ok(LipovmTree::Branch {
        witness,
        p_a: split.p_a,
        a: Box::new(decompose_at(split.a, tol, depth + 1)?),
        p_b: split.p_b,
        b: Box::new(decompose_at(split.b, tol, depth + 1)?),
    })
}

/// Spectral data `E = a |a><a| + b |b><b|`, `a >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub a: f64,
    pub b: f64,
    pub ket: Ket,
}

/// A projective POVM plus the relabeling that reproduces the source POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpovmPlan {
    /// `P_k`, each proportional to a rank-1 projector or exactly zero.
    /// Shares labels with `source`.
    pub ppovm: Povm,
    pub eigen_data: Vec<EigenData>,
    /// `conditional[i][k] = p(i|k)`: output element `i` after walk outcome `k`.
    pub conditional: Vec<Vec<f64>>,
    pub source: Povm,
}

impl PpovmPlan {
    /// Indices of the nonzero projective elements, the vertices of the walk.
    pub fn active(&self) -> Vec<usize> {
        self.ppovm
            .elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.trace() > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.ppovm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ppovm.is_empty()
    }

    /// Max-norm residual of `sum_k p(i|k) P_k - E_i` over `i`.
    pub fn reconstruction_residual(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let rebuilt: HermitianOp = (0..n)
                    .map(|k| self.ppovm.elements[k].scale(self.conditional[i][k]))
                    .sum();
                rebuilt.max_distance(&self.source.elements[i])
            })
            .fold(0.0, f64::max)
    }

    /// Max over `k` of `|sum_i p(i|k) - 1|`.
    pub fn column_residual(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| ((0..n).map(|i| self.conditional[i][k]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Draws the output element for walk outcome `k` from `p(.|k)`.
    pub fn relabel<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let n = self.len();
        for i in 0..n {
            acc += self.conditional[i][k];
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        (0..n)
            .rev()
            .find(|&i| self.conditional[i][k] > 0.0)
            .unwrap_or(k)
    }
}

/// Rewrites `E_i = (a_i - b_i)|a_i><a_i| + b_i I` and builds the projective
/// POVM `P_i = (a_i - b_i) / (1 - sum b) |a_i><a_i|` with
/// `p(i|k) = delta_ik (1 - sum b) + b_i`.
///
/// A one-element POVM is `{I}` and maps to itself with `p = [[1]]`.
pub fn to_ppovm(povm: &Povm, tol: &Tolerances) -> Result<PpovmPlan> {
    let n = povm.len();
    let eigen_data: Vec<EigenData> = povm
        .elements
        .iter()
        .map(|e| {
            let eig = eigh2(e);
            EigenData {
                a: eig.values[0],
                b: eig.values[1],
                ket: eig.vectors[0],
            }
        })
        .collect();
    if n == 1 {
        return Ok(PpovmPlan {
            ppovm: povm.clone(),
            eigen_data,
            conditional: vec![vec![1.0]],
            source: povm.clone(),
        });
    }
    let gap = 1.0 - eigen_data.iter().map(|d| d.b).sum::<f64>();
    if gap <= 1e-12 {
        return Err(Error::AllIdentity { gap });
    }
    let elements: Vec<HermitianOp> = eigen_data
        .iter()
        .map(|d| {
            let weight = (d.a - d.b) / gap;
            if d.a - d.b <= tol.zero_weight {
                HermitianOp::zero()
            } else {
                HermitianOp::projector(&d.ket).scale(weight)
            }
        })
        .collect();
    let conditional = (0..n)
        .map(|i| {
            (0..n)
                .map(|k| if i == k { gap + eigen_data[i].b } else { eigen_data[i].b })
                .collect()
        })
        .collect();
    let plan = PpovmPlan {
        ppovm: Povm::with_labels(elements, povm.labels.clone(), tol)?,
        eigen_data,
        conditional,
        source: povm.clone(),
    };
    let residual = plan.reconstruction_residual();
    if residual > tol.completeness {
        return Err(Error::Invariant(format!(
            "projective reconstruction residual {residual:e}"
        )));
    }
    Ok(plan)
}
