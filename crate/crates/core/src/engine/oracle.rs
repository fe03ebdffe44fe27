//! Exact enumeration of all outcome strings up to a fixed depth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{ket_norm_sqr, ComplexMatrix2, HermitianOp, Ket};
use crate::error::{Error, Result};
use crate::povm::{born_probabilities, PpovmPlan};
use crate::walk::{advance, init_walk, plan_step, step_probabilities, vertex_check, WalkConfig, WalkState};

/// Largest number of strings `n^depth` the enumerator accepts.
pub const ORACLE_STRING_LIMIT: f64 = 1e6;

/// Levels of the tree expanded in parallel.
const PARALLEL_LEVELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringRecord {
    pub outcomes: Vec<usize>,
    /// Product of the per-step conditional probabilities.
    pub probability: f64,
    /// `|M_{k_N} ... M_{k_1} psi_0|^2` from the unnormalized product.
    pub direct_probability: f64,
    /// Plan index of `argmax x` at the end of the string.
    pub nearest_vertex: usize,
    /// Whether the string stopped early at a vertex.
    pub absorbed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub depth: usize,
    pub string_count: usize,
    pub total_probability: f64,
    /// Max `|probability - direct_probability|` over strings.
    pub max_crosscheck_residual: f64,
    /// Mass per plan index, grouped by nearest vertex.
    pub vertex_masses: Vec<f64>,
    /// Mass of strings that stopped at a vertex before `depth`.
    pub absorbed_mass: f64,
    /// Vertex masses relabeled through `p(i|k)`, by original label.
    pub output_masses: Vec<f64>,
    /// Born probabilities of the plan's source POVM, by original label.
    pub reference: Vec<f64>,
    pub total_variation: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strings: Vec<StringRecord>,
}

#[derive(Default)]
struct Tally {
    strings: Vec<StringRecord>,
    count: usize,
    total: f64,
    residual: f64,
    vertex_masses: Vec<f64>,
    absorbed: f64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally {
            vertex_masses: vec![0.0; n],
            ..Tally::default()
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.strings.extend(other.strings);
        self.count += other.count;
        self.total += other.total;
        self.residual = self.residual.max(other.residual);
        for (a, b) in self.vertex_masses.iter_mut().zip(other.vertex_masses) {
            *a += b;
        }
        self.absorbed += other.absorbed;
        self
    }
}

struct Node {
    state: WalkState,
    product: ComplexMatrix2,
    probability: f64,
    outcomes: Vec<usize>,
}

struct Context<'a> {
    psi0: Ket,
    cfg: &'a WalkConfig,
    depth: usize,
    keep: bool,
}

impl Context<'_> {
    fn leaf(&self, node: Node, absorbed: bool, tally: &mut Tally) {
        let psi = node.product.apply(&self.psi0);
        let direct = ket_norm_sqr(&psi);
        let x = node.state.x();
        let mut best = 0;
        for i in 1..x.len() {
            if x[i] > x[best] {
                best = i;
            }
        }
        tally.count += 1;
        tally.total += node.probability;
        tally.residual = tally.residual.max((node.probability - direct).abs());
        tally.vertex_masses[best] += node.probability;
        if absorbed {
            tally.absorbed += node.probability;
        }
        if self.keep {
            tally.strings.push(StringRecord {
                outcomes: node.outcomes,
                probability: node.probability,
                direct_probability: direct,
                nearest_vertex: node.state.indices()[best],
                absorbed,
            });
        }
    }

    fn children(&self, node: &Node) -> Result<Vec<Node>> {
        let step = plan_step(&node.state, self.cfg)?;
        let probs = step_probabilities(&node.state, &step);
        let mut out = Vec::with_capacity(probs.len());
        for (k, &p) in probs.iter().enumerate() {
            let state = match advance(&node.state, &step, k, self.cfg) {
                Ok(s) => s,
                Err(Error::ZeroProbability { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut outcomes = node.outcomes.clone();
            outcomes.push(k);
            out.push(Node {
                state,
                product: step.outcomes[k].measurement.operator * node.product,
                probability: node.probability * p,
                outcomes,
            });
        }
        Ok(out)
    }

    fn expand(&self, node: Node, tally: &mut Tally) -> Result<()> {
        if vertex_check(&node.state, self.cfg).is_some() {
            self.leaf(node, true, tally);
            return Ok(());
        }
        if node.outcomes.len() == self.depth {
            self.leaf(node, false, tally);
            return Ok(());
        }
        for child in self.children(&node)? {
            self.expand(child, tally)?;
        }
        Ok(())
    }

    fn expand_parallel(&self, node: Node, level: usize) -> Result<Tally> {
        let n = node.state.len();
        let done = vertex_check(&node.state, self.cfg).is_some() || node.outcomes.len() == self.depth;
        if level >= PARALLEL_LEVELS || done {
            let mut tally = Tally::new(n);
            self.expand(node, &mut tally)?;
            return Ok(tally);
        }
        let children = self.children(&node)?;
        let tallies = children
            .into_par_iter()
            .map(|c| self.expand_parallel(c, level + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(tallies.into_iter().fold(Tally::new(n), Tally::merge))
    }
}

/// Enumerates every outcome string of length `depth` (or shorter, if the
/// walk reaches a vertex first) with its exact probability.
///
/// Each string's probability is the product of per-step conditional
/// probabilities; it is cross-checked against the norm of the unnormalized
/// operator product applied to `psi0`.
pub fn oracle_enumerate(
    plan: &PpovmPlan,
    psi0: &Ket,
    cfg: &WalkConfig,
    depth: usize,
    keep_strings: bool,
) -> Result<OracleReport> {
    let active = plan.active();
    let tally = if active.len() == 1 {
        // A single nonzero element needs no walk; the empty string has
        // probability one and sits on the vertex.
        cfg.validate()?;
        let norm = ket_norm_sqr(psi0);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state norm^2 = {norm}")));
        }
        Tally {
            strings: if keep_strings {
                vec![StringRecord {
                    outcomes: Vec::new(),
                    probability: 1.0,
                    direct_probability: norm,
                    nearest_vertex: active[0],
                    absorbed: true,
                }]
            } else {
                Vec::new()
            },
            count: 1,
            total: 1.0,
            residual: (1.0 - norm).abs(),
            vertex_masses: vec![1.0],
            absorbed: 1.0,
        }
    } else {
        let state = init_walk(plan, psi0, cfg)?;
        let n = state.len();
        let strings = (n as f64).powi(depth as i32);
        if strings > ORACLE_STRING_LIMIT {
            return Err(Error::OracleGuard {
                strings,
                limit: ORACLE_STRING_LIMIT,
            });
        }
        let ctx = Context {
            psi0: *psi0,
            cfg,
            depth,
            keep: keep_strings,
        };
        let root = Node {
            state,
            product: ComplexMatrix2::identity(),
            probability: 1.0,
            outcomes: Vec::new(),
        };
        ctx.expand_parallel(root, 0)?
    };
    if tally.residual > 1e-12 {
        return Err(Error::Invariant(format!(
            "string probability differs from the operator product by {:e}",
            tally.residual
        )));
    }

    let source = &plan.source;
    let span = source.label_span();
    let mut output_masses = vec![0.0; span];
    for (local, &k) in active.iter().enumerate() {
        for (i, &label) in source.labels().iter().enumerate() {
            output_masses[label] += tally.vertex_masses[local] * plan.conditional[i][k];
        }
    }
    let mut reference = vec![0.0; span];
    let born = born_probabilities(source, &HermitianOp::projector(psi0), &cfg.tolerances)?;
    for (p, &label) in born.iter().zip(source.labels()) {
        reference[label] += p;
    }
    let total_variation = 0.5
        * output_masses
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    let mut vertex_masses = vec![0.0; plan.len()];
    for (local, &k) in active.iter().enumerate() {
        vertex_masses[k] = tally.vertex_masses[local];
    }
    Ok(OracleReport {
        depth,
        string_count: tally.count,
        total_probability: tally.total,
        max_crosscheck_residual: tally.residual,
        vertex_masses,
        absorbed_mass: tally.absorbed,
        output_masses,
        reference,
        total_variation,
        strings: tally.strings,
    })
}
