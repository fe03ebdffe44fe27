//! Sampling the full measurement pipeline.
//!
//! A trajectory draws a leaf of the decomposition tree, walks the leaf's
//! projective plan until a vertex is reached, and relabels the vertex through
//! `p(i|k)`. Every trajectory owns one ChaCha stream of the run seed, so runs
//! are reproducible regardless of thread scheduling.

mod oracle;
mod stats;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{eigh2, ket_norm_sqr, ComplexMatrix2, HermitianOp, Ket};
use crate::error::{Error, Result};
use crate::fixtures::random_pure_state;
use crate::povm::{decompose_to_lipovms, to_ppovm, validate_state, LipovmTree, Povm, PpovmPlan};
use crate::tolerance::Tolerances;
use crate::walk::{advance, init_walk, plan_step, step_probabilities, vertex_check, WalkConfig, WalkState};

pub use oracle::{oracle_enumerate, OracleReport, StringRecord, ORACLE_STRING_LIMIT};
pub use stats::{compare_statistics, OutcomeStatistics, Verdict};

/// Source of pure input states for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSampler {
    Pure { ket: Ket },
    /// Draws eigenvector `i` of a density matrix with probability `p_i`.
    Ensemble { probabilities: Vec<f64>, kets: Vec<Ket> },
    /// Uniform on the Bloch sphere; averages to `I/2`.
    Haar,
}

impl StateSampler {
    pub fn pure(ket: Ket) -> Result<Self> {
        let n = ket_norm_sqr(&ket);
        if !n.is_finite() || (n - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state norm^2 = {n}")));
        }
        Ok(StateSampler::Pure { ket })
    }

    /// Eigen-ensemble of a density matrix.
    pub fn from_density(rho: &HermitianOp, tol: &Tolerances) -> Result<Self> {
        validate_state(rho, tol)?;
        let eig = eigh2(rho);
        let probabilities: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = probabilities.iter().sum();
        Ok(StateSampler::Ensemble {
            probabilities: probabilities.iter().map(|p| p / total).collect(),
            kets: eig.vectors.to_vec(),
        })
    }

    pub fn density(&self) -> HermitianOp {
        match self {
            StateSampler::Pure { ket } => HermitianOp::projector(ket),
            StateSampler::Ensemble { probabilities, kets } => probabilities
                .iter()
                .zip(kets)
                .map(|(p, k)| HermitianOp::projector(k).scale(*p))
                .sum(),
            StateSampler::Haar => HermitianOp::identity().scale(0.5),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Ket {
        match self {
            StateSampler::Pure { ket } => *ket,
            StateSampler::Ensemble { probabilities, kets } => {
                kets[sample_index(probabilities, rng.gen())]
            }
            StateSampler::Haar => random_pure_state(rng),
        }
    }
}

/// Inverse-CDF draw; rounding slack past the last cumulative sum goes to the
/// last outcome with positive weight.
fn sample_index(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probabilities.len() - 1)
}

/// Draws a step outcome from `<psi|M_k^dag M_k|psi>`.
pub fn sample_step_outcome<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    sample_index(probabilities, rng.gen())
}

/// Structural checks on the accumulated operator of a finished trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestructiveCheck {
    pub lower_left_zero: bool,
    /// `| |a_11/a_00| - cos^N phi |`; `None` when `a_00 = 0` (a jump onto
    /// `|1>`), where the ratio is undefined.
    pub ratio_residual: Option<f64>,
    /// `1 - |<0|psi_N>|^2`
    pub infidelity: f64,
    /// `100 cos^{2N} phi`
    pub infidelity_bound: f64,
    /// `|<r|psi_0>|^2 / |r|^2` for the top row `r` of the accumulated operator.
    pub input_overlap: f64,
    /// `cos^{2N} phi`
    pub decay: f64,
}

impl DestructiveCheck {
    /// `infidelity <= 100 cos^{2N} phi`. Not guaranteed: an input nearly
    /// orthogonal to the top row of `M` leaves a relatively large `|1>` part.
    pub fn within_fixed_bound(&self) -> bool {
        self.infidelity <= self.infidelity_bound
    }

    /// `infidelity <= cos^{2N} phi / overlap`, which holds for every
    /// upper-triangular `M` with `|a_11 / a_00| = cos^N phi`.
    pub fn within_state_bound(&self) -> bool {
        self.infidelity * self.input_overlap <= self.decay * (1.0 + 1e-9) + 1e-15
    }

    pub fn passes(&self) -> bool {
        self.lower_left_zero
            && self.ratio_residual.map_or(true, |r| r <= 1e-9)
            && self.within_state_bound()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub leaf: usize,
    pub outcomes: Vec<usize>,
    pub log_probabilities: Vec<f64>,
    /// Plan index of the vertex reached; `None` if `max_steps` ran out.
    pub vertex: Option<usize>,
    /// Original POVM label.
    pub output: Option<usize>,
    pub final_x: Vec<f64>,
    pub final_state: Ket,
    pub steps: usize,
    pub check: DestructiveCheck,
}

impl TrajectoryRecord {
    pub fn converged(&self) -> bool {
        self.vertex.is_some()
    }

    /// Probability of the outcome string, `exp(sum log p)`.
    pub fn string_probability(&self) -> f64 {
        self.log_probabilities.iter().sum::<f64>().exp()
    }
}

/// `1 - |<0|psi>|^2`
pub fn destructiveness_metric(record: &TrajectoryRecord) -> f64 {
    infidelity(&record.final_state)
}

fn infidelity(psi: &Ket) -> f64 {
    (1.0 - psi[0].norm_sqr() / ket_norm_sqr(psi)).max(0.0)
}

fn top_row_overlap(m: &ComplexMatrix2, psi: &Ket) -> f64 {
    let u = m.at(0, 0) * psi[0] + m.at(0, 1) * psi[1];
    let row = m.at(0, 0).norm_sqr() + m.at(0, 1).norm_sqr();
    if row > 0.0 {
        u.norm_sqr() / (row * ket_norm_sqr(psi))
    } else {
        0.0
    }
}

fn destructive_check(state: &WalkState, phi: f64, psi0: &Ket) -> DestructiveCheck {
    let m = state.accumulated_op();
    let decay = phi.cos().powi(2 * state.steps() as i32);
    DestructiveCheck {
        lower_left_zero: m.at(1, 0) == Complex64::new(0.0, 0.0),
        ratio_residual: state.destructive_residual(phi).ok(),
        infidelity: infidelity(state.system_state()),
        infidelity_bound: 100.0 * decay,
        input_overlap: top_row_overlap(m, psi0),
        decay,
    }
}

/// Walks one leaf plan from `psi0` and relabels the vertex reached.
pub fn run_trajectory<R: Rng + ?Sized>(
    plan: &PpovmPlan,
    psi0: &Ket,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    let active = plan.active();
    if active.len() == 1 {
        let vertex = active[0];
        let i = plan.relabel(vertex, rng);
        return Ok(TrajectoryRecord {
            leaf: 0,
            outcomes: Vec::new(),
            log_probabilities: Vec::new(),
            vertex: Some(vertex),
            output: Some(plan.source.labels()[i]),
            final_x: vec![1.0],
            final_state: *psi0,
            steps: 0,
            check: DestructiveCheck {
                lower_left_zero: true,
                ratio_residual: Some(0.0),
                infidelity: infidelity(psi0),
                infidelity_bound: 100.0,
                input_overlap: top_row_overlap(&ComplexMatrix2::identity(), psi0),
                decay: 1.0,
            },
        });
    }
    let mut state = init_walk(plan, psi0, cfg)?;
    let mut outcomes = Vec::new();
    let mut log_probabilities = Vec::new();
    let vertex = loop {
        if let Some(v) = vertex_check(&state, cfg) {
            break Some(state.indices()[v]);
        }
        if state.steps() >= cfg.max_steps {
            break None;
        }
        let step = plan_step(&state, cfg)?;
        let probs = step_probabilities(&state, &step);
        let k = sample_step_outcome(&probs, rng);
        state = advance(&state, &step, k, cfg)?;
        outcomes.push(k);
        log_probabilities.push(probs[k].ln());
    };
    let output = vertex.map(|v| plan.source.labels()[plan.relabel(v, rng)]);
    Ok(TrajectoryRecord {
        leaf: 0,
        outcomes,
        log_probabilities,
        vertex,
        output,
        final_x: state.x().to_vec(),
        final_state: *state.system_state(),
        steps: state.steps(),
        check: destructive_check(&state, cfg.phi, psi0),
    })
}

/// One row of the per-trajectory table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub trajectory: usize,
    pub leaf: usize,
    pub steps: usize,
    pub vertex: Option<usize>,
    pub output: Option<usize>,
    pub final_infidelity: f64,
    pub check: DestructiveCheck,
}

impl From<(usize, &TrajectoryRecord)> for TrajectorySummary {
    fn from((trajectory, r): (usize, &TrajectoryRecord)) -> Self {
        TrajectorySummary {
            trajectory,
            leaf: r.leaf,
            steps: r.steps,
            vertex: r.vertex,
            output: r.output,
            final_infidelity: r.check.infidelity,
            check: r.check,
        }
    }
}

/// Aggregate structural checks over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestructiveSummary {
    pub checked: usize,
    pub lower_left_nonzero: usize,
    pub max_ratio_residual: f64,
    pub ratio_undefined: usize,
    /// Trajectories over `100 cos^{2N} phi`.
    pub infidelity_violations: usize,
    /// Smallest input overlap among those trajectories; 1 if there are none.
    pub min_violating_overlap: f64,
    /// Trajectories over `cos^{2N} phi / overlap`.
    pub state_bound_violations: usize,
}

impl DestructiveSummary {
    pub fn passes(&self) -> bool {
        self.lower_left_nonzero == 0
            && self.max_ratio_residual <= 1e-9
            && self.state_bound_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub tree: LipovmTree,
    pub plans: Vec<PpovmPlan>,
    pub statistics: OutcomeStatistics,
    pub destructive: DestructiveSummary,
    pub trajectories: Vec<TrajectorySummary>,
}

/// The decomposition tree and one projective plan per leaf.
pub fn prepare(povm: &Povm, tol: &Tolerances) -> Result<(LipovmTree, Vec<PpovmPlan>)> {
    let tree = decompose_to_lipovms(povm, tol)?;
    let plans = tree
        .leaves()
        .iter()
        .map(|leaf| to_ppovm(leaf.povm, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok((tree, plans))
}

/// Generator for trajectory `index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `trajectories` independent pipelines and aggregates the outputs.
/// Trajectories that do not reach a vertex within `max_steps` are counted
/// but left out of the frequencies.
pub fn run_pipeline(
    povm: &Povm,
    sampler: &StateSampler,
    cfg: &WalkConfig,
    seed: u64,
    trajectories: usize,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if trajectories == 0 {
        return Err(Error::Config("trajectory count must be positive".into()));
    }
    let (tree, plans) = prepare(povm, &cfg.tolerances)?;
    let rows = (0..trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = trajectory_rng(seed, t);
            let psi = sampler.sample(&mut rng);
            let leaf = tree.sample_leaf(&mut rng);
            let mut record = run_trajectory(&plans[leaf], &psi, cfg, &mut rng)?;
            record.leaf = leaf;
            Ok(TrajectorySummary::from((t, &record)))
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = crate::povm::born_probabilities(povm, &sampler.density(), &cfg.tolerances)?;
    let mut span_reference = vec![0.0; povm.label_span()];
    for (p, &l) in reference.iter().zip(povm.labels()) {
        span_reference[l] += p;
    }
    let statistics = OutcomeStatistics::from_rows(&rows, span_reference);
    let mut destructive = DestructiveSummary {
        checked: 0,
        lower_left_nonzero: 0,
        max_ratio_residual: 0.0,
        ratio_undefined: 0,
        infidelity_violations: 0,
        min_violating_overlap: 1.0,
        state_bound_violations: 0,
    };
    for row in rows.iter().filter(|r| r.vertex.is_some()) {
        destructive.checked += 1;
        if !row.check.lower_left_zero {
            destructive.lower_left_nonzero += 1;
        }
        match row.check.ratio_residual {
            Some(r) => destructive.max_ratio_residual = destructive.max_ratio_residual.max(r),
            None => destructive.ratio_undefined += 1,
        }
        if !row.check.within_fixed_bound() {
            destructive.infidelity_violations += 1;
            destructive.min_violating_overlap =
                destructive.min_violating_overlap.min(row.check.input_overlap);
        }
        if !row.check.within_state_bound() {
            destructive.state_bound_violations += 1;
        }
    }
    Ok(PipelineRun {
        tree,
        plans,
        statistics,
        destructive,
        trajectories: rows,
    })
}
