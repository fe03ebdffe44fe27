//! Random walk in the probability simplex driven by destructive weak
//! measurements.
//!
//! The walk position `x` parameterizes the accumulated POVM element
//! `M^dag M ∝ sum_i x_i E_i`. Every step multiplies the accumulated operator by
//! one of the operators of a [`StepPlan`] and moves `x` to the corresponding
//! `x_k`. The walk ends when `max_i x_i >= 1 - epsilon`.

mod simplex_map;
mod step;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{
    dot3, ket_norm_sqr, normalize_ket, pauli_compose, pauli_decompose, polar_unitary, BlochForm,
    ComplexMatrix2, HermitianOp, Ket,
};
use crate::error::{Error, Result};
use crate::povm::PpovmPlan;
use crate::tolerance::Tolerances;

pub use simplex_map::{bloch_to_simplex, simplex_to_bloch, SimplexMap};
pub use step::{
    default_max_steps, destructive_length, mixture_bloch, plan_step, reconstruct_operator,
    solve_step_length, solve_weights, target_direction, target_element, target_length,
    DestructiveOperator, OutcomePlan, StepPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub phi: f64,
    pub epsilon_vertex: f64,
    pub max_steps: usize,
    pub tolerances: Tolerances,
}

impl WalkConfig {
    /// Config with the default step budget for `phi` and `epsilon_vertex`.
    pub fn new(phi: f64, epsilon_vertex: f64) -> Result<Self> {
        step::check_phi(phi)?;
        Self::checked(WalkConfig {
            phi,
            epsilon_vertex,
            max_steps: default_max_steps(phi, epsilon_vertex.clamp(1e-300, 0.1)),
            tolerances: Tolerances::default(),
        })
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Result<Self> {
        self.max_steps = max_steps;
        Self::checked(self)
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn validate(&self) -> Result<()> {
        Self::checked(*self).map(|_| ())
    }

    fn checked(cfg: WalkConfig) -> Result<Self> {
        step::check_phi(cfg.phi)?;
        if !(cfg.epsilon_vertex > 0.0 && cfg.epsilon_vertex < 0.1) {
            return Err(Error::Config(format!(
                "epsilon_vertex = {} outside (0, 0.1)",
                cfg.epsilon_vertex
            )));
        }
        if cfg.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(cfg)
    }
}

/// The walk over the nonzero elements of a projective plan.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    x: Vec<f64>,
    accumulated_op: ComplexMatrix2,
    unitary: ComplexMatrix2,
    system_state: Ket,
    steps: usize,
    frame: Vec<BlochForm>,
    original: Arc<Vec<BlochForm>>,
    map: Arc<SimplexMap>,
    indices: Arc<Vec<usize>>,
    singular: bool,
    drift: f64,
}

impl WalkState {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn accumulated_op(&self) -> &ComplexMatrix2 {
        &self.accumulated_op
    }

    pub fn unitary(&self) -> &ComplexMatrix2 {
        &self.unitary
    }

    pub fn system_state(&self) -> &Ket {
        &self.system_state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Bloch forms of `U E_i U^dag` for the walked elements.
    pub fn frame(&self) -> &[BlochForm] {
        &self.frame
    }

    /// Bloch forms of the walked elements `E_i`.
    pub fn original(&self) -> &[BlochForm] {
        &self.original
    }

    /// Plan index of each walked element.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `max_i |x_i - (x_k)_i|` between the position read off the accumulated
    /// operator and the planned `x_k` of the last step.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Set once the accumulated operator has lost rank; the walk sits on a
    /// vertex and the unitary factor is frozen.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// `sum_i x_i E_i`
    pub fn mixture(&self) -> HermitianOp {
        self.x
            .iter()
            .zip(self.original.iter())
            .map(|(xi, e)| pauli_compose(e).scale(*xi))
            .sum()
    }

    /// `max(|sum x - 1|, max(-x_i, 0))`
    pub fn simplex_residual(&self) -> f64 {
        simplex_residual(&self.x)
    }

    /// Distance between the trace-normalized `M^dag M` and the trace-normalized
    /// `sum_i x_i E_i`.
    pub fn proportionality_residual(&self) -> f64 {
        let m = self.accumulated_op;
        let lhs = HermitianOp::hermitize(&(m.adjoint() * m));
        let rhs = self.mixture();
        lhs.scale(1.0 / lhs.trace())
            .max_distance(&rhs.scale(1.0 / rhs.trace()))
    }

    /// `| |a_11 / a_00| - cos^N phi |`, or an error if the lower-left entry is
    /// nonzero or `a_00` vanishes.
    pub fn destructive_residual(&self, phi: f64) -> Result<f64> {
        let m = self.accumulated_op;
        if m.at(1, 0) != num_complex::Complex64::new(0.0, 0.0) {
            return Err(Error::Invariant(format!(
                "accumulated operator has lower-left entry {}",
                m.at(1, 0)
            )));
        }
        let a00 = m.at(0, 0).norm();
        if a00 == 0.0 {
            return Err(Error::Invariant("accumulated operator has a_00 = 0".into()));
        }
        let expected = phi.cos().powi(self.steps as i32);
        Ok((m.at(1, 1).norm() / a00 - expected).abs())
    }
}

pub fn simplex_residual(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    let neg = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
    (sum - 1.0).abs().max(neg)
}

/// Starts the walk at the simplex center with `M = U = I`.
pub fn init_walk(plan: &PpovmPlan, psi0: &Ket, cfg: &WalkConfig) -> Result<WalkState> {
    cfg.validate()?;
    let tol = &cfg.tolerances;
    let indices = plan.active();
    let n = indices.len();
    if !(2..=4).contains(&n) {
        return Err(Error::WalkSize(n));
    }
    let elements = plan.ppovm.elements();
    let original: Vec<BlochForm> = indices.iter().map(|&i| pauli_decompose(&elements[i])).collect();
    for (k, e) in original.iter().enumerate() {
        if (e.bloch_length() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "element {} is not rank one (Bloch length {})",
                indices[k],
                e.bloch_length()
            )));
        }
    }
    let map = match SimplexMap::new(&original, tol) {
        Err(Error::Rank { .. }) => return Err(Error::DependentElements),
        Err(e) => return Err(e),
        Ok(map) => map,
    };
    let norm = ket_norm_sqr(psi0);
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("state norm^2 = {norm}")));
    }
    Ok(WalkState {
        x: vec![1.0 / n as f64; n],
        accumulated_op: ComplexMatrix2::identity(),
        unitary: ComplexMatrix2::identity(),
        system_state: *psi0,
        steps: 0,
        frame: original.clone(),
        original: Arc::new(original),
        map: Arc::new(map),
        indices: Arc::new(indices),
        singular: false,
        drift: 0.0,
    })
}

/// Bloch forms of `U E_i U^dag`.
pub fn effective_elements(unitary: &ComplexMatrix2, original: &[BlochForm]) -> Vec<BlochForm> {
    original
        .iter()
        .map(|e| pauli_decompose(&pauli_compose(e).conjugate_by(unitary)))
        .collect()
}

/// Simplex position of `M^dag M ∝ sum_i x_i E_i`.
pub fn position_of(m: &ComplexMatrix2, map: &SimplexMap, tol: &Tolerances) -> Result<Vec<f64>> {
    let form = pauli_decompose(&HermitianOp::hermitize(&(m.adjoint() * *m)));
    bloch_to_simplex(map, &form.v, tol)
}

/// Applies outcome `k` of `plan` to the walk.
///
/// The new position is read off the accumulated operator rather than copied
/// from the plan: along some outcome sequences the position map expands
/// rounding errors, while the operator product does not. The planned `x_k`
/// is kept as a cross-check.
pub fn advance(state: &WalkState, plan: &StepPlan, k: usize, cfg: &WalkConfig) -> Result<WalkState> {
    let outcome = plan.outcomes.get(k).ok_or(Error::OutcomeIndex {
        index: k,
        n: plan.outcomes.len(),
    })?;
    let tol = &cfg.tolerances;
    let m = outcome.measurement.operator;

    let psi = m.apply(&state.system_state);
    if ket_norm_sqr(&psi).sqrt() < 1e-14 {
        return Err(Error::ZeroProbability { outcome: k });
    }
    let system_state = normalize_ket(&psi).ok_or(Error::ZeroProbability { outcome: k })?;

    let product = m * state.accumulated_op;
    let top = product.singular_values()[0];
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Invariant(format!("accumulated operator norm {top}")));
    }
    let accumulated_op = product.scale(1.0 / top);
    let (unitary, singular) = match polar_unitary(&accumulated_op, tol) {
        Ok(u) => (u, false),
        Err(Error::SingularMatrix { .. }) => (state.unitary, true),
        Err(e) => return Err(e),
    };
    let frame = if singular {
        state.frame.clone()
    } else {
        effective_elements(&unitary, &state.original)
    };
    let x = position_of(&accumulated_op, &state.map, tol)?;
    let drift = x
        .iter()
        .zip(&outcome.next_x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if drift > 1e-8 {
        return Err(Error::Invariant(format!(
            "planned position differs from the accumulated operator by {drift:e}"
        )));
    }

    Ok(WalkState {
        x,
        accumulated_op,
        unitary,
        system_state,
        steps: state.steps + 1,
        frame,
        original: Arc::clone(&state.original),
        map: Arc::clone(&state.map),
        indices: Arc::clone(&state.indices),
        singular,
        drift,
    })
}

/// Index (into the walked elements) of the vertex reached, if
/// `max_i x_i >= 1 - epsilon`. Ties go to the lowest index.
pub fn vertex_check(state: &WalkState, cfg: &WalkConfig) -> Option<usize> {
    let mut best = 0;
    for (i, &v) in state.x.iter().enumerate() {
        if v > state.x[best] {
            best = i;
        }
    }
    (state.x[best] >= 1.0 - cfg.epsilon_vertex).then_some(best)
}

/// Outcome probabilities of the planned step on the current system state.
pub fn step_probabilities(state: &WalkState, plan: &StepPlan) -> Vec<f64> {
    plan.probabilities(&state.system_state)
}

/// Pairwise dot products `v_i . v_j` of a frame, row-major.
pub fn frame_gram(frame: &[BlochForm]) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.len() * frame.len());
    for a in frame {
        for b in frame {
            out.push(dot3(&a.v, &b.v));
        }
    }
    out
}

#[cfg(test)]
mod tests;
