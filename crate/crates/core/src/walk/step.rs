//! One destructive weak measurement of the walk.
//!
//! At position `x` with mixture Bloch vector `r`, outcome `k` moves `r` by
//! `dr_k` toward the vertex `v_k`. The system-side operator must satisfy
//!
//! ```text
//! M_k^dag M_k = c_k [ (1 - r.r_k) I + (b (r.dr_k) r + (1/b - 1) dr_k) . sigma ]
//! ```
//!
//! with `sum_k c_k = 1 / (1 - |r|^2)` and `sum_k c_k dr_k = 0`, and it must come
//! from a weak swap with a `|0>` ancilla, which fixes the Bloch length of
//! `M_k^dag M_k` as a function of its direction. Matching the two fixes `|dr_k|`.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    add3, dot3, inverse_sqrt_coefficient, norm3, pauli_compose, scale3, sub3, BlochForm,
    ComplexMatrix2, HermitianOp, Ket,
};
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

use super::simplex_map::bloch_to_simplex;
use super::{WalkConfig, WalkState};

/// Below this `|r|` the direction of `r` is undefined and the `r -> 0` limit
/// is used.
const SMALL_R: f64 = 1e-8;

/// Mixture Bloch vector `r = sum x_i q_i v_i / sum x_i q_i` and the
/// inverse-square-root coefficient `b(|r|)`.
pub fn mixture_bloch(x: &[f64], elements: &[BlochForm]) -> Result<([f64; 3], f64)> {
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for (xi, e) in x.iter().zip(elements) {
        if e.q <= 0.0 {
            return Err(Error::Invariant(format!("element weight q = {}", e.q)));
        }
        let w = xi * e.q;
        den += w;
        num = add3(&num, &scale3(w, &e.v));
    }
    let r = scale3(1.0 / den, &num);
    let norm = norm3(&r);
    if norm >= 1.0 - 1e-12 {
        return Err(Error::DegenerateMixture { norm });
    }
    Ok((r, inverse_sqrt_coefficient(norm)))
}

/// Bloch length of `M^dag M` for a destructive operator whose Bloch vector
/// points along a unit vector with z-component `n_z`:
///
/// ```text
/// L = sin^2 phi / (n_z cos^2 phi + sqrt(sin^2 phi + n_z^2 cos^2 phi))
/// ```
///
/// `L = sin phi` on the equator, `sin^2 phi / (1 + cos^2 phi)` toward `|0>` and
/// `1` toward `|1>`.
pub fn destructive_length(n_z: f64, phi: f64) -> f64 {
    let (s2, c2) = (phi.sin().powi(2), phi.cos().powi(2));
    let root = (s2 + n_z * n_z * c2).sqrt();
    if n_z >= 0.0 {
        s2 / (n_z * c2 + root)
    } else {
        // Same value, without the cancellation in the denominator.
        (root - n_z * c2) / (1.0 + n_z * n_z * c2)
    }
}

/// Unit direction of the Bloch vector of the target operator for a step
/// along `direction`: `b (r.u) r + sqrt(1 - |r|^2) u`, normalized.
pub fn target_direction(r: &[f64; 3], direction: &[f64; 3]) -> [f64; 3] {
    let rho = norm3(r);
    if rho < SMALL_R {
        return *direction;
    }
    let b = inverse_sqrt_coefficient(rho);
    let w = add3(
        &scale3(b * dot3(r, direction), r),
        &scale3((1.0 - rho * rho).sqrt(), direction),
    );
    scale3(1.0 / norm3(&w), &w)
}

/// Distance from `r` along the unit `direction` to the unit sphere.
fn sphere_distance(r: &[f64; 3], direction: &[f64; 3]) -> f64 {
    let a = dot3(r, direction);
    let g = 1.0 - dot3(r, r);
    -a + (a * a + g).sqrt()
}

/// Bloch length of the normalized target operator after a step of length
/// `d` along `direction`.
pub fn target_length(r: &[f64; 3], direction: &[f64; 3], d: f64) -> f64 {
    let a = dot3(r, direction);
    let g = 1.0 - dot3(r, r);
    d * (g + a * a).sqrt() / (g - a * d)
}

/// Solves for the step length `|dr|` at which the target operator's Bloch
/// length equals the destructive length for its direction.
///
/// The target length increases from 0 at `d = 0` to 1 where the ray meets the
/// sphere (the vertex), so the root is bracketed and found by bisection.
pub fn solve_step_length(
    r: &[f64; 3],
    direction: &[f64; 3],
    phi: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if norm3(r) >= 1.0 {
        return Err(Error::DegenerateMixture { norm: norm3(r) });
    }
    let rhs = destructive_length(target_direction(r, direction)[2], phi);
    let upper = sphere_distance(r, direction);
    let lhs_upper = target_length(r, direction, upper);
    if lhs_upper < rhs - 1e-12 {
        return Err(Error::Bracket { lhs_upper, rhs });
    }
    if rhs >= 1.0 {
        return Ok(upper);
    }
    // Bisect until the bracket stops shrinking: the ancilla scaling divides
    // by sin^2 phi, so a bracket of merely `tol.bisection` is not enough for
    // small angles.
    let (mut lo, mut hi) = (0.0, upper);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if target_length(r, direction, mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(hi - lo <= tol.bisection);
    Ok(0.5 * (lo + hi))
}

/// `c [ (1 - r.r_k) I + (b (r.dr) r + (1/b - 1) dr) . sigma ]`, `r_k = r + dr`.
pub fn target_element(
    r: &[f64; 3],
    b: f64,
    dr: &[f64; 3],
    c: f64,
    tol: &Tolerances,
) -> Result<HermitianOp> {
    let r_k = add3(r, dr);
    let trace_half = c * (1.0 - dot3(r, &r_k));
    let w = add3(
        &scale3(b * dot3(r, dr), r),
        &scale3(1.0 / b - 1.0, dr),
    );
    let w = scale3(c, &w);
    let t = if trace_half == 0.0 {
        pauli_compose(&BlochForm::new(0.0, w))
    } else {
        pauli_compose(&BlochForm::new(trace_half, scale3(1.0 / trace_half, &w)))
    };
    let min_eigenvalue = t.min_eigenvalue();
    if min_eigenvalue < -tol.psd {
        return Err(Error::TargetNotPositive { min_eigenvalue });
    }
    Ok(t)
}

/// A system operator of the weak-swap model together with its ancilla
/// projector `s |e><e|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestructiveOperator {
    /// `sqrt(s) [[<e|0> e^{-i phi}, -i <e|1> sin phi], [0, <e|0> cos phi]]`
    pub operator: ComplexMatrix2,
    pub s: f64,
    /// `|e>` with `<e|0>` real and non-negative.
    pub ancilla: Ket,
}

impl DestructiveOperator {
    /// Builds the operator from ancilla data.
    pub fn from_ancilla(s: f64, ancilla: &Ket, phi: f64) -> Self {
        let g = ancilla[0].conj();
        let h = ancilla[1].conj();
        let root = s.sqrt();
        let operator = ComplexMatrix2::new(
            g * Complex64::from_polar(root, -phi),
            Complex64::new(0.0, -root * phi.sin()) * h,
            Complex64::new(0.0, 0.0),
            g * (root * phi.cos()),
        );
        DestructiveOperator {
            operator,
            s,
            ancilla: *ancilla,
        }
    }
}

/// Inverts the weak-swap form: finds `s`, `|e>` and `M` with `M^dag M = T`.
///
/// Writing `g = <e|0>`, `h = <e|1>`, the form gives `T_00 = s g^2`,
/// `T_01 = -i s g h sin(phi) e^{i phi}` and
/// `T_11 = s (|h|^2 sin^2 phi + g^2 cos^2 phi)`, which is solvable iff
/// `|T_01|^2 = T_00 (T_11 - T_00 cos^2 phi)`.
pub fn reconstruct_operator(
    t: &HermitianOp,
    phi: f64,
    tol: &Tolerances,
) -> Result<DestructiveOperator> {
    let (sin, cos) = phi.sin_cos();
    let t00 = t.at(0, 0).re;
    let t11 = t.at(1, 1).re;
    let t01 = t.at(0, 1);
    if t00 < -tol.psd || t11 <= 0.0 {
        return Err(Error::TargetNotPositive {
            min_eigenvalue: t.min_eigenvalue(),
        });
    }
    let t00 = t00.max(0.0);
    let residual = t01.norm_sqr() - t00 * (t11 - t00 * cos * cos);
    if residual.abs() > tol.destructive_consistency {
        return Err(Error::ConstraintViolation { residual });
    }
    let s = t00 + (t11 - t00 * cos * cos) / (sin * sin);
    if !(s > 0.0 && s <= 1.0 + 1e-9) {
        return Err(Error::AncillaScaling { s });
    }
    // T_01 = -i s g h sin(phi) e^{i phi}, so h = rotation * T_01 / (s g sin phi).
    // Each of g and |h| is taken from whichever diagonal entry fixes it
    // without cancellation; the other follows from T_01.
    let rotation = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, -phi);
    let (g, h) = if t00 >= 0.5 * s {
        let g = (t00 / s).min(1.0).sqrt();
        (g, rotation * t01 / (s * g * sin))
    } else {
        let h_sqr = ((t11 - t00 * cos * cos) / (s * sin * sin)).clamp(0.0, 1.0);
        let h_norm = h_sqr.sqrt();
        let raw = rotation * t01;
        if raw.norm() > 0.0 {
            let g = raw.norm() / (s * sin * h_norm);
            (g, raw / raw.norm() * h_norm)
        } else {
            (0.0, Complex64::new(h_norm, 0.0))
        }
    };
    let ancilla = [Complex64::new(g, 0.0), h.conj()];
    Ok(DestructiveOperator::from_ancilla(s, &ancilla, phi))
}

/// Planned data for one walk outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePlan {
    /// Unit vector from `r` toward `v_k`.
    pub direction: [f64; 3],
    pub length: f64,
    pub weight: f64,
    pub next_x: Vec<f64>,
    /// `M_k^dag M_k`
    pub target: HermitianOp,
    pub measurement: DestructiveOperator,
}

impl OutcomePlan {
    pub fn displacement(&self) -> [f64; 3] {
        scale3(self.length, &self.direction)
    }
}

/// The weak measurement performed at one walk position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub r: [f64; 3],
    pub b: f64,
    pub outcomes: Vec<OutcomePlan>,
}

impl StepPlan {
    /// Outcomes with nonzero weight.
    pub fn live(&self) -> impl Iterator<Item = &OutcomePlan> {
        self.outcomes.iter().filter(|o| o.weight > 0.0)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `max |sum_k M_k^dag M_k - I|`
    pub fn completeness_residual(&self) -> f64 {
        let total: HermitianOp = self
            .outcomes
            .iter()
            .map(|o| HermitianOp::hermitize(&(o.measurement.operator.adjoint() * o.measurement.operator)))
            .sum();
        total.max_distance(&HermitianOp::identity())
    }

    /// `max |sum_k s_k |e_k><e_k| - I|`
    pub fn ancilla_residual(&self) -> f64 {
        let total: HermitianOp = self
            .outcomes
            .iter()
            .map(|o| HermitianOp::projector(&o.measurement.ancilla).scale(o.measurement.s))
            .sum();
        total.max_distance(&HermitianOp::identity())
    }

    /// `(|sum c_k - 1/(1 - |r|^2)|, |sum c_k dr_k|)`
    pub fn weight_residuals(&self) -> (f64, f64) {
        let sum: f64 = self.outcomes.iter().map(|o| o.weight).sum();
        let expected = 1.0 / (1.0 - dot3(&self.r, &self.r));
        let drift = self
            .outcomes
            .iter()
            .fold([0.0; 3], |acc, o| add3(&acc, &scale3(o.weight, &o.displacement())));
        ((sum - expected).abs(), norm3(&drift))
    }

    /// Bloch lengths of the normalized targets `M_k^dag M_k` of the outcomes
    /// with nonzero weight.
    pub fn bloch_lengths(&self) -> Vec<f64> {
        self.live()
            .map(|o| crate::algebra::pauli_decompose(&o.target).bloch_length())
            .collect()
    }

    /// Max over outcomes of `|len(T_k) - destructive_length(n_z(T_k))|`.
    pub fn length_identity_residual(&self, phi: f64) -> f64 {
        self.live()
            .map(|o| {
                let b = crate::algebra::pauli_decompose(&o.target);
                let len = b.bloch_length();
                let n_z = if len > 0.0 { b.v[2] / len } else { 0.0 };
                (len - destructive_length(n_z, phi)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Max over outcomes of `max |M_k^dag M_k - T_k|`.
    pub fn reconstruction_residual(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| {
                let m = o.measurement.operator;
                HermitianOp::hermitize(&(m.adjoint() * m)).max_distance(&o.target)
            })
            .fold(0.0, f64::max)
    }

    /// Outcome probabilities `<psi|M_k^dag M_k|psi>` for a normalized state.
    pub fn probabilities(&self, psi: &Ket) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|o| {
                let phi = o.measurement.operator.apply(psi);
                crate::algebra::ket_norm_sqr(&phi)
            })
            .collect()
    }
}

/// Solves `sum c_k dr_k = 0` restricted to the span of the displacements,
/// together with `sum c_k = 1 / (1 - |r|^2)`.
pub fn solve_weights(displacements: &[[f64; 3]], r: &[f64; 3]) -> Result<Vec<f64>> {
    let n = displacements.len();
    let d = DMatrix::from_fn(3, n, |i, j| displacements[j][i]);
    // Left singular vectors of D are the eigenvectors of D D^T.
    let mut gram = Matrix3::<f64>::zeros();
    for disp in displacements {
        let col = Vector3::from(*disp);
        gram += col * col.transpose();
    }
    let eig = gram.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut system = DMatrix::<f64>::zeros(n, n);
    for (row, &col) in idx.iter().take(n - 1).enumerate() {
        let basis = eig.eigenvectors.column(col);
        let projected = basis.transpose() * &d;
        system.row_mut(row).copy_from(&projected);
    }
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0 / (1.0 - dot3(r, r));
    let c = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Geometry { weights: vec![] })?;
    let weights: Vec<f64> = c.iter().copied().collect();
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Geometry { weights });
    }
    Ok(weights)
}

/// Plans the weak measurement at the current position: directions toward the
/// current-frame vertices, lengths from the destructive constraint, weights
/// from the completeness conditions.
pub fn plan_step(state: &WalkState, cfg: &WalkConfig) -> Result<StepPlan> {
    if state.is_singular() {
        return Err(Error::Invariant(
            "accumulated operator is singular; walk is at a vertex".into(),
        ));
    }
    let tol = &cfg.tolerances;
    let elements = state.frame();
    let (r, b) = mixture_bloch(state.x(), elements)?;
    let map = &state.map;
    // Frame Bloch vectors are those of the original elements rotated by U.
    let unrotate = |v: &[f64; 3]| {
        let h = pauli_compose(&BlochForm::new(1.0, *v)).conjugate_by(&state.unitary.adjoint());
        crate::algebra::pauli_decompose(&h).v
    };

    // Coordinates that have decayed to rounding level put x on a face; the
    // corresponding outcomes get zero weight and the rest walk the face.
    let barycentric = map.weight(state.x());
    let live: Vec<usize> = (0..elements.len())
        .filter(|&k| barycentric[k] > tol.zero_weight)
        .collect();
    if live.len() < 2 {
        return Err(Error::AtVertex(live.first().copied().unwrap_or(0)));
    }

    let mut directions = Vec::with_capacity(live.len());
    let mut displacements = Vec::with_capacity(live.len());
    for &k in &live {
        let to_vertex = sub3(&elements[k].v, &r);
        let dist = norm3(&to_vertex);
        if dist < 1e-12 {
            return Err(Error::AtVertex(k));
        }
        let u = scale3(1.0 / dist, &to_vertex);
        let length = solve_step_length(&r, &u, cfg.phi, tol)?;
        directions.push(u);
        displacements.push(scale3(length, &u));
    }
    let weights = solve_weights(&displacements, &r)?;

    let mut outcomes: Vec<OutcomePlan> = (0..elements.len())
        .map(|_| OutcomePlan {
            direction: [0.0; 3],
            length: 0.0,
            weight: 0.0,
            next_x: state.x().to_vec(),
            target: HermitianOp::zero(),
            measurement: DestructiveOperator {
                operator: ComplexMatrix2::zero(),
                s: 0.0,
                ancilla: [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            },
        })
        .collect();
    for (j, &k) in live.iter().enumerate() {
        let dr = displacements[j];
        let target = target_element(&r, b, &dr, weights[j], tol)?;
        let measurement = reconstruct_operator(&target, cfg.phi, tol)?;
        let next_x = bloch_to_simplex(map, &unrotate(&add3(&r, &dr)), tol)?;
        outcomes[k] = OutcomePlan {
            direction: directions[j],
            length: norm3(&dr),
            weight: weights[j],
            next_x,
            target,
            measurement,
        };
    }
    let plan = StepPlan { r, b, outcomes };
    let residual = plan.completeness_residual();
    if residual > 1e-9 {
        return Err(Error::Invariant(format!(
            "step completeness residual {residual:e}"
        )));
    }
    Ok(plan)
}

/// Default step budget: twenty times the number of steps for `cos^{2N} phi`
/// to fall to `epsilon`.
pub fn default_max_steps(phi: f64, epsilon: f64) -> usize {
    let per = (1.0 / epsilon).ln() / (2.0 * (1.0 / phi.cos()).ln());
    20 * (per.ceil() as usize).max(1)
}

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi < FRAC_PI_4) {
        return Err(Error::Config(format!("phi = {phi} outside (0, pi/4)")));
    }
    Ok(())
}
