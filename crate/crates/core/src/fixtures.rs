//! Standard qubit POVMs and random generators for POVMs and states.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::algebra::{bloch_ket, inv_sqrt_psd, pauli_compose, BlochForm, ComplexMatrix2, HermitianOp, Ket};
use crate::povm::{validate_povm, Povm};
use crate::tolerance::Tolerances;

fn from_bloch(weights_and_vectors: &[(f64, [f64; 3])]) -> Povm {
    let elements = weights_and_vectors
        .iter()
        .map(|&(q, v)| pauli_compose(&BlochForm::new(q, v)))
        .collect();
    validate_povm(elements, &Tolerances::default()).expect("fixture is a valid POVM")
}

/// `{|0><0|, |1><1|}`
pub fn z_basis() -> Povm {
    validate_povm(
        vec![HermitianOp::diag(1.0, 0.0), HermitianOp::diag(0.0, 1.0)],
        &Tolerances::default(),
    )
    .expect("valid")
}

/// `{|+><+|, |-><-|}`
pub fn x_basis() -> Povm {
    from_bloch(&[(0.5, [1.0, 0.0, 0.0]), (0.5, [-1.0, 0.0, 0.0])])
}

pub fn trine_vectors() -> [[f64; 3]; 3] {
    let v = |k: f64| {
        let a = 2.0 * PI * k / 3.0;
        [a.cos(), a.sin(), 0.0]
    };
    [v(0.0), v(1.0), v(2.0)]
}

/// `{(2/3)|psi_k><psi_k|}` with Bloch vectors at 120 degrees in the x-y
/// plane, the first along `+x`.
pub fn trine() -> Povm {
    let v = trine_vectors();
    from_bloch(&[(1.0 / 3.0, v[0]), (1.0 / 3.0, v[1]), (1.0 / 3.0, v[2])])
}

pub fn tetrahedron_vectors() -> [[f64; 3]; 4] {
    let s2 = 2f64.sqrt();
    [
        [0.0, 0.0, 1.0],
        [2.0 * s2 / 3.0, 0.0, -1.0 / 3.0],
        [-s2 / 3.0, (2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
        [-s2 / 3.0, -(2.0f64 / 3.0).sqrt(), -1.0 / 3.0],
    ]
}

/// Tetrahedral SIC POVM `{(1/4)(I + v_i . sigma)}`.
pub fn sic() -> Povm {
    let v = tetrahedron_vectors();
    from_bloch(&[(0.25, v[0]), (0.25, v[1]), (0.25, v[2]), (0.25, v[3])])
}

/// `{0.3 E_1, 0.7 E_1, E_2, E_3, E_4}` from the tetrahedral SIC POVM.
pub fn split_sic() -> Povm {
    let s = sic();
    let e = s.elements();
    validate_povm(
        vec![e[0].scale(0.3), e[0].scale(0.7), e[1], e[2], e[3]],
        &Tolerances::default(),
    )
    .expect("valid")
}

/// Uniform point on the Bloch sphere.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// Haar-random pure qubit state.
pub fn random_pure_state<R: Rng + ?Sized>(rng: &mut R) -> Ket {
    bloch_ket(&random_direction(rng))
}

/// Random density operator with Bloch vector uniform in the unit ball.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R) -> HermitianOp {
    let n = random_direction(rng);
    let r = rng.gen::<f64>().cbrt();
    pauli_compose(&BlochForm::new(0.5, [r * n[0], r * n[1], r * n[2]]))
}

fn random_full_rank<R: Rng + ?Sized>(rng: &mut R) -> HermitianOp {
    let mut z = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let x = ComplexMatrix2::new(z(), z(), z(), z());
    HermitianOp::hermitize(&(x * x.adjoint()))
}

/// Random `n`-outcome POVM `S^{-1/2} A_i S^{-1/2}` from random positive `A_i`.
pub fn random_povm<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Povm {
    let tol = Tolerances::default();
    loop {
        let raw: Vec<HermitianOp> = (0..n).map(|_| random_full_rank(rng)).collect();
        let total: HermitianOp = raw.iter().copied().sum();
        let Ok(root) = inv_sqrt_psd(&total, &tol) else {
            continue;
        };
        let elements = raw.iter().map(|a| a.conjugate_by(root.matrix())).collect();
        if let Ok(p) = validate_povm(elements, &tol) {
            return p;
        }
    }
}

/// Random `n`-outcome POVM whose elements are multiples of rank-1 projectors,
/// linearly independent for `n <= 4` (with probability one).
pub fn random_projective_povm<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Povm {
    let tol = Tolerances::default();
    loop {
        let raw: Vec<HermitianOp> = (0..n)
            .map(|_| {
                let k = random_pure_state(rng);
                HermitianOp::projector(&k).scale(rng.gen_range(0.2..1.0))
            })
            .collect();
        let total: HermitianOp = raw.iter().copied().sum();
        let Ok(root) = inv_sqrt_psd(&total, &tol) else {
            continue;
        };
        let elements = raw.iter().map(|a| a.conjugate_by(root.matrix())).collect();
        if let Ok(p) = validate_povm(elements, &tol) {
            return p;
        }
    }
}
