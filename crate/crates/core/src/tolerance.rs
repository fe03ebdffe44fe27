use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by every layer.
///
/// Validation thresholds (`hermitian`, `psd`, `completeness`, ...) decide
/// whether an input is accepted. Singularity thresholds decide when a matrix is
/// treated as non-invertible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max-norm residual of `H - H^dag` accepted as Hermitian.
    pub hermitian: f64,
    /// Smallest eigenvalue accepted as positive-semidefinite is `-psd`.
    pub psd: f64,
    /// Max-norm residual of `sum E_i - I` accepted as a complete POVM.
    pub completeness: f64,
    /// Eigenvalues at or below this are singular for inverse square roots.
    pub singular_eigenvalue: f64,
    /// `|det M|` at or below this is singular for the polar decomposition.
    pub singular_det: f64,
    /// `sigma_min < dependence_ratio * sigma_max` means linearly dependent.
    pub dependence_ratio: f64,
    /// Residual `|sum c_i E_i|` accepted for a dependence witness.
    pub witness_residual: f64,
    /// Split coefficients at or below this are treated as exact zeros.
    pub zero_weight: f64,
    /// Matrix-entry residual of the destructive-family consistency condition.
    pub destructive_consistency: f64,
    /// Barycentric coordinates below `-simplex` are outside the simplex.
    pub simplex: f64,
    /// Absolute tolerance of the step-length bisection.
    pub bisection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-12,
            psd: 1e-10,
            completeness: 1e-10,
            singular_eigenvalue: 1e-12,
            singular_det: 1e-14,
            dependence_ratio: 1e-9,
            witness_residual: 1e-9,
            zero_weight: 1e-12,
            destructive_consistency: 1e-8,
            simplex: 1e-9,
            bisection: 1e-12,
        }
    }
}
