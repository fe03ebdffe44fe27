//! Closed-form 2x2 complex linear algebra.
//!
//! Every qubit operator is handled through its Pauli expansion
//! `q (I + v . sigma)`, which gives eigenvalues, inverse square roots and
//! polar factors without iterative solvers.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// A qubit state vector `(<0|psi>, <1|psi>)`.
pub type Ket = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn ket(a: Complex64, b: Complex64) -> Ket {
    [a, b]
}

pub fn ket_norm_sqr(k: &Ket) -> f64 {
    k[0].norm_sqr() + k[1].norm_sqr()
}

/// Returns `k / |k|`, or `None` for the zero vector.
pub fn normalize_ket(k: &Ket) -> Option<Ket> {
    let n = ket_norm_sqr(k).sqrt();
    if n > 0.0 && n.is_finite() {
        Some([k[0] / n, k[1] / n])
    } else {
        None
    }
}

pub fn inner(a: &Ket, b: &Ket) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// Dense 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix2(pub [[Complex64; 2]; 2]);

impl ComplexMatrix2 {
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        ComplexMatrix2([[a, b], [c, d]])
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Self::real(a, 0.0, 0.0, d)
    }

    pub fn pauli_x() -> Self {
        Self::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn pauli_y() -> Self {
        Self::new(ZERO, -I, I, ZERO)
    }

    pub fn pauli_z() -> Self {
        Self::real(1.0, 0.0, 0.0, -1.0)
    }

    /// `|a><b|`
    pub fn outer(a: &Ket, b: &Ket) -> Self {
        Self::new(
            a[0] * b[0].conj(),
            a[0] * b[1].conj(),
            a[1] * b[0].conj(),
            a[1] * b[1].conj(),
        )
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Adjugate, so that `M adj(M) = det(M) I`.
    pub fn adjugate(&self) -> Self {
        let m = &self.0;
        Self::new(m[1][1], -m[0][1], -m[1][0], m[0][0])
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scale_complex(s.into())
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        let m = &self.0;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn apply(&self, k: &Ket) -> Ket {
        let m = &self.0;
        [m[0][0] * k[0] + m[0][1] * k[1], m[1][0] * k[0] + m[1][1] * k[1]]
    }

    pub fn max_norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.is_finite())
    }

    /// Max-norm of `M - M^dag`.
    pub fn hermitian_residual(&self) -> f64 {
        (*self - self.adjoint()).max_norm()
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> [f64; 2] {
        let gram = HermitianOp::hermitize(&(self.adjoint() * *self));
        let e = eigh2(&gram);
        [e.values[0].max(0.0).sqrt(), e.values[1].max(0.0).sqrt()]
    }
}

impl Add for ComplexMatrix2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for ComplexMatrix2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for ComplexMatrix2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for ComplexMatrix2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// A 2x2 Hermitian matrix. Construction checks Hermiticity and stores the
/// exactly-Hermitian part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix2", into = "ComplexMatrix2")]
pub struct HermitianOp(ComplexMatrix2);

impl HermitianOp {
    pub fn new(m: ComplexMatrix2, tol: &Tolerances) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let residual = m.hermitian_residual();
        if residual > tol.hermitian {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self::hermitize(&m))
    }

    /// `(M + M^dag) / 2` without a residual check; for products that are
    /// Hermitian up to rounding.
    pub fn hermitize(m: &ComplexMatrix2) -> Self {
        HermitianOp((*m + m.adjoint()).scale(0.5))
    }

    pub fn identity() -> Self {
        HermitianOp(ComplexMatrix2::identity())
    }

    pub fn zero() -> Self {
        HermitianOp(ComplexMatrix2::zero())
    }

    pub fn diag(a: f64, d: f64) -> Self {
        HermitianOp(ComplexMatrix2::diag(a, d))
    }

    /// `|k><k|`
    pub fn projector(k: &Ket) -> Self {
        Self::hermitize(&ComplexMatrix2::outer(k, k))
    }

    pub fn matrix(&self) -> &ComplexMatrix2 {
        &self.0
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.0.at(row, col)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianOp(self.0.scale(s))
    }

    /// `Tr[self * other]`, real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianOp) -> f64 {
        (self.0 * other.0).trace().re
    }

    /// `<k|self|k>`
    pub fn expectation(&self, k: &Ket) -> f64 {
        inner(k, &self.0.apply(k)).re
    }

    /// `U self U^dag`
    pub fn conjugate_by(&self, u: &ComplexMatrix2) -> Self {
        Self::hermitize(&(*u * self.0 * u.adjoint()))
    }

    pub fn max_distance(&self, other: &HermitianOp) -> f64 {
        (self.0 - other.0).max_norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh2(self).values[1]
    }
}

impl Add for HermitianOp {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HermitianOp(self.0 + o.0)
    }
}

impl Sub for HermitianOp {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        HermitianOp(self.0 - o.0)
    }
}

impl std::iter::Sum for HermitianOp {
    fn sum<It: Iterator<Item = Self>>(iter: It) -> Self {
        iter.fold(HermitianOp::zero(), |a, b| a + b)
    }
}

impl From<HermitianOp> for ComplexMatrix2 {
    fn from(h: HermitianOp) -> Self {
        h.0
    }
}

impl TryFrom<ComplexMatrix2> for HermitianOp {
    type Error = Error;
    fn try_from(m: ComplexMatrix2) -> Result<Self> {
        HermitianOp::new(m, &Tolerances::default())
    }
}

/// Pauli expansion `q (I + v . sigma)`.
///
/// When `q == 0` the operator is traceless and `v` holds the raw Pauli
/// coefficients instead, so the operator is `v . sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochForm {
    pub q: f64,
    pub v: [f64; 3],
}

impl BlochForm {
    pub fn new(q: f64, v: [f64; 3]) -> Self {
        BlochForm { q, v }
    }

    pub fn bloch_length(&self) -> f64 {
        norm3(&self.v)
    }
}

pub fn pauli_decompose(h: &HermitianOp) -> BlochForm {
    let m = h.matrix();
    let q = 0.5 * (m.at(0, 0).re + m.at(1, 1).re);
    let w = [
        m.at(0, 1).re,
        -m.at(0, 1).im,
        0.5 * (m.at(0, 0).re - m.at(1, 1).re),
    ];
    if q == 0.0 {
        BlochForm { q: 0.0, v: w }
    } else {
        BlochForm {
            q,
            v: [w[0] / q, w[1] / q, w[2] / q],
        }
    }
}

pub fn pauli_compose(b: &BlochForm) -> HermitianOp {
    let (s, w) = if b.q == 0.0 {
        (0.0, b.v)
    } else {
        (b.q, [b.q * b.v[0], b.q * b.v[1], b.q * b.v[2]])
    };
    HermitianOp(ComplexMatrix2::new(
        Complex64::new(s + w[2], 0.0),
        Complex64::new(w[0], -w[1]),
        Complex64::new(w[0], w[1]),
        Complex64::new(s - w[2], 0.0),
    ))
}

/// Eigen-decomposition of a Hermitian 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPair2 {
    /// Descending.
    pub values: [f64; 2],
    /// Orthonormal, `vectors[i]` belongs to `values[i]`.
    pub vectors: [Ket; 2],
}

impl EigenPair2 {
    pub fn reconstruct(&self) -> HermitianOp {
        HermitianOp::projector(&self.vectors[0]).scale(self.values[0])
            + HermitianOp::projector(&self.vectors[1]).scale(self.values[1])
    }
}

/// Ket whose projector is `(I + n . sigma) / 2` for a unit vector `n`.
pub fn bloch_ket(n: &[f64; 3]) -> Ket {
    if n[2] >= 0.0 {
        let norm = (2.0 * (1.0 + n[2])).sqrt();
        [
            Complex64::new((1.0 + n[2]) / norm, 0.0),
            Complex64::new(n[0] / norm, n[1] / norm),
        ]
    } else {
        let norm = (2.0 * (1.0 - n[2])).sqrt();
        [
            Complex64::new(n[0] / norm, -n[1] / norm),
            Complex64::new((1.0 - n[2]) / norm, 0.0),
        ]
    }
}

/// Orthogonal complement `(-b*, a*)` of `(a, b)`.
pub fn orthogonal_ket(k: &Ket) -> Ket {
    [-k[1].conj(), k[0].conj()]
}

pub fn eigh2(h: &HermitianOp) -> EigenPair2 {
    let m = h.matrix();
    let q = 0.5 * (m.at(0, 0).re + m.at(1, 1).re);
    let w = [
        m.at(0, 1).re,
        -m.at(0, 1).im,
        0.5 * (m.at(0, 0).re - m.at(1, 1).re),
    ];
    let len = norm3(&w);
    if len <= f64::MIN_POSITIVE {
        return EigenPair2 {
            values: [q, q],
            vectors: [[ONE, ZERO], [ZERO, ONE]],
        };
    }
    let n = [w[0] / len, w[1] / len, w[2] / len];
    let plus = bloch_ket(&n);
    EigenPair2 {
        values: [q + len, q - len],
        vectors: [plus, orthogonal_ket(&plus)],
    }
}

/// The scalar `b` with `(I + r . sigma)^(-1/2)` proportional to
/// `I - b r . sigma`, i.e. `(1 - sqrt(1 - |r|^2)) / |r|^2`.
///
/// Evaluated as `1 / (1 + sqrt(1 - |r|^2))`, which is the same quantity
/// without the cancellation in the numerator; below `|r| = 1e-6` the series
/// `1/2 + |r|^2 / 8` is used.
pub fn inverse_sqrt_coefficient(r_norm: f64) -> f64 {
    if r_norm < 1e-6 {
        0.5 + r_norm * r_norm / 8.0
    } else {
        1.0 / (1.0 + (1.0 - r_norm * r_norm).max(0.0).sqrt())
    }
}

/// `E^(-1/2)` for a positive-definite `E = q (I + v . sigma)`, in the closed
/// form `alpha (I - b v . sigma)`.
pub fn inv_sqrt_psd(e: &HermitianOp, tol: &Tolerances) -> Result<HermitianOp> {
    let BlochForm { q, v } = pauli_decompose(e);
    let rho = norm3(&v);
    let lower = q * (1.0 - rho);
    if q <= 0.0 || lower <= tol.singular_eigenvalue {
        let eigenvalue = if q <= 0.0 { q.min(lower) } else { lower };
        return Err(Error::SingularEigenvalue { eigenvalue });
    }
    let b = inverse_sqrt_coefficient(rho);
    let root_gap = (1.0 - rho * rho).sqrt();
    let alpha = ((1.0 + rho).sqrt() + (1.0 - rho).sqrt()) / (2.0 * q.sqrt() * root_gap);
    Ok(pauli_compose(&BlochForm {
        q: alpha,
        v: [-b * v[0], -b * v[1], -b * v[2]],
    }))
}

/// Unitary factor `U` of the polar decomposition `M = U P`.
///
/// Uses the 2x2 identity `U = (M + e^{i arg det M} adj(M)^dag) / sqrt|det(...)|`.
pub fn polar_unitary(m: &ComplexMatrix2, tol: &Tolerances) -> Result<ComplexMatrix2> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = m.det();
    let det = d.norm();
    if det <= tol.singular_det {
        return Err(Error::SingularMatrix { det });
    }
    let phase = d / det;
    let sum = *m + m.adjugate().adjoint().scale_complex(phase);
    let norm = sum.det().norm().sqrt();
    Ok(sum.scale(1.0 / norm))
}

pub fn is_psd(h: &HermitianOp, tol: f64) -> bool {
    h.min_eigenvalue() >= -tol
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale3(s: f64, a: &[f64; 3]) -> [f64; 3] {
    [s * a[0], s * a[1], s * a[2]]
}
