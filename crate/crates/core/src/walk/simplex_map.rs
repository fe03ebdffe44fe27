use nalgebra::{DMatrix, DVector};
use crate::algebra::BlochForm;
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// Bijection between simplex positions `x` and Bloch vectors `r` of the
/// mixture `sum x_i E_i`, for a fixed frame of elements `q_i (I + v_i . sigma)`.
///
/// `r = V T_q(x)` where `T_q(x)_i = q_i x_i / (x . q)` and `V = [v_1 .. v_n]`.
/// `V` has rank `n - 1` with kernel spanned by `q`, so augmenting it with the
/// row `1^T` gives an injective `4 x n` system; its pseudo-inverse is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMap {
    q: Vec<f64>,
    v: Vec<[f64; 3]>,
    pinv: DMatrix<f64>,
}

impl SimplexMap {
    pub fn new(elements: &[BlochForm], tol: &Tolerances) -> Result<Self> {
        let n = elements.len();
        let q: Vec<f64> = elements.iter().map(|e| e.q).collect();
        let v: Vec<[f64; 3]> = elements.iter().map(|e| e.v).collect();
        if q.iter().any(|&qi| qi <= 0.0) {
            return Err(Error::Invariant(format!("non-positive weight in {q:?}")));
        }
        let rank = Self::rank_of(&v, tol);
        if rank != n - 1 {
            return Err(Error::Rank {
                rank,
                expected: n - 1,
            });
        }
        let mut aug = DMatrix::<f64>::zeros(4, n);
        for (j, vj) in v.iter().enumerate() {
            aug[(0, j)] = vj[0];
            aug[(1, j)] = vj[1];
            aug[(2, j)] = vj[2];
            aug[(3, j)] = 1.0;
        }
        let pinv = aug
            .pseudo_inverse(0.0)
            .map_err(|e| Error::Invariant(format!("pseudo-inverse: {e}")))?;
        Ok(SimplexMap {
            q,
            v,
            pinv,
        })
    }

    /// The `n` singular values of `V`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = Self::v_matrix(&self.v)
            .singular_values()
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// `V` padded with zero rows to at least `n x n`, so that it has `n`
    /// singular values.
    fn v_matrix(v: &[[f64; 3]]) -> DMatrix<f64> {
        let rows = v.len().max(3);
        DMatrix::from_fn(rows, v.len(), |i, j| if i < 3 { v[j][i] } else { 0.0 })
    }

    fn rank_of(v: &[[f64; 3]], tol: &Tolerances) -> usize {
        let sv = Self::v_matrix(v).singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s >= tol.dependence_ratio * max).count()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.v
    }

    /// `T_q(x)`
    pub fn weight(&self, x: &[f64]) -> Vec<f64> {
        let dot: f64 = x.iter().zip(&self.q).map(|(a, b)| a * b).sum();
        x.iter().zip(&self.q).map(|(xi, qi)| xi * qi / dot).collect()
    }

    /// `T_q^{-1}(y)`
    pub fn unweight(&self, y: &[f64]) -> Vec<f64> {
        let inv: Vec<f64> = y.iter().zip(&self.q).map(|(yi, qi)| yi / qi).collect();
        let total: f64 = inv.iter().sum();
        inv.iter().map(|v| v / total).collect()
    }

    /// `V`
    pub fn apply_v(&self, y: &[f64]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (yi, vi) in y.iter().zip(&self.v) {
            for a in 0..3 {
                r[a] += yi * vi[a];
            }
        }
        r
    }

    pub fn kernel_residual(&self) -> f64 {
        let r = self.apply_v(&self.q);
        r.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

pub fn simplex_to_bloch(map: &SimplexMap, x: &[f64]) -> [f64; 3] {
    map.apply_v(&map.weight(x))
}

/// Inverse of [`simplex_to_bloch`]: solves `V y = r`, `sum y = 1`, then
/// returns `T_q^{-1}(y)`. Coordinates in `[-tol.simplex, 0)` are clamped.
pub fn bloch_to_simplex(map: &SimplexMap, r: &[f64; 3], tol: &Tolerances) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(&[r[0], r[1], r[2], 1.0]);
    let y = &map.pinv * rhs;
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol.simplex {
        return Err(Error::OutsidePolytope { coordinate: min });
    }
    let y: Vec<f64> = y.iter().map(|&c| c.max(0.0)).collect();
    Ok(map.unweight(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::pauli_decompose;
    use crate::fixtures;
    use crate::povm::Povm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forms(p: &Povm) -> Vec<BlochForm> {
        p.elements().iter().map(pauli_decompose).collect()
    }

    fn random_simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        let e: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().ln()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    #[test]
    fn vertices_map_to_vertices() {
        let tol = Tolerances::default();
        let map = SimplexMap::new(&forms(&fixtures::trine()), &tol).unwrap();
        let v = fixtures::trine_vectors();
        for k in 0..3 {
            let mut x = vec![0.0; 3];
            x[k] = 1.0;
            let r = simplex_to_bloch(&map, &x);
            for a in 0..3 {
                assert!((r[a] - v[k][a]).abs() < 1e-12);
            }
            let back = bloch_to_simplex(&map, &v[k], &tol).unwrap();
            for j in 0..3 {
                assert!((back[j] - x[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn center_maps_to_origin_for_uniform_weights() {
        let tol = Tolerances::default();
        for p in [fixtures::trine(), fixtures::sic(), fixtures::z_basis()] {
            let map = SimplexMap::new(&forms(&p), &tol).unwrap();
            let n = p.len();
            let x = vec![1.0 / n as f64; n];
            let r = simplex_to_bloch(&map, &x);
            assert!(r.iter().all(|c| c.abs() < 1e-15));
            let back = bloch_to_simplex(&map, &[0.0; 3], &tol).unwrap();
            assert!(back.iter().all(|&c| (c - 1.0 / n as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn roundtrip_random_points() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 2..=4 {
            let p = fixtures::random_projective_povm(&mut rng, n);
            let map = SimplexMap::new(&forms(&p), &tol).unwrap();
            assert!(map.kernel_residual() < 1e-10);
            for _ in 0..100 {
                let x = random_simplex_point(&mut rng, n);
                let r = simplex_to_bloch(&map, &x);
                let back = bloch_to_simplex(&map, &r, &tol).unwrap();
                let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-9, "n={n} err={err}");
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        let tol = Tolerances::default();
        let map = SimplexMap::new(&forms(&fixtures::trine()), &tol).unwrap();
        let err = bloch_to_simplex(&map, &[-1.0, 0.0, 0.0], &tol).unwrap_err();
        assert!(matches!(err, Error::OutsidePolytope { .. }));
    }

    #[test]
    fn rank_is_checked() {
        let tol = Tolerances::default();
        // Two z-projectors plus the x-projectors: 4 elements spanning only
        // a rank-2 V would be dependent; build a degenerate frame directly.
        let degenerate = [
            BlochForm::new(0.25, [0.0, 0.0, 1.0]),
            BlochForm::new(0.25, [0.0, 0.0, -1.0]),
            BlochForm::new(0.25, [1.0, 0.0, 0.0]),
            BlochForm::new(0.25, [-1.0, 0.0, 0.0]),
        ];
        assert!(matches!(
            SimplexMap::new(&degenerate, &tol),
            Err(Error::Rank { rank: 2, expected: 3 })
        ));
        let map = SimplexMap::new(&forms(&fixtures::sic()), &tol).unwrap();
        let sv = map.singular_values();
        assert_eq!(sv.len(), 4);
        assert!(sv[2] > 1e-9 * sv[0]);
        assert!(sv[3] < 1e-9 * sv[0]);
    }
}
