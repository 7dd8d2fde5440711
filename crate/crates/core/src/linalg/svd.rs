//! Truncated SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The columns of the working copy of `g` are rotated pairwise until every
//! pair is orthogonal to within `JACOBI_TOL` relative to their norms. The
//! column norms are then the singular values and the accumulated rotations
//! the right singular vectors.

use crate::error::{invalid, Error, Result};
use crate::linalg::matrix::dot;
use crate::linalg::Matrix;

const JACOBI_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `M×R`, orthonormal columns.
    pub left: Matrix,
    /// Non-increasing, non-negative.
    pub singular: Vec<f64>,
    /// `N×R`, orthonormal columns.
    pub right: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular.len()
    }

    /// `left · diag(singular) · rightᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.left.rows(), self.rank(), |i, k| {
            self.left.get(i, k) * self.singular[k]
        });
        scaled
            .matmul_a_bt(&self.right)
            .expect("svd factors have conforming shapes")
    }
}

/// Best rank-`r` approximation of `g` as its top `r` singular triplets.
pub fn truncated_svd(g: &Matrix, r: usize) -> Result<SvdResult> {
    let (m, n) = g.shape();
    if r == 0 || r > m.min(n) {
        return Err(invalid(format!("svd rank {r} outside 1..={}", m.min(n))));
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m >= n {
        jacobi(g, r)
    } else {
        let t = jacobi(&g.transpose(), r)?;
        Ok(SvdResult {
            left: t.right,
            singular: t.singular,
            right: t.left,
        })
    }
}

/// Requires `rows >= cols`.
fn jacobi(g: &Matrix, r: usize) -> Result<SvdResult> {
    let (m, n) = g.shape();
    // Column-major working copies: cols[j] is column j of g, rot[j] column j of V.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| g.column(j)).collect();
    let mut rot: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let max_sweeps = 10 * n.max(1);
    let mut converged = n == 1;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::SvdNotConverged { sweeps });
        }
        sweeps += 1;
        let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut rot, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        converged = !rotated;
    }

    let sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal singular values keep column order.
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    order.truncate(r);

    let sigma_max = sigma[order[0]];
    let negligible = sigma_max * f64::EPSILON * m as f64;
    let mut left_cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut singular = Vec::with_capacity(r);
    for &j in &order {
        let s = sigma[j];
        let col = if s > negligible && s > 0.0 {
            cols[j].iter().map(|x| x / s).collect()
        } else {
            complete_basis(&left_cols, m)
        };
        left_cols.push(col);
        singular.push(s);
    }

    let left = Matrix::from_fn(m, r, |i, k| left_cols[k][i]);
    let right = Matrix::from_fn(n, r, |i, k| rot[order[k]][i]);
    Ok(SvdResult {
        left,
        singular,
        right,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// A unit vector orthogonal to every vector in `basis` (all unit length),
/// taken from the first standard basis direction that survives projection.
fn complete_basis(basis: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..m {
        let mut v = vec![0.0; m];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 0.5 {
            return v.into_iter().map(|x| x / norm).collect();
        }
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, v));
        }
    }
    let (norm, v) = best.expect("m >= 1");
    v.into_iter().map(|x| x / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.matmul_at_b(q)
            .unwrap()
            .sub(&Matrix::identity(q.cols()))
            .unwrap()
            .frobenius_norm()
    }

    #[test]
    fn diagonal_case() {
        let g = Matrix::diag(&[5.0, 3.0, 1.0]);
        let svd = truncated_svd(&g, 2).unwrap();
        assert!((svd.singular[0] - 5.0).abs() < 1e-12);
        assert!((svd.singular[1] - 3.0).abs() < 1e-12);
        let err = g.sub(&svd.reconstruct()).unwrap().frobenius_norm();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_rank_one() {
        let a = Matrix::from_rows(&[[1.0], [2.0], [-1.0], [0.5]]).unwrap();
        let b = Matrix::from_rows(&[[3.0], [0.0], [1.0]]).unwrap();
        let g = a.matmul_a_bt(&b).unwrap();
        for r in 1..=3 {
            let svd = truncated_svd(&g, r).unwrap();
            assert!(g.sub(&svd.reconstruct()).unwrap().frobenius_norm() <= 1e-8);
            assert!(orthonormality_error(&svd.left) <= 1e-8, "r={r}");
            assert!(orthonormality_error(&svd.right) <= 1e-8, "r={r}");
        }
    }

    #[test]
    fn zero_matrix_still_orthonormal() {
        let svd = truncated_svd(&Matrix::zeros(4, 3), 3).unwrap();
        assert_eq!(svd.singular, vec![0.0; 3]);
        assert!(orthonormality_error(&svd.left) <= 1e-12);
        assert!(orthonormality_error(&svd.right) <= 1e-12);
    }

    #[test]
    fn wide_and_tall_agree() {
        let mut rng = Rng::new(4);
        let g = rng.gaussian_matrix(5, 9, 1.0).unwrap();
        let wide = truncated_svd(&g, 4).unwrap();
        let tall = truncated_svd(&g.transpose(), 4).unwrap();
        for (a, b) in wide.singular.iter().zip(&tall.singular) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(wide.left.shape(), (5, 4));
        assert_eq!(wide.right.shape(), (9, 4));
    }

    #[test]
    fn random_orthonormal_and_sorted() {
        let mut rng = Rng::new(12);
        for _ in 0..10 {
            let g = rng.gaussian_matrix(12, 8, 1.0).unwrap();
            let svd = truncated_svd(&g, 5).unwrap();
            assert!(svd.singular.windows(2).all(|w| w[0] >= w[1]));
            assert!(svd.singular.iter().all(|&s| s >= 0.0));
            assert!(orthonormality_error(&svd.left) <= 1e-8);
            assert!(orthonormality_error(&svd.right) <= 1e-8);
        }
    }

    #[test]
    fn equal_singular_values_keep_column_order() {
        let g = Matrix::diag(&[2.0, 2.0, 2.0]);
        let svd = truncated_svd(&g, 3).unwrap();
        assert_eq!(svd.left, Matrix::identity(3));
    }

    #[test]
    fn rejects_bad_rank_and_non_finite() {
        let g = Matrix::identity(3);
        assert!(truncated_svd(&g, 0).is_err());
        assert!(truncated_svd(&g, 4).is_err());
        let mut bad = g.clone();
        bad.set(0, 0, f64::NAN);
        assert!(matches!(truncated_svd(&bad, 1), Err(Error::NonFinite(_))));
    }
}
