//! Small SVD-based helpers shared by the closure and inverse solvers.

use nalgebra::DMatrix;

use crate::operator::C64;

/// Orthonormal basis (as columns) of `{x : A x = 0}`.
///
/// A singular value counts as zero when it is at most `rel_tol * max(1, s_max)`.
pub fn null_space(a: &DMatrix<C64>, rel_tol: f64) -> DMatrix<C64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // pad short matrices so the SVD returns a full right basis
    let padded;
    let a = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, a.nrows()).copy_from(a);
        padded = p;
        &padded
    } else {
        a
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = rel_tol * s_max.max(1.0);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= threshold)
        .collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        for r in 0..n {
            basis[(r, col)] = v_t[(k, r)].conj();
        }
    }
    basis
}

/// Numerical rank with the same thresholding rule as [`null_space`].
pub fn rank(a: &DMatrix<C64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let threshold = rel_tol * s_max.max(1.0);
    s.iter().filter(|&&x| x > threshold).count()
}

/// Stack the columns `v_k` into a matrix.
pub fn columns(dim: usize, vectors: &[Vec<C64>]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(dim, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            m[(i, j)] = *x;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(
            1,
            3,
            &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        );
        let n = null_space(&a, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-14);
        let gram = n.adjoint() * &n;
        assert!((gram - DMatrix::<C64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn rank_of_dependent_columns() {
        let v = vec![C64::new(1.0, 2.0), C64::new(0.5, -1.0)];
        let w: Vec<C64> = v.iter().map(|x| x * C64::new(0.0, 3.0)).collect();
        assert_eq!(rank(&columns(2, &[v, w]), 1e-12), 1);
    }
}
