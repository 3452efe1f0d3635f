//! Dense helpers with numpy-compatible conventions.

use nalgebra::DMatrix;

/// Numerical rank: singular values above `σ_max · max(rows, cols) · ε`.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Explicit inverse through LU with partial pivoting.
pub fn inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().try_inverse()
}

/// Solves `m · X = rhs` through LU.
pub fn solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().solve(rhs)
}

/// Moore–Penrose pseudoinverse with cutoff `1e-15 · σ_max`.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    svd.pseudo_inverse(1e-15 * max)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Largest |m_ij - m_ji| relative to the largest |m_ij|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_follows_numpy_tolerance() {
        assert_eq!(matrix_rank(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])), 1);
        assert_eq!(matrix_rank(&DMatrix::zeros(3, 3)), 0);
        assert_eq!(matrix_rank(&DMatrix::identity(4, 4)), 4);
        assert_eq!(matrix_rank(&DMatrix::from_row_slice(1, 1, &[1e-300])), 1);
        assert_eq!(
            matrix_rank(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-17])),
            1
        );
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pinv(&m);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
    }
}
