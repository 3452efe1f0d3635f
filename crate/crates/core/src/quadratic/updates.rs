//! The four building blocks of the incremental solver, each in a baseline
//! (`Variant::A`) and an improved (`Variant::B`) form.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{QuadError, QuadraticInstance};
use crate::linalg;

/// Weight of the gradient correction term.
pub const CORRECTION_COEFFICIENT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    A,
    B,
}

fn check_square(m: &DMatrix<f64>, d: usize) -> Result<(), QuadError> {
    if m.nrows() != d || m.ncols() != d {
        return Err(QuadError::ShapeMismatch);
    }
    Ok(())
}

/// Symmetric rank-k update `G - (G-A)U [Uᵀ(G-A)U]⁻¹ Uᵀ(G-A)`.
///
/// Returns `G` unchanged when the k×k inner matrix is rank deficient. Variant
/// A forms the explicit inverse; variant B solves against the identity.
pub fn srk_update(
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    u: &DMatrix<f64>,
    variant: Variant,
) -> Result<DMatrix<f64>, QuadError> {
    let d = g.nrows();
    check_square(g, d)?;
    check_square(a, d)?;
    if u.nrows() != d || u.ncols() == 0 {
        return Err(QuadError::ShapeMismatch);
    }
    let k = u.ncols();
    let diff = g - a;
    let diff_u = &diff * u;
    let temp = u.transpose() * &diff_u;
    if linalg::matrix_rank(&temp) < k {
        return Ok(g.clone());
    }
    let temp_inv = match variant {
        Variant::A => linalg::inverse(&temp),
        Variant::B => linalg::solve(&temp, &DMatrix::identity(k, k)),
    };
    let Some(temp_inv) = temp_inv else {
        return Ok(g.clone());
    };
    let correction = &diff_u * temp_inv * (u.transpose() * &diff);
    let mut out = g - correction;
    symmetrize(&mut out);
    Ok(out)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Indices of the top-k scores, descending, ties by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    idx.truncate(k);
    idx
}

/// Score used by [`greedy_select`]: the diagonal of `G - A` (variant A) or the
/// Euclidean norms of its rows (variant B).
pub fn selection_scores(g: &DMatrix<f64>, a: &DMatrix<f64>, variant: Variant) -> Vec<f64> {
    let diff = g - a;
    match variant {
        Variant::A => diff.diagonal().iter().cloned().collect(),
        Variant::B => diff.row_iter().map(|r| r.norm()).collect(),
    }
}

/// d×k selection matrix whose j-th column is the basis vector of the j-th
/// highest score.
pub fn greedy_select(
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    k: usize,
    variant: Variant,
) -> Result<DMatrix<f64>, QuadError> {
    let d = g.nrows();
    check_square(g, d)?;
    check_square(a, d)?;
    if k == 0 || k > d {
        return Err(QuadError::InvalidRank { k, d });
    }
    Ok(selection_matrix(d, &top_k(&selection_scores(g, a, variant), k)))
}

pub fn selection_matrix(d: usize, indices: &[usize]) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(d, indices.len());
    for (col, &row) in indices.iter().enumerate() {
        u[(row, col)] = 1.0;
    }
    u
}

/// Low-rank inverse update: given `A⁻¹`, returns
/// `A⁻¹ + A⁻¹ U (W - Vᵀ A⁻¹ U)⁻¹ Vᵀ A⁻¹ = (A - U W⁻¹ Vᵀ)⁻¹`.
///
/// On a rank-deficient inner matrix variant A returns `A⁻¹` unchanged and
/// variant B substitutes the pseudoinverse.
pub fn woodbury_inverse_update(
    a_inv: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    variant: Variant,
) -> Result<DMatrix<f64>, QuadError> {
    let d = a_inv.nrows();
    check_square(a_inv, d)?;
    let k = u.ncols();
    if u.nrows() != d || v.nrows() != d || v.ncols() != k || w.nrows() != k || w.ncols() != k {
        return Err(QuadError::ShapeMismatch);
    }
    let a_inv_u = a_inv * u;
    let vt_a_inv = v.transpose() * a_inv;
    let temp = w - &vt_a_inv * u;
    let singular = linalg::matrix_rank(&temp) < k;
    let temp_inv = match (variant, singular) {
        (Variant::A, true) => return Ok(a_inv.clone()),
        (Variant::A, false) => linalg::inverse(&temp),
        (Variant::B, true) => Some(linalg::pinv(&temp)),
        (Variant::B, false) => linalg::solve(&temp, &DMatrix::identity(k, k)),
    };
    let temp_inv = match temp_inv {
        Some(m) => m,
        None if variant == Variant::A => return Ok(a_inv.clone()),
        None => linalg::pinv(&temp),
    };
    Ok(a_inv + a_inv_u * temp_inv * vt_a_inv)
}

/// Correction applied by variant B after the quasi-Newton step:
/// `x ← x - 0.1 g_c/(t+1)` then `x ← x · ‖g_c‖/‖grad_sum‖`, where
/// `g_c = Σ (A_i x + b_i)` is evaluated at the incoming `x_new`.
///
/// The scaling is skipped when `‖g_c‖ = 0`, which would otherwise zero out a
/// converged iterate.
pub fn gradient_correction_step(
    x_new: &[f64],
    grad_sum: &[f64],
    inst: &QuadraticInstance,
    t: usize,
) -> Result<Vec<f64>, QuadError> {
    if x_new.len() != inst.d || grad_sum.len() != inst.d {
        return Err(QuadError::ShapeMismatch);
    }
    let grad_sum_norm = DVector::from_column_slice(grad_sum).norm();
    if grad_sum_norm == 0.0 {
        return Err(QuadError::ZeroGradSum);
    }
    let mut correction = alloc::vec![0.0; inst.d];
    for (a, b) in inst.a_diag.iter().zip(&inst.b) {
        for j in 0..inst.d {
            correction[j] += a[j] * x_new[j] + b[j];
        }
    }
    let step = CORRECTION_COEFFICIENT / (t as f64 + 1.0);
    let mut x: Vec<f64> = x_new
        .iter()
        .zip(&correction)
        .map(|(x, c)| x - step * c)
        .collect();
    let correction_norm = DVector::from_column_slice(&correction).norm();
    if correction_norm != 0.0 {
        let scale = correction_norm / grad_sum_norm;
        x.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn srk_on_equal_matrices_returns_g() {
        let g = diag(&[2.0, 3.0]);
        let u = selection_matrix(2, &[0]);
        for variant in [Variant::A, Variant::B] {
            assert_eq!(srk_update(&g, &g, &u, variant).unwrap(), g);
        }
    }

    #[test]
    fn srk_two_by_two() {
        // (G-A) = diag(2, 0); G' = G - 2e₁ · ½ · 2e₁ᵀ = diag(1, 1)
        let g = diag(&[3.0, 1.0]);
        let a = diag(&[1.0, 1.0]);
        let u = selection_matrix(2, &[0]);
        for variant in [Variant::A, Variant::B] {
            assert_eq!(srk_update(&g, &a, &u, variant).unwrap(), diag(&[1.0, 1.0]));
        }
    }

    #[test]
    fn srk_shape_errors() {
        let g = diag(&[1.0, 2.0]);
        let u = selection_matrix(3, &[0]);
        assert_eq!(srk_update(&g, &g, &u, Variant::A), Err(QuadError::ShapeMismatch));
        assert_eq!(srk_update(&g, &diag(&[1.0]), &selection_matrix(2, &[0]), Variant::B), Err(QuadError::ShapeMismatch));
    }

    #[test]
    fn diagonal_selection() {
        let a = DMatrix::zeros(3, 3);
        let u = greedy_select(&diag(&[1.0, 5.0, 3.0]), &a, 1, Variant::A).unwrap();
        assert_eq!(u, selection_matrix(3, &[1]));
    }

    #[test]
    fn row_norm_selection() {
        let a = DMatrix::zeros(3, 3);
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 6.0, 8.0, 0.0, 0.0, 3.0, 4.0]);
        assert_eq!(selection_scores(&g, &a, Variant::B), vec![0.0, 10.0, 5.0]);
        let u = greedy_select(&g, &a, 2, Variant::B).unwrap();
        assert_eq!(u, selection_matrix(3, &[1, 2]));
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        let a = DMatrix::zeros(3, 3);
        for variant in [Variant::A, Variant::B] {
            let u = greedy_select(&DMatrix::identity(3, 3), &a, 2, variant).unwrap();
            assert_eq!(u, selection_matrix(3, &[0, 1]));
        }
    }

    #[test]
    fn selection_rejects_bad_rank() {
        let m = DMatrix::identity(2, 2);
        assert_eq!(greedy_select(&m, &m, 3, Variant::A), Err(QuadError::InvalidRank { k: 3, d: 2 }));
        assert!(greedy_select(&m, &m, 0, Variant::B).is_err());
    }

    #[test]
    fn woodbury_zero_u_keeps_inverse() {
        let a_inv = diag(&[0.5, 0.25]);
        let zero = DMatrix::zeros(2, 1);
        let w = DMatrix::from_element(1, 1, 1.0);
        // inner = W - 0 = 1 is nonsingular, so the update term is exactly zero
        assert_eq!(woodbury_inverse_update(&a_inv, &zero, &zero, &w, Variant::A).unwrap(), a_inv);
        // singular inner: W = 0 with U = 0
        let w0 = DMatrix::zeros(1, 1);
        assert_eq!(woodbury_inverse_update(&a_inv, &zero, &zero, &w0, Variant::A).unwrap(), a_inv);
        assert_eq!(woodbury_inverse_update(&a_inv, &zero, &zero, &w0, Variant::B).unwrap(), a_inv);
    }

    #[test]
    fn woodbury_scalar() {
        // A = 2, A - U W⁻¹ Vᵀ = 1
        let one = DMatrix::from_element(1, 1, 1.0);
        let a_inv = DMatrix::from_element(1, 1, 0.5);
        for variant in [Variant::A, Variant::B] {
            let out = woodbury_inverse_update(&a_inv, &one, &one, &one, variant).unwrap();
            assert!((out[(0, 0)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn correction_arithmetic() {
        // g_c = 2·1 + (-1) = 1, grad_sum = 2
        let inst = QuadraticInstance::new(vec![vec![2.0]], vec![vec![-1.0]], 1.0, 0).unwrap();
        let x = gradient_correction_step(&[1.0], &[2.0], &inst, 0).unwrap();
        assert!((x[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn correction_guards() {
        let inst = QuadraticInstance::new(vec![vec![2.0]], vec![vec![-2.0]], 1.0, 0).unwrap();
        // g_c = 2·1 - 2 = 0 leaves x untouched
        assert_eq!(gradient_correction_step(&[1.0], &[3.0], &inst, 4).unwrap(), [1.0]);
        assert_eq!(gradient_correction_step(&[1.0], &[0.0], &inst, 0), Err(QuadError::ZeroGradSum));
    }
}
