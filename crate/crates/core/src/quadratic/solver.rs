//! Incremental quasi-Newton solver with greedy rank-k surrogate refreshes.
//!
//! Each component keeps a dense surrogate `G_i`, initialised to
//! `max(diag A_i) · I` so that `G_i ⪰ A_i`. Iteration `t` refreshes the
//! surrogate of component `t mod n` with [`greedy_select`] and [`srk_update`],
//! keeps the inverse of the averaged surrogate current with
//! [`woodbury_inverse_update`], and takes the aggregated step
//!
//! ```text
//! x = B̄⁻¹ · (1/n) (Σ G_j z_j − Σ (A_j z_j + b_j))
//! ```
//!
//! Once every surrogate has absorbed its component the step lands on the
//! minimiser regardless of the snapshot points `z_j`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::updates::{
    gradient_correction_step, greedy_select, srk_update, woodbury_inverse_update, Variant,
};
use super::{QuadError, QuadraticInstance};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverVariant {
    pub variant: Variant,
    pub k: usize,
}

impl SolverVariant {
    pub fn new(variant: Variant, k: usize) -> Self {
        SolverVariant { variant, k }
    }
}

/// Per-building-block choice between the two forms. [`SolverVariant`] maps to
/// the all-A or all-B combination; mixed settings describe intermediate
/// designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LisrOptions {
    pub k: usize,
    pub selection: Variant,
    pub srk: Variant,
    pub woodbury: Variant,
    pub correction: bool,
}

impl From<SolverVariant> for LisrOptions {
    fn from(v: SolverVariant) -> Self {
        LisrOptions {
            k: v.k,
            selection: v.variant,
            srk: v.variant,
            woodbury: v.variant,
            correction: v.variant == Variant::B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub objective: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub g: Vec<DMatrix<f64>>,
    pub b_bar_inv: DMatrix<f64>,
    pub t: usize,
    pub trace: Vec<TracePoint>,
}

impl SolverState {
    pub fn new(inst: &QuadraticInstance, x0: &[f64]) -> Result<Self, QuadError> {
        inst.validate()?;
        if x0.len() != inst.d {
            return Err(QuadError::ShapeMismatch);
        }
        let d = inst.d;
        let mut mean = 0.0;
        let g: Vec<DMatrix<f64>> = inst
            .a_diag
            .iter()
            .map(|a| {
                let c = a.iter().cloned().fold(f64::MIN, f64::max);
                mean += c;
                DMatrix::identity(d, d) * c
            })
            .collect();
        mean /= inst.n as f64;
        let b_bar = DMatrix::identity(d, d) * mean;
        let b_bar_inv = linalg::inverse(&b_bar).ok_or(QuadError::NumericalBreakdown { iteration: 0 })?;
        Ok(SolverState {
            x: x0.to_vec(),
            z: vec![x0.to_vec(); inst.n],
            g,
            b_bar_inv,
            t: 0,
            trace: Vec::new(),
        })
    }

    /// Refreshes surrogate `i`. When the top-k block is rank deficient the
    /// rank is lowered until an update applies or nothing is left to absorb.
    fn refresh_surrogate(&mut self, inst: &QuadraticInstance, i: usize, opts: &LisrOptions) -> Result<(), QuadError> {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&inst.a_diag[i]));
        for k in (1..=opts.k).rev() {
            let g = &self.g[i];
            let u = greedy_select(g, &a, k, opts.selection)?;
            let updated = srk_update(g, &a, &u, opts.srk)?;
            if updated == *g {
                continue;
            }
            let diff_u = (g - &a) * &u;
            let inner = u.transpose() * &diff_u * (inst.n as f64);
            let mut inv = woodbury_inverse_update(&self.b_bar_inv, &diff_u, &diff_u, &inner, opts.woodbury)?;
            let t = inv.transpose();
            inv += t;
            inv *= 0.5;
            self.b_bar_inv = inv;
            self.g[i] = updated;
            return Ok(());
        }
        Ok(())
    }

    /// `Σ (A_j z_j + b_j)`, left unnormalised.
    pub fn grad_sum(&self, inst: &QuadraticInstance) -> Vec<f64> {
        let mut out = vec![0.0; inst.d];
        for ((a, b), z) in inst.a_diag.iter().zip(&inst.b).zip(&self.z) {
            for j in 0..inst.d {
                out[j] += a[j] * z[j] + b[j];
            }
        }
        out
    }

    fn surrogate_sum(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.x.len());
        for (g, z) in self.g.iter().zip(&self.z) {
            out += g * DVector::from_column_slice(z);
        }
        out
    }

    /// One iteration; returns the new objective value.
    pub fn step(&mut self, inst: &QuadraticInstance, opts: &LisrOptions) -> Result<f64, QuadError> {
        let t = self.t;
        let i = t % inst.n;
        self.refresh_surrogate(inst, i, opts)?;

        let grad_sum = self.grad_sum(inst);
        let rhs = (self.surrogate_sum() - DVector::from_column_slice(&grad_sum)) / inst.n as f64;
        let mut x_new: Vec<f64> = (&self.b_bar_inv * rhs).iter().cloned().collect();
        let mut f_new = inst.objective(&x_new)?;

        if opts.correction {
            if let Ok(candidate) = gradient_correction_step(&x_new, &grad_sum, inst, t) {
                let f_candidate = inst.objective(&candidate)?;
                if f_candidate < f_new {
                    x_new = candidate;
                    f_new = f_candidate;
                }
            }
        }
        if !f_new.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            return Err(QuadError::NumericalBreakdown { iteration: t });
        }
        self.z[i].clone_from(&x_new);
        self.x = x_new;
        self.t += 1;
        Ok(f_new)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    /// Stopped by the tolerance test rather than the iteration cap.
    pub converged: bool,
}

/// [`lisr_solve_timed`] without a clock; elapsed times are recorded as zero.
pub fn lisr_solve(
    inst: &QuadraticInstance,
    opts: impl Into<LisrOptions>,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<SolveOutcome, QuadError> {
    lisr_solve_timed(inst, opts, x0, max_iter, tol, &mut || 0.0)
}

/// Runs until `|f_t − f_{t−1}| ≤ tol·(1+|f_t|)` or `max_iter`, returning the
/// best iterate seen. `clock` returns seconds since an arbitrary origin.
pub fn lisr_solve_timed(
    inst: &QuadraticInstance,
    opts: impl Into<LisrOptions>,
    x0: &[f64],
    max_iter: usize,
    tol: f64,
    clock: &mut dyn FnMut() -> f64,
) -> Result<SolveOutcome, QuadError> {
    let opts = opts.into();
    if opts.k == 0 || opts.k > inst.d {
        return Err(QuadError::InvalidRank { k: opts.k, d: inst.d });
    }
    if max_iter == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(QuadError::InvalidParameter("max_iter >= 1 and tol > 0 required"));
    }
    let start = clock();
    let mut state = SolverState::new(inst, x0)?;
    let mut f_prev = inst.objective(x0)?;
    let mut best = (x0.to_vec(), f_prev);
    let mut converged = false;
    while state.t < max_iter {
        let f = state.step(inst, &opts)?;
        state.trace.push(TracePoint {
            t: state.t,
            objective: f,
            elapsed: clock() - start,
        });
        if f < best.1 {
            best = (state.x.clone(), f);
        }
        if libm::fabs(f - f_prev) <= tol * (1.0 + libm::fabs(f)) {
            converged = true;
            break;
        }
        f_prev = f;
    }
    Ok(SolveOutcome {
        x_best: best.0,
        f_best: best.1,
        iterations: state.t,
        trace: state.trace,
        converged,
    })
}

/// First recorded iteration whose objective is within
/// `rel_tol·(1+|f*|)` of `f_star`.
pub fn iterations_to_tolerance(trace: &[TracePoint], f_star: f64, rel_tol: f64) -> Option<usize> {
    let bound = rel_tol * (1.0 + libm::fabs(f_star));
    trace
        .iter()
        .find(|p| p.objective - f_star <= bound)
        .map(|p| p.t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::generate_instance;

    #[test]
    fn identity_instance_converges_to_origin() {
        let inst = QuadraticInstance::new(vec![vec![1.0; 4]; 4], vec![vec![0.0; 4]; 4], 1.0, 0).unwrap();
        let x0 = [3.0, -1.0, 2.0, 5.0];
        for variant in [Variant::A, Variant::B] {
            let out = lisr_solve(&inst, SolverVariant::new(variant, 2), &x0, 50, 1e-12).unwrap();
            let norm = out.x_best.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 1e-8, "{variant:?}: {norm}");
            assert!(out.trace.iter().all(|p| p.objective.is_finite()));
        }
    }

    #[test]
    fn small_instance_reaches_closed_form() {
        let inst = generate_instance(4, 4, 2.0, 7).unwrap();
        let (_, f_star) = inst.closed_form_optimum();
        for variant in [Variant::A, Variant::B] {
            let out = lisr_solve(&inst, SolverVariant::new(variant, 2), &[0.0; 4], 500, 1e-14).unwrap();
            assert!(out.f_best - f_star <= 1e-6 * (1.0 + f_star.abs()), "{variant:?}");
        }
    }

    #[test]
    fn inverse_stays_symmetric() {
        let inst = generate_instance(6, 6, 4.0, 2).unwrap();
        let mut state = SolverState::new(&inst, &[0.0; 6]).unwrap();
        let opts = LisrOptions::from(SolverVariant::new(Variant::B, 2));
        for _ in 0..30 {
            state.step(&inst, &opts).unwrap();
            assert!(linalg::asymmetry(&state.b_bar_inv) <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let inst = generate_instance(2, 4, 2.0, 1).unwrap();
        assert!(matches!(
            lisr_solve(&inst, SolverVariant::new(Variant::A, 5), &[0.0; 4], 10, 1e-6),
            Err(QuadError::InvalidRank { .. })
        ));
        assert_eq!(
            lisr_solve(&inst, SolverVariant::new(Variant::A, 2), &[0.0; 3], 10, 1e-6).unwrap_err(),
            QuadError::ShapeMismatch
        );
    }

    #[test]
    fn tolerance_helper() {
        let trace = [
            TracePoint { t: 1, objective: 10.0, elapsed: 0.0 },
            TracePoint { t: 2, objective: 1.0 + 1e-9, elapsed: 0.0 },
        ];
        assert_eq!(iterations_to_tolerance(&trace, 1.0, 1e-6), Some(2));
        assert_eq!(iterations_to_tolerance(&trace, 0.0, 1e-6), None);
    }
}
