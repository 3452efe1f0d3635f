use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::QuadError;

/// Finite-sum quadratic `f(x) = (1/n) Σ ½⟨x, A_i x⟩ + ⟨b_i, x⟩` with diagonal
/// positive definite `A_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticInstance {
    pub n: usize,
    pub d: usize,
    pub xi: f64,
    #[serde(rename = "seed")]
    pub rng_seed: u64,
    #[serde(rename = "A_diag")]
    pub a_diag: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl QuadraticInstance {
    pub fn new(
        a_diag: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        xi: f64,
        rng_seed: u64,
    ) -> Result<Self, QuadError> {
        let inst = QuadraticInstance {
            n: a_diag.len(),
            d: a_diag.first().map_or(0, Vec::len),
            xi,
            rng_seed,
            a_diag,
            b,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Shape and positivity invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), QuadError> {
        if self.n == 0 || self.d == 0 || self.a_diag.len() != self.n || self.b.len() != self.n {
            return Err(QuadError::ShapeMismatch);
        }
        for (a, b) in self.a_diag.iter().zip(&self.b) {
            if a.len() != self.d || b.len() != self.d {
                return Err(QuadError::ShapeMismatch);
            }
            if a.iter().any(|&v| !v.is_finite() || v <= 0.0) || b.iter().any(|v| !v.is_finite()) {
                return Err(QuadError::NonPositiveDiagonal);
            }
        }
        Ok(())
    }

    /// Diagonal of the mean matrix `(1/n) Σ A_i`.
    pub fn mean_diag(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for a in &self.a_diag {
            for (o, v) in out.iter_mut().zip(a) {
                *o += v;
            }
        }
        let n = self.n as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn mean_b(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for b in &self.b {
            for (o, v) in out.iter_mut().zip(b) {
                *o += v;
            }
        }
        let n = self.n as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Empirical condition number of the mean matrix.
    pub fn condition_number(&self) -> f64 {
        let diag = self.mean_diag();
        let max = diag.iter().cloned().fold(f64::MIN, f64::max);
        let min = diag.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// Objective value only.
    pub fn objective(&self, x: &[f64]) -> Result<f64, QuadError> {
        self.objective_and_gradient(x).map(|(f, _)| f)
    }

    pub fn objective_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), QuadError> {
        if x.len() != self.d {
            return Err(QuadError::ShapeMismatch);
        }
        let diag = self.mean_diag();
        let mean_b = self.mean_b();
        let mut f = 0.0;
        let mut g = vec![0.0; self.d];
        for j in 0..self.d {
            f += 0.5 * x[j] * diag[j] * x[j] + mean_b[j] * x[j];
            g[j] = diag[j] * x[j] + mean_b[j];
        }
        Ok((f, g))
    }

    /// `x* = -(mean A)^{-1} mean b` and `f(x*)`.
    pub fn closed_form_optimum(&self) -> (Vec<f64>, f64) {
        let diag = self.mean_diag();
        let x: Vec<f64> = self
            .mean_b()
            .iter()
            .zip(&diag)
            .map(|(b, a)| -b / a)
            .collect();
        let f = self.objective(&x).expect("optimum has matching shape");
        (x, f)
    }
}

/// Random instance: the first half of every diagonal from `U[1, 10^{ξ/2}]`,
/// the second half from `U[10^{-ξ/2}, 1]`, and `b_i` entries from `U[0, 1000]`.
pub fn generate_instance(n: usize, d: usize, xi: f64, rng_seed: u64) -> Result<QuadraticInstance, QuadError> {
    if !d.is_multiple_of(2) {
        return Err(QuadError::OddDimension(d));
    }
    if n == 0 || d == 0 || !xi.is_finite() || xi <= 0.0 {
        return Err(QuadError::InvalidParameter("n, d must be positive and xi > 0"));
    }
    let spread = libm::pow(10.0, xi / 2.0);
    let upper = Uniform::new_inclusive(1.0, spread).map_err(|_| QuadError::InvalidParameter("xi"))?;
    let lower = Uniform::new_inclusive(1.0 / spread, 1.0).map_err(|_| QuadError::InvalidParameter("xi"))?;
    let linear = Uniform::new_inclusive(0.0, 1e3).expect("static bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half = d / 2;
    let mut a_diag = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d)
            .map(|j| if j < half { upper.sample(&mut rng) } else { lower.sample(&mut rng) })
            .collect();
        a_diag.push(row);
        b.push((0..d).map(|_| linear.sample(&mut rng)).collect());
    }
    QuadraticInstance::new(a_diag, b, xi, rng_seed)
}
