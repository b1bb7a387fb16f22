//! Recursive least squares for FORCE training.
//!
//! `P` tracks the inverse of the regularised activity correlation matrix
//! `(αI + Σ y yᵀ)⁻¹`. Each update applies the Sherman-Morrison rank-1
//! correction
//!
//! ```text
//! k = P y
//! P <- P - k kᵀ / (1 + yᵀ k)
//! W_o <- W_o - e_o · P y        (post-update P, one row per output)
//! ```
//!
//! with no forgetting factor, so after any sequence of updates the weights
//! equal the ridge-regression solution over every sample seen so far.

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::Matrix;
use crate::neuron::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    p: Matrix,
    alpha: f64,
    update_count: u64,
    scratch: Vec<f64>,
}

/// Result of one rank-1 update of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsGain {
    /// `P(t)·y`, the direction applied to every trained weight row.
    pub gain: Vec<f64>,
    /// `1 + yᵀ P(t-Δt) y`; the a-posteriori error is `e_pre / denom`.
    pub denom: f64,
}

impl RlsState {
    /// `P(0) = I/α`.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("RLS dimension must be at least 1"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config(format!("RLS alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            p: Matrix::identity_scaled(n, 1.0 / alpha),
            alpha,
            update_count: 0,
            scratch: vec![0.0; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    /// `yᵀ P y` under the current `P`.
    pub fn quadratic_form(&self, y: &[f64]) -> Result<f64> {
        check_dim("RlsState::quadratic_form", self.dim(), y.len())?;
        let py = self.p.mul_vec(y)?;
        Ok(dot(y, &py))
    }

    /// Applies the rank-1 update of `P` for activity `y` and returns the
    /// gain `P(t)·y`.
    ///
    /// `P` stays exactly symmetric: every entry is updated as
    /// `P_ij - (k_i k_j)/d`, and `k_i k_j == k_j k_i` in floating point.
    pub fn update(&mut self, y: &[f64]) -> Result<RlsGain> {
        check_dim("RlsState::update", self.dim(), y.len())?;
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("RLS activity contains {bad}")));
        }
        let n = self.dim();
        let mut k = std::mem::take(&mut self.scratch);
        self.p.mul_vec_into(y, &mut k);
        let denom = 1.0 + dot(y, &k);
        check_finite("RLS denominator", denom)?;
        let inv = 1.0 / denom;

        let data = self.p.as_mut_slice();
        for i in 0..n {
            let ki = k[i];
            if ki == 0.0 {
                continue;
            }
            let row = &mut data[i * n..(i + 1) * n];
            for (pij, &kj) in row.iter_mut().zip(&k) {
                *pij -= (ki * kj) * inv;
            }
        }
        self.update_count += 1;

        let gain = k.iter().map(|v| v * inv).collect();
        self.scratch = k;
        Ok(RlsGain { gain, denom })
    }

    /// One FORCE step: updates `P` with `y`, then moves every row `o` of
    /// `weights` (rows = outputs, columns = activity) by `-e_pre[o]·P(t)y`.
    ///
    /// `e_pre` is the a-priori error `weights·y - target`.
    pub fn step(&mut self, y: &[f64], e_pre: &[f64], weights: &mut Matrix) -> Result<RlsGain> {
        check_dim("rls_step activity", self.dim(), y.len())?;
        check_dim("rls_step weight columns", self.dim(), weights.cols())?;
        check_dim("rls_step error", weights.rows(), e_pre.len())?;
        if let Some(bad) = e_pre.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("RLS error contains {bad}")));
        }
        let gain = self.update(y)?;
        apply_gain(&gain.gain, e_pre, weights)?;
        Ok(gain)
    }

    /// Largest absolute asymmetry `max |P_ij - P_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.p.get(i, j) - self.p.get(j, i)).abs());
            }
        }
        worst
    }

    /// Cholesky audit: true when every pivot is strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        cholesky_pivots_positive(&self.p)
    }
}

/// `weights[o] -= e[o] · gain` for every output row.
pub fn apply_gain(gain: &[f64], e: &[f64], weights: &mut Matrix) -> Result<()> {
    check_dim("apply_gain columns", weights.cols(), gain.len())?;
    check_dim("apply_gain rows", weights.rows(), e.len())?;
    for (o, &eo) in e.iter().enumerate() {
        if eo == 0.0 {
            continue;
        }
        for (w, &g) in weights.row_mut(o).iter_mut().zip(gain) {
            *w -= eo * g;
        }
    }
    Ok(())
}

/// A-posteriori error `e_pre / (1 + yᵀ P_prev y)`.
pub fn posterior_error(e_pre: &[f64], y: &[f64], p_prev: &Matrix) -> Result<Vec<f64>> {
    check_dim("posterior_error rows", p_prev.rows(), y.len())?;
    check_dim("posterior_error cols", p_prev.cols(), y.len())?;
    let py = p_prev.mul_vec(y)?;
    let denom = 1.0 + dot(y, &py);
    Ok(e_pre.iter().map(|e| e / denom).collect())
}

fn cholesky_pivots_positive(m: &Matrix) -> bool {
    let n = m.rows();
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut diag = m.get(j, j);
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    true
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn p_stays_symmetric_positive_definite(
            seq in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 5), 1..60),
            alpha in 0.05f64..10.0,
        ) {
            let mut s = RlsState::new(5, alpha).unwrap();
            for y in &seq {
                s.update(y).unwrap();
                prop_assert!(s.max_asymmetry() < 1e-9);
            }
            prop_assert!(s.is_positive_definite());
        }

        #[test]
        fn each_step_contracts_the_error(
            seq in proptest::collection::vec(
                (proptest::collection::vec(-1.0f64..1.0, 4), -3.0f64..3.0), 1..40),
        ) {
            let mut s = RlsState::new(4, 1.0).unwrap();
            let mut w = Matrix::zeros(1, 4);
            for (y, t) in &seq {
                let e_pre = w.mul_vec(y).unwrap()[0] - t;
                let g = s.step(y, &[e_pre], &mut w).unwrap();
                let e_post = w.mul_vec(y).unwrap()[0] - t;
                if y.iter().any(|v| *v != 0.0) && e_pre != 0.0 {
                    prop_assert!(e_post.abs() < e_pre.abs());
                    prop_assert!((e_post - e_pre / g.denom).abs() < 1e-9 * (1.0 + e_pre.abs()));
                }
            }
        }
    }
}
