use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Orthonormal basis grown one column at a time; used to keep `[X | Z]` at
/// full column rank while factors are placed.
#[derive(Debug, Clone)]
pub struct SpanTracker {
    basis: Vec<DVector<f64>>,
    tol: f64,
}

impl SpanTracker {
    pub fn new() -> Self {
        Self {
            basis: Vec::new(),
            tol: 1e-9,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Adds `v` if it is not in the current span. Returns whether it was added.
    pub fn try_add(&mut self, v: &DVector<f64>) -> bool {
        let norm = v.norm();
        if norm == 0.0 {
            return false;
        }
        let mut r = v / norm;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &self.basis {
                let d = q.dot(&r);
                r.axpy(-d, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn <= self.tol {
            return false;
        }
        self.basis.push(r / rn);
        true
    }
}

impl Default for SpanTracker {
    fn default() -> Self {
        Self::new()
    }
}

/// Numerical rank from singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let tol = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|s| **s > tol).count()
}

pub fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::numerical(format!("{what} is not positive definite")))
}

/// `log N(x; 0, S)` given the Cholesky factor of `S`.
pub fn mvn_logpdf_chol(x: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let n = x.len();
    let mut logdet_half = 0.0;
    for i in 0..n {
        logdet_half += l[(i, i)].ln();
    }
    let z = chol
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("cholesky factor has positive diagonal");
    -0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln() - logdet_half - 0.5 * z.norm_squared()
}

pub fn mvn_logpdf(x: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(cov.clone(), "covariance")?;
    Ok(mvn_logpdf_chol(x, &chol))
}

#[inline]
pub fn normal_logpdf(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * (x / sd) * (x / sd)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
