use super::DetectionResult;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{dot, Matrix, Vector};

/// Largest `K` the exhaustive search accepts (2^24 candidates).
pub const ML_MAX_K: usize = 24;

/// `‖y - Hx‖²`
pub fn ml_objective(h: &Matrix, y: &[f64], x: &[f64]) -> Result<f64> {
    let hx = h.matvec(x)?;
    if hx.len() != y.len() {
        return Err(shape_err("received vector length differs from channel rows"));
    }
    Ok(y.iter().zip(hx.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Exact maximum-likelihood decision by exhaustive search over `{±1}^K`.
///
/// Candidates are scored with `xᵀHᵀHx - 2xᵀHᵀy`, which differs from
/// `‖y - Hx‖²` by a constant. Candidates are visited in lexicographic order
/// (with -1 before +1) and only a strictly smaller score replaces the
/// incumbent, so ties go to the lexicographically smallest vector.
pub fn ml_bruteforce(h: &Matrix, y: &[f64]) -> Result<DetectionResult> {
    let k = h.cols();
    if k > ML_MAX_K {
        return Err(Error::Capacity(format!(
            "exhaustive ML search limited to K <= {ML_MAX_K}, got {k}"
        )));
    }
    if y.len() != h.rows() {
        return Err(shape_err(format!(
            "received vector of length {} for {}x{} channel",
            y.len(),
            h.rows(),
            k
        )));
    }
    let g = h.gram();
    let b = h.tmatvec(y)?;

    let mut x = vec![0.0; k];
    let mut best = vec![-1.0; k];
    let mut best_score = f64::INFINITY;
    for m in 0u64..(1u64 << k) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if (m >> (k - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 };
        }
        let mut score = 0.0;
        for i in 0..k {
            score += x[i] * (dot(g.row(i), &x) - 2.0 * b[i]);
        }
        if score < best_score {
            best_score = score;
            best.copy_from_slice(&x);
        }
    }
    Ok(DetectionResult::from_soft(Vector::from(best), 0))
}
