use super::DetectionResult;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{solve_spd, Matrix, Vector};

fn check(h: &Matrix, y: &[f64]) -> Result<()> {
    if y.len() != h.rows() {
        return Err(shape_err(format!(
            "received vector of length {} for {}x{} channel",
            y.len(),
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

/// `sign(Hᵀy)`.
pub fn matched_filter(h: &Matrix, y: &[f64]) -> Result<DetectionResult> {
    check(h, y)?;
    Ok(DetectionResult::from_soft(h.tmatvec(y)?, 0))
}

/// Decorrelator `sign((HᵀH)⁻¹Hᵀy)`.
pub fn zero_forcing(h: &Matrix, y: &[f64]) -> Result<DetectionResult> {
    Ok(DetectionResult::from_soft(decorrelate(h, y)?, 0))
}

/// Soft decorrelator output `(HᵀH)⁻¹Hᵀy`.
pub(crate) fn decorrelate(h: &Matrix, y: &[f64]) -> Result<Vector> {
    check(h, y)?;
    solve_spd(&h.gram(), &h.tmatvec(y)?)
}

/// `sign((HᵀH + σ²I)⁻¹Hᵀy)`.
pub fn mmse(h: &Matrix, y: &[f64], sigma2: f64) -> Result<DetectionResult> {
    check(h, y)?;
    if !(sigma2 >= 0.0) {
        return Err(Error::Parameter(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let mut g = h.gram();
    for i in 0..g.rows() {
        g[(i, i)] += sigma2;
    }
    let soft = solve_spd(&g, &h.tmatvec(y)?)?;
    Ok(DetectionResult::from_soft(soft, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SimRng;

    #[test]
    fn mf_identity() {
        let r = matched_filter(&Matrix::identity(2), &[0.3, -2.0]).unwrap();
        assert_eq!(r.x_hat.as_ref(), &[1.0, -1.0]);
        assert_eq!(r.iterations_used, 0);
    }

    #[test]
    fn mf_orthogonal_columns_recover() {
        let h = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let y = h.matvec(&[-1.0, 1.0]).unwrap();
        assert_eq!(matched_filter(&h, &y).unwrap().x_hat.as_ref(), &[-1.0, 1.0]);
    }

    #[test]
    fn zf_identity_passes_y() {
        let y = [0.7, -0.2, 1.5];
        assert_eq!(zero_forcing(&Matrix::identity(3), &y).unwrap().soft.as_ref(), &y);
    }

    #[test]
    fn zf_noiseless_recovery_and_orthogonality() {
        let mut rng = SimRng::from_seed(2);
        let h = rng.randn_matrix(7, 4);
        let x = [1.0, -1.0, -1.0, 1.0];
        let y = h.matvec(&x).unwrap();
        let r = zero_forcing(&h, &y).unwrap();
        assert_eq!(r.x_hat.as_ref(), &x);

        let y: Vec<f64> = y.iter().map(|v| v + rng.normal()).collect();
        let soft = zero_forcing(&h, &y).unwrap().soft;
        let resid: Vec<f64> = y.iter().zip(h.matvec(&soft).unwrap().iter()).map(|(a, b)| a - b).collect();
        let normal = h.tmatvec(&resid).unwrap();
        assert!(normal.norm() < 1e-9, "Hᵀ(y - H·soft) = {normal:?}");
    }

    #[test]
    fn zf_singular_channel() {
        let h = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!(matches!(zero_forcing(&h, &[1.0, 1.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn mmse_limits() {
        let mut rng = SimRng::from_seed(4);
        let h = rng.randn_matrix(6, 3);
        let y = rng.randn(6);
        assert_eq!(mmse(&h, &y, 0.0).unwrap(), zero_forcing(&h, &y).unwrap());
        let big = mmse(&h, &y, 1e12).unwrap();
        assert!(big.soft.iter().all(|v| v.abs() < 1e-9));
        let tiny = mmse(&h, &y, 1e-12).unwrap().soft;
        let zf = zero_forcing(&h, &y).unwrap().soft;
        for (a, b) in tiny.iter().zip(zf.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(mmse(&h, &y, -1.0).is_err());
    }

    #[test]
    fn shape_errors() {
        let h = Matrix::zeros(3, 2);
        assert!(matches!(matched_filter(&h, &[1.0]), Err(Error::Shape(_))));
        assert!(matches!(zero_forcing(&h, &[1.0]), Err(Error::Shape(_))));
    }
}
