use serde::{Deserialize, Serialize};

use super::DetectionResult;
use crate::error::{shape_err, Error, Result};
use crate::numerics::{Matrix, SimRng, Vector};

/// Settings for [`amp`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpConfig {
    pub num_iterations: usize,
    /// Standard deviation (dB) of a Gaussian error added to the SNR the
    /// detector is told. Zero means the true noise variance is used.
    #[serde(default)]
    pub snr_bias_db_std: f64,
}

impl AmpConfig {
    /// `3K` iterations with exact noise knowledge.
    pub fn for_dims(k: usize) -> Self {
        AmpConfig {
            num_iterations: 3 * k,
            snr_bias_db_std: 0.0,
        }
    }

    /// Same as [`AmpConfig::for_dims`] with a mis-specified SNR.
    pub fn mis_specified(k: usize, snr_bias_db_std: f64) -> Self {
        AmpConfig {
            snr_bias_db_std,
            ..Self::for_dims(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_iterations == 0 || !(self.snr_bias_db_std >= 0.0) || !self.snr_bias_db_std.is_finite() {
            return Err(Error::Parameter(format!(
                "AMP needs num_iterations >= 1 and a finite bias std >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Real-valued approximate message passing for BPSK symbols.
///
/// With `β = K/N`, `A = H/√N` and `ỹ = y/√N`:
///
/// ```text
/// x₀ = 0,  z₀ = ỹ,  τ₀² = σ² + β
/// r_t     = x_t + Aᵀ z_t
/// x_{t+1} = tanh(r_t / τ_t²)
/// m_{t+1} = mean(1 - x_{t+1}²)
/// z_{t+1} = ỹ - A x_{t+1} + (β / τ_t²) m_{t+1} z_t
/// τ_{t+1}² = σ² + β m_{t+1}
/// ```
///
/// The noise term uses the receive-side variance `σ²` as is, not `σ²/N`.
/// When `cfg.snr_bias_db_std > 0` one Gaussian dB error `b` is drawn from
/// `rng` and the detector runs with `σ² · 10^(-b/10)`. An iterate with any
/// non-finite entry ends the recursion and the last finite estimate is
/// returned; `iterations_used` counts the completed iterations.
pub fn amp(h: &Matrix, y: &[f64], sigma2: f64, cfg: &AmpConfig, rng: &mut SimRng) -> Result<DetectionResult> {
    cfg.validate()?;
    if y.len() != h.rows() {
        return Err(shape_err(format!(
            "received vector of length {} for {}x{} channel",
            y.len(),
            h.rows(),
            h.cols()
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("AMP needs sigma2 > 0, got {sigma2}")));
    }
    let sigma2 = if cfg.snr_bias_db_std > 0.0 {
        let bias_db = cfg.snr_bias_db_std * rng.normal();
        sigma2 * 10f64.powf(-bias_db / 10.0)
    } else {
        sigma2
    };

    let (n, k) = h.shape();
    let beta = k as f64 / n as f64;
    let scale = 1.0 / (n as f64).sqrt();
    let a = h.scaled(scale);
    let y_n: Vec<f64> = y.iter().map(|v| v * scale).collect();

    let mut x = vec![0.0; k];
    let mut z = y_n.clone();
    let mut tau2 = sigma2 + beta;
    let mut r = vec![0.0; k];
    let mut ax = vec![0.0; n];
    let mut used = 0;

    for _ in 0..cfg.num_iterations {
        r.copy_from_slice(&x);
        a.tmatvec_acc(&z, &mut r);
        let x_next: Vec<f64> = r.iter().map(|ri| (ri / tau2).tanh()).collect();
        let m = x_next.iter().map(|v| 1.0 - v * v).sum::<f64>() / k as f64;
        a.matvec_into(&x_next, &mut ax);
        let onsager = beta / tau2 * m;
        let z_next: Vec<f64> = y_n
            .iter()
            .zip(&ax)
            .zip(&z)
            .map(|((yi, axi), zi)| yi - axi + onsager * zi)
            .collect();
        let tau2_next = sigma2 + beta * m;

        let finite = x_next.iter().chain(&z_next).all(|v| v.is_finite()) && tau2_next.is_finite() && tau2_next > 0.0;
        if !finite {
            break;
        }
        x = x_next;
        z = z_next;
        tau2 = tau2_next;
        used += 1;
    }
    Ok(DetectionResult::from_soft(Vector::from(x), used))
}
