//! Samples of the linear model `y = Hx + w` with BPSK symbols.
//!
//! Two channel regimes are supported: a fixed, deliberately ill-conditioned
//! channel whose Gram matrix is a `rho`-Toeplitz matrix, and i.i.d. Gaussian
//! channels redrawn for every sample.
//!
//! SNR convention: `SNR = E‖Hx‖² / E‖w‖² = trace(HᵀH) / (N σ²)`, so
//! `σ² = trace(HᵀH) / (N · 10^(SNR_dB / 10))`.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::numerics::{haar_orthogonal, sym_eig, Matrix, SimRng, Vector};

/// Transmit (`K`) and receive (`N`) dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDims {
    pub k_tx: usize,
    pub n_rx: usize,
}

impl SystemDims {
    pub fn new(k_tx: usize, n_rx: usize) -> Result<Self> {
        let dims = SystemDims { k_tx, n_rx };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_tx == 0 || self.n_rx < self.k_tx {
            return Err(Error::Parameter(format!(
                "dimensions need n_rx >= k_tx >= 1, got k_tx={} n_rx={}",
                self.k_tx, self.n_rx
            )));
        }
        Ok(())
    }
}

/// Range of the per-sample SNR draw, in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSpec {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl SnrSpec {
    pub fn fixed(snr_db: f64) -> Self {
        SnrSpec {
            snr_min_db: snr_db,
            snr_max_db: snr_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr_min_db.is_finite() && self.snr_max_db.is_finite())
            || self.snr_min_db > self.snr_max_db
        {
            return Err(Error::Parameter(format!(
                "SNR range [{}, {}] dB is not a finite non-empty interval",
                self.snr_min_db, self.snr_max_db
            )));
        }
        Ok(())
    }
}

/// One realization of `y = Hx + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    pub h: Matrix,
    pub x: Vector,
    pub y: Vector,
    pub sigma2: f64,
    pub snr_db: f64,
}

impl ChannelSample {
    /// The noise realization `y - Hx`.
    pub fn noise(&self) -> Vector {
        let hx = self.h.matvec(&self.x).expect("sample shapes are consistent");
        self.y.iter().zip(hx.iter()).map(|(y, s)| y - s).collect()
    }
}

/// Parameters of the fixed Toeplitz-Gram channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedChannelSpec {
    pub rho: f64,
    pub dims: SystemDims,
    pub seed: u64,
}

impl FixedChannelSpec {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Parameter(format!("Toeplitz decay must lie in (0, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

/// `K × K` matrix with entries `rho^|i-j|`.
pub fn toeplitz(k: usize, rho: f64) -> Matrix {
    Matrix::from_fn(k, k, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Builds `H = Q diag(√λ) Vᵀ` where `T = V diag(λ) Vᵀ` is the Toeplitz target
/// and `Q` is an `N × K` Haar frame drawn from `spec.seed`, so `HᵀH = T`.
pub fn build_fixed_channel(spec: &FixedChannelSpec) -> Result<Matrix> {
    spec.validate()?;
    let SystemDims { k_tx: k, n_rx: n } = spec.dims;
    let target = toeplitz(k, spec.rho);
    let (lambda, v) = sym_eig(&target)?;
    if let Some(&min) = lambda.first() {
        if !(min > 0.0) {
            return Err(Error::Singular(format!("Toeplitz target has eigenvalue {min:e}")));
        }
    }
    let q = haar_orthogonal(&mut SimRng::from_seed(spec.seed), n, k)?;
    let root = Matrix::diag(&lambda.iter().map(|l| l.sqrt()).collect::<Vec<_>>());
    q.matmul(&root)?.matmul(&v.transpose())
}

/// Fresh `N × K` channel with i.i.d. `N(0, 1)` entries.
pub fn sample_vc_channel(rng: &mut SimRng, dims: SystemDims) -> Matrix {
    rng.randn_matrix(dims.n_rx, dims.k_tx)
}

/// Noise variance that puts `h` at `snr_db` under the crate's SNR convention.
pub fn sigma2_from_snr(h: &Matrix, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("SNR must be finite, got {snr_db}")));
    }
    let energy = h.as_slice().iter().map(|v| v * v).sum::<f64>();
    if !(energy > 0.0) {
        return Err(Error::Singular("channel has zero energy".into()));
    }
    let sigma2 = energy / (h.rows() as f64 * 10f64.powf(snr_db / 10.0));
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Parameter(format!("SNR {snr_db} dB gives noise variance {sigma2:e}")));
    }
    Ok(sigma2)
}

/// Draws `x`, the SNR and the noise for channel `h`.
///
/// Draw order: `K` symbols, one uniform SNR, then `N` noise entries.
pub fn sample(rng: &mut SimRng, h: &Matrix, snr: &SnrSpec) -> Result<ChannelSample> {
    snr.validate()?;
    let x: Vector = (0..h.cols()).map(|_| rng.bpsk()).collect();
    let snr_db = rng.uniform(snr.snr_min_db, snr.snr_max_db);
    finish_sample(rng, h.clone(), x, snr_db)
}

/// Like [`sample`] but with the SNR pinned (no uniform draw).
pub fn sample_at_snr(rng: &mut SimRng, h: &Matrix, snr_db: f64) -> Result<ChannelSample> {
    let x: Vector = (0..h.cols()).map(|_| rng.bpsk()).collect();
    finish_sample(rng, h.clone(), x, snr_db)
}

fn finish_sample(rng: &mut SimRng, h: Matrix, x: Vector, snr_db: f64) -> Result<ChannelSample> {
    let sigma2 = sigma2_from_snr(&h, snr_db)?;
    let sigma = sigma2.sqrt();
    let mut y = h.matvec(&x)?;
    for yi in y.iter_mut() {
        *yi += sigma * rng.normal();
    }
    Ok(ChannelSample {
        h,
        x,
        y,
        sigma2,
        snr_db,
    })
}

/// Which channel distribution an experiment uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelMode {
    Fixed(FixedChannelSpec),
    Varying,
}

/// A channel distribution ready to sample from.
#[derive(Clone, Debug)]
pub enum ChannelSource {
    Fixed(Matrix),
    Varying(SystemDims),
}

impl ChannelSource {
    pub fn new(mode: &ChannelMode, dims: SystemDims) -> Result<Self> {
        dims.validate()?;
        match mode {
            ChannelMode::Fixed(spec) => {
                if spec.dims != dims {
                    return Err(shape_err(format!(
                        "fixed channel dims {:?} differ from system dims {:?}",
                        spec.dims, dims
                    )));
                }
                Ok(ChannelSource::Fixed(build_fixed_channel(spec)?))
            }
            ChannelMode::Varying => Ok(ChannelSource::Varying(dims)),
        }
    }

    /// Wraps an already built fixed channel (e.g. loaded from disk).
    pub fn fixed(h: Matrix) -> Result<Self> {
        SystemDims::new(h.cols(), h.rows())?;
        Ok(ChannelSource::Fixed(h))
    }

    pub fn dims(&self) -> SystemDims {
        match self {
            ChannelSource::Fixed(h) => SystemDims {
                k_tx: h.cols(),
                n_rx: h.rows(),
            },
            ChannelSource::Varying(d) => *d,
        }
    }

    /// The channel for the next sample; varying sources consume `N·K` normals.
    pub fn channel(&self, rng: &mut SimRng) -> Cow<'_, Matrix> {
        match self {
            ChannelSource::Fixed(h) => Cow::Borrowed(h),
            ChannelSource::Varying(d) => Cow::Owned(sample_vc_channel(rng, *d)),
        }
    }

    pub fn sample(&self, rng: &mut SimRng, snr: &SnrSpec) -> Result<ChannelSample> {
        let h = self.channel(rng);
        sample(rng, &h, snr)
    }

    pub fn sample_at(&self, rng: &mut SimRng, snr_db: f64) -> Result<ChannelSample> {
        let h = self.channel(rng);
        sample_at_snr(rng, &h, snr_db)
    }
}
