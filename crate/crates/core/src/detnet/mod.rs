//! DetNet: projected gradient descent on `‖y - Hx‖²` unfolded into `L`
//! learned layers.
//!
//! Each layer lifts `[Hᵀy; x̂; HᵀH x̂; v]` into a hidden ReLU layer and maps
//! it back to a new symbol estimate through the soft sign `ψ_t`, plus an
//! auxiliary state `v` carried to the next layer:
//!
//! ```text
//! z_k     = ρ(W1_k [Hᵀy; x̂_k; HᵀH x̂_k; v_k] + b1_k)
//! x̂_{k+1} = α ψ_{t_k}(W2_k z_k + b2_k) + (1 - α) x̂_k
//! v_{k+1} = α (W3_k z_k + b3_k)        + (1 - α) v_k
//! x̂_1 = 0,  v_1 = 0
//! ```
//!
//! The network only sees `y` through `Hᵀy`.

pub mod checkpoint;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};

use crate::channel::{ChannelSample, SystemDims};
use crate::detectors::{DetectionResult, Detector};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{Matrix, SimRng, Vector};

/// Smallest admissible `|t|` in the soft sign.
pub const T_FLOOR: f64 = 1e-2;

/// Initial soft-sign threshold.
pub const T_INIT: f64 = 0.5;

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_WEIGHT_STD: f64 = 0.01;

fn default_alpha() -> f64 {
    0.9
}

/// Network shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub dims: SystemDims,
    pub num_layers: usize,
    pub z_size: usize,
    pub v_size: usize,
    /// Weight of the new layer output in the residual average.
    #[serde(default = "default_alpha")]
    pub residual_alpha: f64,
}

impl ArchConfig {
    /// `3K` layers, hidden width `8K`, auxiliary width `2K`.
    pub fn full(dims: SystemDims) -> Self {
        ArchConfig {
            dims,
            num_layers: 3 * dims.k_tx,
            z_size: 8 * dims.k_tx,
            v_size: 2 * dims.k_tx,
            residual_alpha: default_alpha(),
        }
    }

    /// Same widths with only `K` layers.
    pub fn shallow(dims: SystemDims) -> Self {
        ArchConfig {
            num_layers: dims.k_tx,
            ..Self::full(dims)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.num_layers == 0 || self.z_size == 0 {
            return Err(Error::Parameter(format!(
                "need num_layers >= 1 and z_size >= 1, got {} and {}",
                self.num_layers, self.z_size
            )));
        }
        if !(0.0..=1.0).contains(&self.residual_alpha) {
            return Err(Error::Parameter(format!(
                "residual_alpha must lie in [0, 1], got {}",
                self.residual_alpha
            )));
        }
        Ok(())
    }

    /// Width of the layer input `[Hᵀy; x̂; HᵀH x̂; v]`.
    pub fn input_size(&self) -> usize {
        3 * self.dims.k_tx + self.v_size
    }
}

/// Weights of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
    pub w3: Matrix,
    pub b3: Vector,
    pub t: f64,
}

/// Names of the per-layer parameter arrays, in [`LayerParams::blocks`] order.
pub const BLOCK_NAMES: [&str; 7] = ["w1", "b1", "w2", "b2", "w3", "b3", "t"];

impl LayerParams {
    pub fn zeros(arch: &ArchConfig) -> Self {
        let k = arch.dims.k_tx;
        LayerParams {
            w1: Matrix::zeros(arch.z_size, arch.input_size()),
            b1: Vector::zeros(arch.z_size),
            w2: Matrix::zeros(k, arch.z_size),
            b2: Vector::zeros(k),
            w3: Matrix::zeros(arch.v_size, arch.z_size),
            b3: Vector::zeros(arch.v_size),
            t: 0.0,
        }
    }

    /// Flat views of every parameter array, ordered as [`BLOCK_NAMES`].
    pub fn blocks(&self) -> [&[f64]; 7] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            self.w3.as_slice(),
            &self.b3,
            std::slice::from_ref(&self.t),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            self.w3.as_mut_slice(),
            &mut self.b3,
            std::slice::from_mut(&mut self.t),
        ]
    }

    fn shapes(&self) -> [Vec<usize>; 7] {
        [
            vec![self.w1.rows(), self.w1.cols()],
            vec![self.b1.len()],
            vec![self.w2.rows(), self.w2.cols()],
            vec![self.b2.len()],
            vec![self.w3.rows(), self.w3.cols()],
            vec![self.b3.len()],
            vec![],
        ]
    }
}

/// All learned weights of a DetNet.
#[derive(Clone, Debug, PartialEq)]
pub struct DetNetParams {
    arch: ArchConfig,
    layers: Vec<LayerParams>,
}

impl DetNetParams {
    /// All-zero weights with every threshold at `t`.
    pub fn zeros(arch: ArchConfig, t: f64) -> Result<Self> {
        arch.validate()?;
        let mut layer = LayerParams::zeros(&arch);
        layer.t = t;
        let params = DetNetParams {
            layers: vec![layer; arch.num_layers],
            arch,
        };
        params.validate()?;
        Ok(params)
    }

    /// Training start point: weights i.i.d. `N(0, 0.01²)`, zero biases,
    /// thresholds at 0.5. Weights are drawn layer by layer in the order
    /// W1, W2, W3, each row-major.
    pub fn init(arch: ArchConfig, rng: &mut SimRng) -> Result<Self> {
        let mut params = Self::zeros(arch, T_INIT)?;
        for layer in &mut params.layers {
            for w in [&mut layer.w1, &mut layer.w2, &mut layer.w3] {
                w.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = INIT_WEIGHT_STD * rng.normal());
            }
        }
        Ok(params)
    }

    /// Assembles parameters from explicit layers, checking every shape.
    pub fn from_layers(arch: ArchConfig, layers: Vec<LayerParams>) -> Result<Self> {
        arch.validate()?;
        let params = DetNetParams { arch, layers };
        params.validate()?;
        Ok(params)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Checks shapes against the architecture, `|t| ≥ T_FLOOR` and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != self.arch.num_layers {
            return Err(shape_err(format!(
                "architecture has {} layers, parameters have {}",
                self.arch.num_layers,
                self.layers.len()
            )));
        }
        let expected = LayerParams::zeros(&self.arch).shapes();
        for (i, layer) in self.layers.iter().enumerate() {
            let found = layer.shapes();
            for (name, (e, f)) in BLOCK_NAMES.iter().zip(expected.iter().zip(found.iter())) {
                if e != f {
                    return Err(shape_err(format!("layer {} {name}: expected shape {e:?}, found {f:?}", i + 1)));
                }
            }
            if !(layer.t.abs() >= T_FLOOR) {
                return Err(Error::Parameter(format!(
                    "layer {} threshold |t| = {} below floor {T_FLOOR}",
                    i + 1,
                    layer.t.abs()
                )));
            }
            if layer.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite {
                    layer: i + 1,
                    what: "parameter".into(),
                });
            }
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(|l| l.blocks().iter().map(|b| b.len()).sum::<usize>()).sum()
    }
}

/// Rectified linear unit.
#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Piecewise-linear soft sign `ψ_t(x) = -1 + ρ(x + t)/|t| - ρ(x - t)/|t|`,
/// evaluated in its saturation form: -1 below `-|t|`, `x/|t|` inside,
/// +1 above `|t|`.
pub fn soft_sign(x: f64, t: f64) -> Result<f64> {
    if !(t.abs() >= T_FLOOR) {
        return Err(Error::Parameter(format!("soft sign threshold |t| = {} below floor {T_FLOOR}", t.abs())));
    }
    Ok(soft_sign_unchecked(x, t.abs()))
}

#[inline]
pub(crate) fn soft_sign_unchecked(x: f64, abs_t: f64) -> f64 {
    if x >= abs_t {
        1.0
    } else if x <= -abs_t {
        -1.0
    } else {
        x / abs_t
    }
}

/// Outputs of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutput {
    pub z: Vector,
    pub x_hat: Vector,
    pub v: Vector,
}

/// Per-layer outputs of a forward pass; entry `k-1` holds layer `k`'s
/// hidden activations and the estimate it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub layers: Vec<LayerOutput>,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Estimate after layer `k` (1-based).
    pub fn x_hat(&self, k: usize) -> &Vector {
        &self.layers[k - 1].x_hat
    }
}

/// Everything a layer computed, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerCache {
    /// `[Hᵀy; x̂_k; HᵀH x̂_k; v_k]`
    pub input: Vec<f64>,
    /// Hidden activations after ReLU.
    pub z: Vec<f64>,
    /// Pre-soft-sign values `W2 z + b2`.
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
    pub v_next: Vec<f64>,
}

/// Runs the first `upto` layers given the sufficient statistics.
pub(crate) fn forward_cached(params: &DetNetParams, hty: &[f64], gram: &Matrix, upto: usize) -> Vec<LayerCache> {
    let arch = &params.arch;
    let k = arch.dims.k_tx;
    let alpha = arch.residual_alpha;
    let mut x = vec![0.0; k];
    let mut v = vec![0.0; arch.v_size];
    let mut caches = Vec::with_capacity(upto);

    for layer in &params.layers[..upto] {
        let mut input = Vec::with_capacity(arch.input_size());
        input.extend_from_slice(hty);
        input.extend_from_slice(&x);
        input.resize(3 * k, 0.0);
        gram.matvec_into(&x, &mut input[2 * k..3 * k]);
        input.extend_from_slice(&v);

        let mut z = vec![0.0; arch.z_size];
        layer.w1.matvec_into(&input, &mut z);
        for (zi, bi) in z.iter_mut().zip(layer.b1.iter()) {
            *zi = relu(*zi + bi);
        }

        let mut u = vec![0.0; k];
        layer.w2.matvec_into(&z, &mut u);
        let abs_t = layer.t.abs();
        let mut x_next = vec![0.0; k];
        for i in 0..k {
            u[i] += layer.b2[i];
            x_next[i] = alpha * soft_sign_unchecked(u[i], abs_t) + (1.0 - alpha) * x[i];
        }

        let mut v_next = vec![0.0; arch.v_size];
        layer.w3.matvec_into(&z, &mut v_next);
        for i in 0..arch.v_size {
            v_next[i] = alpha * (v_next[i] + layer.b3[i]) + (1.0 - alpha) * v[i];
        }

        x.copy_from_slice(&x_next);
        v.copy_from_slice(&v_next);
        caches.push(LayerCache {
            input,
            z,
            u,
            x_next,
            v_next,
        });
    }
    caches
}

pub(crate) fn sufficient_statistics(params: &DetNetParams, h: &Matrix, y: &[f64]) -> Result<(Vector, Matrix)> {
    let dims = params.arch.dims;
    if h.shape() != (dims.n_rx, dims.k_tx) || y.len() != dims.n_rx {
        return Err(shape_err(format!(
            "network built for {}x{} channels, got H {:?} and y of length {}",
            dims.n_rx,
            dims.k_tx,
            h.shape(),
            y.len()
        )));
    }
    Ok((h.tmatvec(y)?, h.gram()))
}

/// Full forward pass over all layers.
pub fn forward(params: &DetNetParams, h: &Matrix, y: &[f64]) -> Result<LayerTrace> {
    let (hty, gram) = sufficient_statistics(params, h, y)?;
    let caches = forward_cached(params, &hty, &gram, params.num_layers());
    Ok(LayerTrace {
        layers: caches
            .into_iter()
            .map(|c| LayerOutput {
                z: c.z.into(),
                x_hat: c.x_next.into(),
                v: c.v_next.into(),
            })
            .collect(),
    })
}

/// Hard decision taken after `exit_layer` layers (1-based); later layers are
/// not evaluated.
pub fn detect(params: &DetNetParams, h: &Matrix, y: &[f64], exit_layer: usize) -> Result<DetectionResult> {
    if exit_layer == 0 || exit_layer > params.num_layers() {
        return Err(Error::Parameter(format!(
            "exit layer {exit_layer} outside 1..={}",
            params.num_layers()
        )));
    }
    let (hty, gram) = sufficient_statistics(params, h, y)?;
    let mut caches = forward_cached(params, &hty, &gram, exit_layer);
    let last = caches.pop().expect("exit_layer >= 1");
    Ok(DetectionResult::from_soft(last.x_next.into(), exit_layer))
}

/// A trained network bound to an exit layer, usable by the BER harness.
#[derive(Clone, Debug)]
pub struct DetNetDetector {
    name: String,
    params: DetNetParams,
    exit_layer: usize,
}

impl DetNetDetector {
    pub fn new(name: impl Into<String>, params: DetNetParams, exit_layer: Option<usize>) -> Result<Self> {
        let exit_layer = exit_layer.unwrap_or(params.num_layers());
        if exit_layer == 0 || exit_layer > params.num_layers() {
            return Err(Error::Parameter(format!(
                "exit layer {exit_layer} outside 1..={}",
                params.num_layers()
            )));
        }
        Ok(DetNetDetector {
            name: name.into(),
            params,
            exit_layer,
        })
    }

    pub fn exit_layer(&self) -> usize {
        self.exit_layer
    }

    pub fn params(&self) -> &DetNetParams {
        &self.params
    }
}

impl Detector for DetNetDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&self, s: &ChannelSample, _rng: &mut SimRng) -> Result<DetectionResult> {
        detect(&self.params, &s.h, &s.y, self.exit_layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(k: usize, n: usize) -> SystemDims {
        SystemDims::new(k, n).unwrap()
    }

    #[test]
    fn soft_sign_values() {
        for t in [0.01, 0.3, 1.0, -2.0] {
            assert_eq!(soft_sign(0.0, t).unwrap(), 0.0);
        }
        assert_eq!(soft_sign(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(soft_sign(3.0, 0.5).unwrap(), 1.0);
        assert_eq!(soft_sign(-3.0, 0.5).unwrap(), -1.0);
        assert!(matches!(soft_sign(1.0, 0.001), Err(Error::Parameter(_))));
        assert!(soft_sign(1.0, f64::NAN).is_err());
    }

    #[test]
    fn soft_sign_matches_relu_form() {
        for &t in &[0.05f64, 0.5, 1.0, 3.0, -0.7] {
            for i in -40..=40 {
                let x = i as f64 * 0.1;
                let a = t.abs();
                let relu_form = -1.0 + relu(x + a) / a - relu(x - a) / a;
                assert!((soft_sign(x, t).unwrap() - relu_form).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(relu(0.0), 0.0);
    }

    #[test]
    fn arch_presets() {
        let a = ArchConfig::full(dims(8, 16));
        assert_eq!((a.num_layers, a.z_size, a.v_size, a.input_size()), (24, 64, 16, 40));
        assert_eq!(ArchConfig::shallow(dims(8, 16)).num_layers, 8);
        let mut bad = a;
        bad.residual_alpha = 1.5;
        assert!(bad.validate().is_err());
        bad = a;
        bad.num_layers = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_network_trace_is_zero() {
        let arch = ArchConfig::full(dims(3, 5));
        let params = DetNetParams::zeros(arch, 0.5).unwrap();
        let mut rng = SimRng::from_seed(1);
        let h = rng.randn_matrix(5, 3);
        let y = rng.randn(5);
        let trace = forward(&params, &h, &y).unwrap();
        assert_eq!(trace.len(), 9);
        for out in &trace.layers {
            assert!(out.x_hat.iter().chain(out.z.iter()).chain(out.v.iter()).all(|&v| v == 0.0));
        }
        let r = detect(&params, &h, &y, 9).unwrap();
        assert_eq!(r.x_hat.as_ref(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn alpha_zero_freezes_estimate() {
        let mut arch = ArchConfig::full(dims(2, 4));
        arch.residual_alpha = 0.0;
        let params = DetNetParams::init(arch, &mut SimRng::from_seed(3)).unwrap();
        let mut params = params;
        for l in params.layers_mut() {
            l.b2.iter_mut().for_each(|b| *b = 5.0);
        }
        let mut rng = SimRng::from_seed(4);
        let h = rng.randn_matrix(4, 2);
        let trace = forward(&params, &h, &rng.randn(4)).unwrap();
        assert!(trace.layers.iter().all(|o| o.x_hat.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn hand_evaluated_single_layer() {
        // K = 1, N = 2, v_size = 1, z_size = 2, α = 0.5.
        let arch = ArchConfig {
            dims: dims(1, 2),
            num_layers: 1,
            z_size: 2,
            v_size: 1,
            residual_alpha: 0.5,
        };
        let layer = LayerParams {
            // input = [Hᵀy, x̂, HᵀH x̂, v] = [3, 0, 0, 0] with H = [1; 1], y = [1; 2]
            w1: Matrix::from_rows(&[&[0.5, 1.0, 1.0, 1.0], &[-1.0, 0.0, 0.0, 0.0]]).unwrap(),
            b1: Vector::from([-0.25, 0.5]),
            w2: Matrix::from_rows(&[&[0.4, 2.0]]).unwrap(),
            b2: Vector::from([-0.1]),
            w3: Matrix::from_rows(&[&[1.0, -1.0]]).unwrap(),
            b3: Vector::from([0.2]),
            t: -2.0,
        };
        let params = DetNetParams::from_layers(arch, vec![layer]).unwrap();
        let h = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let trace = forward(&params, &h, &[1.0, 2.0]).unwrap();
        // a = [1.5 - 0.25, -3 + 0.5] -> z = [1.25, 0]
        // u = 0.4 * 1.25 - 0.1 = 0.4 -> ψ_2(0.4) = 0.2 -> x̂ = 0.5 * 0.2 = 0.1
        // q = 1.25 + 0.2 = 1.45 -> v = 0.725
        let out = &trace.layers[0];
        assert_eq!(out.z.as_ref(), &[1.25, 0.0]);
        assert!((out.x_hat[0] - 0.1).abs() < 1e-15);
        assert!((out.v[0] - 0.725).abs() < 1e-15);
    }

    #[test]
    fn detect_checks_exit_layer() {
        let params = DetNetParams::zeros(ArchConfig::full(dims(2, 3)), 0.5).unwrap();
        let h = Matrix::zeros(3, 2);
        assert!(detect(&params, &h, &[0.0; 3], 0).is_err());
        assert!(detect(&params, &h, &[0.0; 3], 7).is_err());
        assert!(detect(&params, &h, &[0.0; 3], 6).is_ok());
        assert!(matches!(detect(&params, &Matrix::zeros(4, 2), &[0.0; 4], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn validate_rejects_small_threshold() {
        let arch = ArchConfig::full(dims(2, 3));
        assert!(DetNetParams::zeros(arch, 0.0).is_err());
        let mut p = DetNetParams::zeros(arch, 0.5).unwrap();
        p.layers_mut()[1].t = -0.005;
        assert!(p.validate().is_err());
        p.layers_mut()[1].t = -0.5;
        assert!(p.validate().is_ok());
    }
}
