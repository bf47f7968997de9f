//! Finite-difference check of [`backward`](super::backward).
//!
//! Parameters are drawn at unit scale (`W ~ N(0, 1/fan_in)`, `b ~ N(0, 0.1²)`,
//! `|t| ~ U[0.5, 1.5]` with a random sign); both ReLU states and all three
//! soft-sign regions occur. An instance is redrawn when any
//! ReLU pre-activation or soft-sign argument lies within `kink_margin` of a
//! kink, or when one of the finite-difference probes changes which side of
//! a kink any of them falls on.

use serde::Serialize;

use super::{backward, loss};
use crate::channel::{ChannelSample, ChannelSource, SnrSpec, SystemDims};
use crate::detnet::{forward, forward_cached, ArchConfig, DetNetParams, LayerParams, BLOCK_NAMES};
use crate::error::{Error, Result};
use crate::numerics::{norm_sq, SimRng};

/// Settings of one gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub dims: SystemDims,
    pub num_layers: usize,
    /// Central-difference step for per-coordinate derivatives.
    pub step: f64,
    /// Step along the random direction.
    pub directional_step: f64,
    pub kink_margin: f64,
    /// Instances drawn before giving up on finding one away from kinks.
    pub max_attempts: usize,
}

impl GradCheckConfig {
    pub fn new(dims: SystemDims, num_layers: usize) -> Self {
        GradCheckConfig {
            dims,
            num_layers,
            step: 1e-5,
            directional_step: 1e-6,
            kink_margin: 1e-4,
            max_attempts: 200,
        }
    }

    /// Full widths for `dims` with `num_layers` layers.
    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            num_layers: self.num_layers,
            ..ArchConfig::full(self.dims)
        }
    }
}

impl Default for GradCheckConfig {
    /// K = 3, N = 6, three layers.
    fn default() -> Self {
        Self::new(SystemDims { k_tx: 3, n_rx: 6 }, 3)
    }
}

/// Agreement for one parameter block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCheck {
    /// 1-based layer index.
    pub layer: usize,
    pub block: &'static str,
    /// `‖g - g_fd‖ / max(‖g‖, ‖g_fd‖)`, zero when both vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    /// Rejected instances before the accepted one.
    pub redraws: usize,
    pub loss: f64,
    pub blocks: Vec<BlockCheck>,
    /// Relative error of `gᵀd` against the central difference along `d`.
    pub directional_rel_error: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }
}

/// One parameter set and sample for a gradient check.
#[derive(Clone, Debug)]
pub struct Instance {
    pub params: DetNetParams,
    pub sample: ChannelSample,
}

/// Draws parameters and a varying-channel sample at an SNR in `U(5, 15)` dB.
pub fn random_instance(arch: ArchConfig, rng: &mut SimRng) -> Result<Instance> {
    let mut params = DetNetParams::zeros(arch, 1.0)?;
    for layer in params.layers_mut() {
        for w in [&mut layer.w1, &mut layer.w2, &mut layer.w3] {
            let std = 1.0 / (w.cols() as f64).sqrt();
            w.as_mut_slice().iter_mut().for_each(|v| *v = std * rng.normal());
        }
        for b in [&mut layer.b1, &mut layer.b2, &mut layer.b3] {
            b.iter_mut().for_each(|v| *v = 0.1 * rng.normal());
        }
        let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
        layer.t = sign * rng.uniform(0.5, 1.5);
    }
    let source = ChannelSource::new(&crate::channel::ChannelMode::Varying, arch.dims)?;
    let sample = source.sample(rng, &SnrSpec { snr_min_db: 5.0, snr_max_db: 15.0 })?;
    Ok(Instance { params, sample })
}

/// Signed distances of every ReLU pre-activation and soft-sign argument to
/// their kinks.
fn kink_offsets(params: &DetNetParams, s: &ChannelSample) -> Vec<f64> {
    let hty = s.h.tmatvec(&s.y).expect("sample shapes");
    let gram = s.h.gram();
    let caches = forward_cached(params, &hty, &gram, params.num_layers());
    let mut out = Vec::new();
    for (layer, cache) in params.layers().iter().zip(&caches) {
        let mut pre = vec![0.0; layer.b1.len()];
        layer.w1.matvec_into(&cache.input, &mut pre);
        out.extend(pre.iter().zip(layer.b1.iter()).map(|(a, b)| a + b));
        let abs_t = layer.t.abs();
        for &u in &cache.u {
            out.push(u - abs_t);
            out.push(u + abs_t);
        }
    }
    out
}

fn same_side(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
}

fn eval_loss(params: &DetNetParams, s: &ChannelSample) -> Result<f64> {
    loss(&forward(params, &s.h, &s.y)?, &s.x, &s.h, &s.y)
}

fn perturbed(params: &DetNetParams, layer: usize, block: usize, index: usize, delta: f64) -> DetNetParams {
    let mut p = params.clone();
    p.layers_mut()[layer].blocks_mut()[block][index] += delta;
    p
}

fn along(params: &DetNetParams, dir: &[LayerParams], eps: f64) -> DetNetParams {
    let mut p = params.clone();
    for (l, d) in p.layers_mut().iter_mut().zip(dir) {
        for (a, b) in l.blocks_mut().into_iter().zip(d.blocks()) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += eps * b);
        }
    }
    p
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm_sq(a).sqrt().max(norm_sq(b).sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares the analytic gradient with finite differences, returning `None`
/// when a probe crosses a kink.
fn check_instance(cfg: &GradCheckConfig, inst: &Instance, rng: &mut SimRng) -> Result<Option<(f64, Vec<BlockCheck>, f64)>> {
    let Instance { params, sample } = inst;
    let base = kink_offsets(params, sample);
    if base.iter().any(|v| v.abs() < cfg.kink_margin) {
        return Ok(None);
    }
    let (loss0, grads) = backward(params, &sample.h, &sample.y, &sample.x)?;
    let mut blocks = Vec::new();
    for (l, (layer, grad)) in params.layers().iter().zip(&grads.layers).enumerate() {
        for (b, (pblock, gblock)) in layer.blocks().iter().zip(grad.blocks()).enumerate() {
            let mut fd = vec![0.0; pblock.len()];
            for (i, slot) in fd.iter_mut().enumerate() {
                let plus = perturbed(params, l, b, i, cfg.step);
                let minus = perturbed(params, l, b, i, -cfg.step);
                if !same_side(&base, &kink_offsets(&plus, sample)) || !same_side(&base, &kink_offsets(&minus, sample)) {
                    return Ok(None);
                }
                *slot = (eval_loss(&plus, sample)? - eval_loss(&minus, sample)?) / (2.0 * cfg.step);
            }
            blocks.push(BlockCheck {
                layer: l + 1,
                block: BLOCK_NAMES[b],
                rel_error: rel_error(gblock, &fd),
                analytic_norm: norm_sq(gblock).sqrt(),
            });
        }
    }

    let mut dir: Vec<LayerParams> = params.layers().to_vec();
    let mut total = 0.0;
    for l in &mut dir {
        for block in l.blocks_mut() {
            block.iter_mut().for_each(|v| *v = rng.normal());
            total += norm_sq(block);
        }
    }
    let inv = 1.0 / total.sqrt();
    let mut analytic = 0.0;
    for (d, g) in dir.iter_mut().zip(&grads.layers) {
        for (db, gb) in d.blocks_mut().into_iter().zip(g.blocks()) {
            db.iter_mut().zip(gb).for_each(|(dv, gv)| {
                *dv *= inv;
                analytic += *dv * gv;
            });
        }
    }
    let plus = along(params, &dir, cfg.directional_step);
    let minus = along(params, &dir, -cfg.directional_step);
    if !same_side(&base, &kink_offsets(&plus, sample)) || !same_side(&base, &kink_offsets(&minus, sample)) {
        return Ok(None);
    }
    let fd = (eval_loss(&plus, sample)? - eval_loss(&minus, sample)?) / (2.0 * cfg.directional_step);
    let scale = analytic.abs().max(fd.abs());
    let directional = if scale == 0.0 { 0.0 } else { (analytic - fd).abs() / scale };
    Ok(Some((loss0, blocks, directional)))
}

/// Runs the check on the first instance from `seed` that stays away from
/// every kink.
pub fn gradcheck(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    let arch = cfg.arch();
    arch.validate()?;
    let mut rng = SimRng::from_seed(seed);
    for redraws in 0..cfg.max_attempts {
        let inst = random_instance(arch, &mut rng)?;
        if let Some((loss, blocks, directional_rel_error)) = check_instance(cfg, &inst, &mut rng)? {
            return Ok(GradCheckReport {
                seed,
                redraws,
                loss,
                blocks,
                directional_rel_error,
            });
        }
    }
    Err(Error::Parameter(format!(
        "no instance away from kinks within {} draws",
        cfg.max_attempts
    )))
}
