//! Loss, reverse-mode gradients and Adam training for DetNet.
//!
//! The loss weights every layer's estimate by `log(k)` and normalizes by the
//! decorrelator's error on the same sample:
//!
//! ```text
//! loss = Σ_k log(k) ‖x - x̂_k‖² / ‖x - x̃‖²,   x̃ = (HᵀH)⁻¹Hᵀy
//! ```
//!
//! so the first layer's own estimate carries no weight.

mod adam;
pub mod gradcheck;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update, AdamSettings, AdamState};

use crate::channel::{ChannelMode, ChannelSource, SnrSpec};
use crate::detectors::{decorrelate, hard_sign};
use crate::detnet::{forward_cached, sufficient_statistics, ArchConfig, DetNetParams, LayerParams, LayerTrace};
use crate::error::{shape_err, Error, Result};
use crate::numerics::{dist_sq, solve_spd, Matrix, SimRng};

/// Floor on the decorrelator error `‖x - x̃‖²`.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

/// Samples per gradient accumulation chunk. Chunks are summed in a fixed
/// pairwise order, so results do not depend on the thread count.
pub const TRAIN_CHUNK: usize = 50;

/// Step-wise exponential learning-rate decay: the rate is multiplied by
/// `factor` every `every` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub factor: f64,
    pub every: usize,
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub num_iterations: usize,
    pub snr: SnrSpec,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_decay: Option<LrDecay>,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    /// Report every this many iterations (the last iteration is always
    /// reported).
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(channel_mode: ChannelMode, snr: SnrSpec, seed: u64) -> Self {
        let adam = AdamSettings::default();
        TrainConfig {
            batch_size: 5000,
            num_iterations: 50_000,
            snr,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            lr_decay: None,
            seed,
            channel_mode,
            log_every: 100,
        }
    }

    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Learning rate in force at 1-based iteration `step`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        match self.lr_decay {
            Some(d) if d.every > 0 => self.learning_rate * d.factor.powi(((step - 1) / d.every) as i32),
            _ => self.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.num_iterations == 0 || self.log_every == 0 {
            return Err(Error::Parameter(
                "batch_size, num_iterations and log_every must be at least 1".into(),
            ));
        }
        self.snr.validate()?;
        self.adam().validate()?;
        if let Some(d) = self.lr_decay {
            if !(d.factor > 0.0 && d.factor <= 1.0) || d.every == 0 {
                return Err(Error::Parameter(format!("invalid learning-rate decay {d:?}")));
            }
        }
        Ok(())
    }
}

/// `∂loss/∂θ`, laid out exactly like [`DetNetParams`]; the `t` field of each
/// layer holds the derivative with respect to that layer's threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerParams>,
}

impl GradientSet {
    pub fn zeros(arch: &ArchConfig) -> Self {
        GradientSet {
            layers: vec![LayerParams::zeros(arch); arch.num_layers],
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.blocks_mut().into_iter().zip(b.blocks()) {
                x.iter_mut().zip(y).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for layer in &mut self.layers {
            for block in layer.blocks_mut() {
                block.iter_mut().for_each(|v| *v *= alpha);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.blocks().iter().all(|b| b.iter().all(|v| v.is_finite())))
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.blocks())
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// `log(k)` weight of layer `k` (1-based).
#[inline]
pub fn layer_weight(k: usize) -> f64 {
    (k as f64).ln()
}

/// `max(‖x - x̃‖², NORMALIZER_FLOOR)` for the decorrelator estimate `x̃`.
pub fn decorrelator_normalizer(h: &Matrix, y: &[f64], x_true: &[f64]) -> Result<f64> {
    let x_tilde = decorrelate(h, y)?;
    if x_tilde.len() != x_true.len() {
        return Err(shape_err("symbol vector length differs from channel columns"));
    }
    Ok(dist_sq(x_true, &x_tilde).max(NORMALIZER_FLOOR))
}

/// Layer-weighted, decorrelator-normalized loss of a forward trace.
pub fn loss(trace: &LayerTrace, x_true: &[f64], h: &Matrix, y: &[f64]) -> Result<f64> {
    let denom = decorrelator_normalizer(h, y, x_true)?;
    let mut total = 0.0;
    for (i, out) in trace.layers.iter().enumerate() {
        if out.x_hat.len() != x_true.len() {
            return Err(shape_err("trace estimate length differs from symbol vector"));
        }
        total += layer_weight(i + 1) * dist_sq(x_true, &out.x_hat);
    }
    Ok(total / denom)
}

/// Loss and bit errors of one sample, with gradients added into `grads`.
pub(crate) struct SampleOutcome {
    pub loss: f64,
    pub bit_errors: u64,
}

/// Forward and reverse pass for one sample given its sufficient statistics
/// and loss normalizer.
///
/// Kink conventions: `ρ'(0) = 0`; `ψ_t' = 1/|t|` on the closed linear region
/// `|u| ≤ |t|` and 0 outside it.
pub(crate) fn accumulate_sample(
    params: &DetNetParams,
    hty: &[f64],
    gram: &Matrix,
    x_true: &[f64],
    denom: f64,
    grads: &mut GradientSet,
) -> Result<SampleOutcome> {
    let arch = params.arch();
    let k = arch.dims.k_tx;
    let vs = arch.v_size;
    let alpha = arch.residual_alpha;
    let num_layers = params.num_layers();
    let caches = forward_cached(params, hty, gram, num_layers);

    let mut loss = 0.0;
    let mut gx = vec![0.0; k];
    let mut gv = vec![0.0; vs];
    let mut gu = vec![0.0; k];
    let mut gq = vec![0.0; vs];
    let mut gz = vec![0.0; arch.z_size];
    let mut gin = vec![0.0; arch.input_size()];
    let mut gram_term = vec![0.0; k];

    for l in (0..num_layers).rev() {
        let cache = &caches[l];
        let layer = &params.layers()[l];
        let grad = &mut grads.layers[l];

        let w = layer_weight(l + 1) / denom;
        if w != 0.0 {
            loss += w * dist_sq(&cache.x_next, x_true);
            for i in 0..k {
                gx[i] += 2.0 * w * (cache.x_next[i] - x_true[i]);
            }
        }

        let abs_t = layer.t.abs();
        let sign_t = if layer.t < 0.0 { -1.0 } else { 1.0 };
        let mut gt = 0.0;
        for i in 0..k {
            let u = cache.u[i];
            let gp = alpha * gx[i];
            if u.abs() <= abs_t {
                gu[i] = gp / abs_t;
                gt -= gp * u / (abs_t * abs_t) * sign_t;
            } else {
                gu[i] = 0.0;
            }
        }
        for i in 0..vs {
            gq[i] = alpha * gv[i];
        }

        grad.t += gt;
        grad.w2.rank1_update(1.0, &gu, &cache.z);
        grad.w3.rank1_update(1.0, &gq, &cache.z);
        for i in 0..k {
            grad.b2[i] += gu[i];
        }
        for i in 0..vs {
            grad.b3[i] += gq[i];
        }

        gz.iter_mut().for_each(|v| *v = 0.0);
        layer.w2.tmatvec_acc(&gu, &mut gz);
        layer.w3.tmatvec_acc(&gq, &mut gz);
        for (g, &z) in gz.iter_mut().zip(&cache.z) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        grad.w1.rank1_update(1.0, &gz, &cache.input);
        for (b, g) in grad.b1.iter_mut().zip(&gz) {
            *b += g;
        }

        gin.iter_mut().for_each(|v| *v = 0.0);
        layer.w1.tmatvec_acc(&gz, &mut gin);
        gram.matvec_into(&gin[2 * k..3 * k], &mut gram_term);
        for i in 0..k {
            gx[i] = (1.0 - alpha) * gx[i] + gin[k + i] + gram_term[i];
        }
        for i in 0..vs {
            gv[i] = (1.0 - alpha) * gv[i] + gin[3 * k + i];
        }
        if !gt.is_finite() || gx.iter().chain(&gv).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: l + 1,
                what: "gradient".into(),
            });
        }
    }

    let last = &caches[num_layers - 1].x_next;
    let bit_errors = last
        .iter()
        .zip(x_true)
        .filter(|(a, b)| hard_sign(**a) != **b)
        .count() as u64;
    Ok(SampleOutcome { loss, bit_errors })
}

/// Loss and exact gradient with respect to every parameter for one sample.
pub fn backward(params: &DetNetParams, h: &Matrix, y: &[f64], x_true: &[f64]) -> Result<(f64, GradientSet)> {
    if x_true.len() != params.arch().dims.k_tx {
        return Err(shape_err("symbol vector length differs from network K"));
    }
    let (hty, gram) = sufficient_statistics(params, h, y)?;
    let denom = decorrelator_normalizer(h, y, x_true)?;
    let mut grads = GradientSet::zeros(params.arch());
    let out = accumulate_sample(params, &hty, &gram, x_true, denom, &mut grads)?;
    Ok((out.loss, grads))
}

/// One logged training step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    /// Mean loss over the batch.
    pub loss: f64,
    /// Final-layer bit error rate over the batch.
    pub ber: f64,
    pub elapsed_ms: u128,
}

/// Log of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainReport {
    /// Entries without wall-clock times, for determinism comparisons.
    pub fn numeric(&self) -> Vec<(usize, f64, f64)> {
        self.entries.iter().map(|e| (e.iteration, e.loss, e.ber)).collect()
    }
}

struct ChunkResult {
    grads: GradientSet,
    loss: f64,
    bit_errors: u64,
}

fn reduce_pairwise(mut parts: Vec<ChunkResult>) -> ChunkResult {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.grads.add_assign(&b.grads);
                a.loss += b.loss;
                a.bit_errors += b.bit_errors;
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Mean loss, BER and mean gradient over one batch drawn at `iteration`.
///
/// Sample `j` of iteration `i` comes from the stream
/// `derive_seed(seed, [1, i, j])`.
fn batch_gradient(
    params: &DetNetParams,
    source: &ChannelSource,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<ChunkResult> {
    let num_chunks = cfg.batch_size.div_ceil(TRAIN_CHUNK);
    let parts = (0..num_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ChunkResult {
                grads: GradientSet::zeros(params.arch()),
                loss: 0.0,
                bit_errors: 0,
            };
            let end = ((c + 1) * TRAIN_CHUNK).min(cfg.batch_size);
            for j in c * TRAIN_CHUNK..end {
                let mut rng = SimRng::derived(cfg.seed, &[1, iteration as u64, j as u64]);
                let s = source.sample(&mut rng, &cfg.snr)?;
                let gram = s.h.gram();
                let hty = s.h.tmatvec(&s.y)?;
                let x_tilde = solve_spd(&gram, &hty)?;
                let denom = dist_sq(&s.x, &x_tilde).max(NORMALIZER_FLOOR);
                let out = accumulate_sample(params, &hty, &gram, &s.x, denom, &mut acc.grads)?;
                acc.loss += out.loss;
                acc.bit_errors += out.bit_errors;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = reduce_pairwise(parts);
    let inv = 1.0 / cfg.batch_size as f64;
    total.grads.scale(inv);
    total.loss *= inv;
    Ok(total)
}

/// Trains from the default initialization; see [`train_on`].
pub fn train(cfg: &TrainConfig, arch: ArchConfig) -> Result<(DetNetParams, TrainReport)> {
    let source = ChannelSource::new(&cfg.channel_mode, arch.dims)?;
    train_on(&source, cfg, arch, |_| {})
}

/// Runs `cfg.num_iterations` Adam steps on fresh batches from `source`.
///
/// Initial weights come from the stream `derive_seed(cfg.seed, [0])`.
/// `on_log` sees each report entry as it is produced, so a caller keeps the
/// log up to the failing iteration when training aborts.
pub fn train_on(
    source: &ChannelSource,
    cfg: &TrainConfig,
    arch: ArchConfig,
    mut on_log: impl FnMut(&TrainLogEntry),
) -> Result<(DetNetParams, TrainReport)> {
    cfg.validate()?;
    arch.validate()?;
    if source.dims() != arch.dims {
        return Err(shape_err(format!(
            "channel dims {:?} differ from network dims {:?}",
            source.dims(),
            arch.dims
        )));
    }
    let mut params = DetNetParams::init(arch, &mut SimRng::derived(cfg.seed, &[0]))?;
    let mut state = AdamState::new(&params);
    let mut report = TrainReport::default();
    let start = Instant::now();
    let bits = (cfg.batch_size * arch.dims.k_tx) as f64;

    for step in 1..=cfg.num_iterations {
        let batch = batch_gradient(&params, source, cfg, step).map_err(|e| Error::TrainingAborted {
            iteration: step,
            reason: e.to_string(),
        })?;
        if !batch.loss.is_finite() || !batch.grads.is_finite() {
            return Err(Error::TrainingAborted {
                iteration: step,
                reason: format!("non-finite loss {}", batch.loss),
            });
        }
        let adam = AdamSettings {
            learning_rate: cfg.learning_rate_at(step),
            ..cfg.adam()
        };
        adam_step(&mut params, &batch.grads, &mut state, &adam, step)?;

        if step % cfg.log_every == 0 || step == cfg.num_iterations {
            let entry = TrainLogEntry {
                iteration: step,
                loss: batch.loss,
                ber: batch.bit_errors as f64 / bits,
                elapsed_ms: start.elapsed().as_millis(),
            };
            on_log(&entry);
            report.entries.push(entry);
        }
    }
    Ok((params, report))
}
