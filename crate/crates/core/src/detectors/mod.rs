//! Classical baseline detectors and the detector interface used by the BER
//! harness.

mod amp;
mod linear;
mod ml;

use serde::{Deserialize, Serialize};

pub use amp::{amp, AmpConfig};
pub use linear::{matched_filter, mmse, zero_forcing};
pub(crate) use linear::decorrelate;
pub use ml::{ml_bruteforce, ml_objective, ML_MAX_K};

use crate::channel::ChannelSample;
use crate::error::Result;
use crate::numerics::{SimRng, Vector};

/// Hard decision with the fixed tie-break `sign(0) = +1`.
#[inline]
pub fn hard_sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Output of a detector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    /// ±1 decisions, `sign(soft)` entry-wise.
    pub x_hat: Vector,
    /// Pre-decision values.
    pub soft: Vector,
    /// Iterations run; 0 for closed-form detectors.
    pub iterations_used: usize,
}

impl DetectionResult {
    pub fn from_soft(soft: Vector, iterations_used: usize) -> Self {
        let x_hat = soft.iter().map(|&v| hard_sign(v)).collect();
        DetectionResult {
            x_hat,
            soft,
            iterations_used,
        }
    }

    /// Number of positions where the decision differs from `x`.
    pub fn bit_errors(&self, x: &[f64]) -> u64 {
        self.x_hat.iter().zip(x).filter(|(a, b)| a != b).count() as u64
    }
}

/// Anything the BER harness can evaluate.
///
/// `rng` is a per-sample stream owned by the harness; deterministic detectors
/// ignore it.
pub trait Detector: Sync {
    fn name(&self) -> &str;
    fn detect(&self, sample: &ChannelSample, rng: &mut SimRng) -> Result<DetectionResult>;
}

/// Which classical detector to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    Mf,
    Zf,
    Mmse,
    Ml,
    Amp(AmpConfig),
}

/// A named classical detector.
#[derive(Clone, Debug)]
pub struct Baseline {
    name: String,
    kind: BaselineKind,
}

impl Baseline {
    pub fn new(name: impl Into<String>, kind: BaselineKind) -> Self {
        Baseline {
            name: name.into(),
            kind,
        }
    }

    pub fn kind(&self) -> &BaselineKind {
        &self.kind
    }
}

impl Detector for Baseline {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&self, s: &ChannelSample, rng: &mut SimRng) -> Result<DetectionResult> {
        match &self.kind {
            BaselineKind::Mf => matched_filter(&s.h, &s.y),
            BaselineKind::Zf => zero_forcing(&s.h, &s.y),
            BaselineKind::Mmse => mmse(&s.h, &s.y, s.sigma2),
            BaselineKind::Ml => ml_bruteforce(&s.h, &s.y),
            BaselineKind::Amp(cfg) => amp(&s.h, &s.y, s.sigma2, cfg, rng),
        }
    }
}

/// Passes the transmitted symbols through; BER 0 by construction.
#[derive(Clone, Debug, Default)]
pub struct GroundTruth;

impl Detector for GroundTruth {
    fn name(&self) -> &str {
        "truth"
    }

    fn detect(&self, s: &ChannelSample, _rng: &mut SimRng) -> Result<DetectionResult> {
        Ok(DetectionResult::from_soft(s.x.clone(), 0))
    }
}
