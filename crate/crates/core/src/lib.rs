//! Deep MIMO detection.
//!
//! BPSK symbols `x ∈ {±1}^K` cross a real channel `y = Hx + w`; the
//! receiver knows `H` and recovers `x`. This crate provides:
//!
//! * channel models (a fixed Toeplitz-correlated channel and i.i.d. Gaussian
//!   channels) and SNR-controlled sampling,
//! * classical detectors: matched filter, decorrelator, MMSE, exhaustive ML
//!   and approximate message passing,
//! * DetNet, a projected-gradient-descent iteration unfolded into trainable
//!   layers, with hand-written reverse-mode gradients and Adam training,
//! * a Monte-Carlo BER harness with common random numbers across detectors.

pub mod channel;
pub mod detectors;
pub mod detnet;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod training;

pub use channel::{
    build_fixed_channel, ChannelMode, ChannelSample, ChannelSource, FixedChannelSpec, SnrSpec, SystemDims,
};
pub use detectors::{AmpConfig, Baseline, BaselineKind, DetectionResult, Detector, GroundTruth};
pub use detnet::{ArchConfig, DetNetDetector, DetNetParams, LayerParams, LayerTrace};
pub use error::{Error, Result};
pub use eval::{compare, run_sweep, write_csv, BerCurve, BerPoint, SweepSpec};
pub use numerics::{Matrix, SimRng, Vector};
pub use training::{train, train_on, GradientSet, TrainConfig, TrainLogEntry, TrainReport};
