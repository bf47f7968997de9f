//! Experiment configuration files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "dims": {"k_tx": 8, "n_rx": 16},
//!   "channel_mode": "varying",
//!   "arch": {},
//!   "train": {"batch_size": 500, "num_iterations": 20000, "learning_rate": 0.001,
//!             "snr": {"snr_min_db": 7.0, "snr_max_db": 14.0}, "seed": 1},
//!   "sweep": {"snr_points_db": [8, 10, 12], "max_samples": 125000, "seed": 2},
//!   "detectors": [{"name": "zf", "kind": "zf"}, {"name": "detnet", "kind": "detnet"}],
//!   "output": {"checkpoint": "detnet.json", "train_log": "train.csv", "results": "ber.csv"}
//! }
//! ```
//!
//! Unknown keys are rejected at every level. Relative output paths resolve
//! against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use detnet_core::training::LrDecay;
use detnet_core::{
    AmpConfig, ArchConfig, BaselineKind, ChannelMode, FixedChannelSpec, SnrSpec, SweepSpec, SystemDims, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

/// Network shape; unset fields take `3K` layers, width `8K` and auxiliary
/// width `2K`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_alpha: Option<f64>,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_lr() -> f64 {
    1e-4
}
fn default_log_every() -> usize {
    100
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub num_iterations: usize,
    pub snr: SnrSpec,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<LrDecay>,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

/// One detector row of the results. `num_iterations` and `snr_bias_db_std`
/// apply to `amp` only, `exit_layer` to `detnet` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub name: String,
    pub kind: DetectorKind,
    /// AMP iterations; defaults to `3K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_bias_db_std: Option<f64>,
    /// DetNet exit layer; defaults to the last layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_layer: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Mf,
    Zf,
    Mmse,
    Ml,
    Amp,
    /// The trained network from the checkpoint.
    Detnet,
}

impl DetectorEntry {
    pub fn new(name: impl Into<String>, kind: DetectorKind) -> Self {
        DetectorEntry {
            name: name.into(),
            kind,
            num_iterations: None,
            snr_bias_db_std: None,
            exit_layer: None,
        }
    }

    /// Classical detector settings; `None` for DetNet.
    pub fn baseline(&self, k: usize) -> Option<BaselineKind> {
        Some(match self.kind {
            DetectorKind::Mf => BaselineKind::Mf,
            DetectorKind::Zf => BaselineKind::Zf,
            DetectorKind::Mmse => BaselineKind::Mmse,
            DetectorKind::Ml => BaselineKind::Ml,
            DetectorKind::Amp => BaselineKind::Amp(AmpConfig {
                num_iterations: self.num_iterations.unwrap_or(3 * k),
                snr_bias_db_std: self.snr_bias_db_std.unwrap_or(0.0),
            }),
            DetectorKind::Detnet => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub results: PathBuf,
    /// When false the time column of the results is written as 0.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub dims: SystemDims,
    pub channel_mode: ChannelMode,
    /// Channel matrix written by `make-channel`; used instead of rebuilding
    /// it from the fixed-channel spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_file: Option<PathBuf>,
    #[serde(default)]
    pub arch: ArchSection,
    pub train: TrainSection,
    pub sweep: SweepSpec,
    pub detectors: Vec<DetectorEntry>,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field path.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.output.checkpoint);
        fix(&mut self.output.train_log);
        fix(&mut self.output.results);
        if let Some(p) = &mut self.channel_file {
            fix(p);
        }
    }

    pub fn arch(&self) -> ArchConfig {
        let full = ArchConfig::full(self.dims);
        ArchConfig {
            dims: self.dims,
            num_layers: self.arch.num_layers.unwrap_or(full.num_layers),
            z_size: self.arch.z_size.unwrap_or(full.z_size),
            v_size: self.arch.v_size.unwrap_or(full.v_size),
            residual_alpha: self.arch.residual_alpha.unwrap_or(full.residual_alpha),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            num_iterations: t.num_iterations,
            snr: t.snr,
            learning_rate: t.learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            lr_decay: t.lr_decay,
            seed: t.seed,
            channel_mode: self.channel_mode.clone(),
            log_every: t.log_every,
        }
    }

    /// The fixed-channel spec, if any.
    pub fn fixed_spec(&self) -> Option<&FixedChannelSpec> {
        match &self.channel_mode {
            ChannelMode::Fixed(spec) => Some(spec),
            ChannelMode::Varying => None,
        }
    }

    /// Replaces the training and sweep seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.sweep.seed = seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "at `format_version`: unsupported version {} (expected {CONFIG_VERSION})",
                self.format_version
            )));
        }
        let at = |field: &'static str| move |e: detnet_core::Error| CliError::Config(format!("at `{field}`: {e}"));
        self.dims.validate().map_err(at("dims"))?;
        if let Some(spec) = self.fixed_spec() {
            spec.validate().map_err(at("channel_mode.fixed"))?;
            if spec.dims != self.dims {
                return Err(CliError::Config(format!(
                    "at `channel_mode.fixed.dims`: {:?} differs from top-level dims {:?}",
                    spec.dims, self.dims
                )));
            }
        } else if self.channel_file.is_some() {
            return Err(CliError::Config("at `channel_file`: only valid with a fixed channel".into()));
        }
        self.arch().validate().map_err(at("arch"))?;
        self.train_config().validate().map_err(at("train"))?;
        self.sweep.validate().map_err(at("sweep"))?;
        if self.detectors.is_empty() {
            return Err(CliError::Config("at `detectors`: list is empty".into()));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].iter().any(|o| o.name == d.name) {
                return Err(CliError::Config(format!("at `detectors[{i}].name`: duplicate name `{}`", d.name)));
            }
            if d.name.is_empty() || d.name.contains([',', '\n', '"']) {
                return Err(CliError::Config(format!(
                    "at `detectors[{i}].name`: `{}` is not a valid CSV field",
                    d.name
                )));
            }
            let amp_only = d.num_iterations.is_some() || d.snr_bias_db_std.is_some();
            if amp_only && d.kind != DetectorKind::Amp {
                return Err(CliError::Config(format!(
                    "at `detectors[{i}]`: num_iterations and snr_bias_db_std apply to amp only"
                )));
            }
            if d.exit_layer.is_some() && d.kind != DetectorKind::Detnet {
                return Err(CliError::Config(format!("at `detectors[{i}].exit_layer`: applies to detnet only")));
            }
            if d.kind == DetectorKind::Ml && self.dims.k_tx > detnet_core::detectors::ML_MAX_K {
                return Err(CliError::Config(format!(
                    "at `detectors[{i}]`: ML is limited to K <= {}",
                    detnet_core::detectors::ML_MAX_K
                )));
            }
            if let Some(e) = d.exit_layer {
                if e == 0 || e > self.arch().num_layers {
                    return Err(CliError::Config(format!(
                        "at `detectors[{i}].exit_layer`: {e} outside 1..={}",
                        self.arch().num_layers
                    )));
                }
            }
            if let Some(BaselineKind::Amp(cfg)) = d.baseline(self.dims.k_tx) {
                cfg.validate().map_err(at("detectors"))?;
            }
        }
        Ok(())
    }
}
