use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use detnet_core::channel::build_fixed_channel;
use detnet_core::detnet::{detect, load_checkpoint, save_checkpoint};
use detnet_core::detectors::zero_forcing;
use detnet_core::eval::{compare, write_csv};
use detnet_core::training::gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};
use detnet_core::training::train_on;
use detnet_core::{
    Baseline, BerCurve, ChannelSource, DetNetDetector, DetNetParams, Detector, FixedChannelSpec, Matrix, SimRng,
    SystemDims,
};
use serde::{Deserialize, Serialize};

use crate::config::{DetectorKind, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const CHANNEL_FILE_VERSION: u32 = 1;

/// Largest K accepted by `gradcheck`.
pub const GRADCHECK_MAX_K: usize = 4;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    format_version: u32,
    spec: FixedChannelSpec,
    shape: [usize; 2],
    data: Vec<f64>,
}

/// Writes the fixed channel built from `spec` to `path` and returns it.
pub fn make_channel(spec: &FixedChannelSpec, path: &Path) -> CliResult<Matrix> {
    let h = build_fixed_channel(spec)?;
    let file = ChannelFile {
        format_version: CHANNEL_FILE_VERSION,
        spec: *spec,
        shape: [h.rows(), h.cols()],
        data: h.as_slice().to_vec(),
    };
    let text = serde_json::to_string(&file).expect("channel serializes");
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(h)
}

/// Reads a channel file, checking that it was built from `spec`.
pub fn load_channel(path: &Path, spec: &FixedChannelSpec) -> CliResult<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let file: ChannelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("channel file {}: {e}", path.display())))?;
    if file.format_version != CHANNEL_FILE_VERSION {
        return Err(CliError::Config(format!(
            "channel file {}: unsupported format_version {}",
            path.display(),
            file.format_version
        )));
    }
    if file.spec != *spec {
        return Err(CliError::Config(format!(
            "channel file {} was built from {:?}, config asks for {:?}",
            path.display(),
            file.spec,
            spec
        )));
    }
    let [rows, cols] = file.shape;
    Ok(Matrix::new(rows, cols, file.data)
        .map_err(|e| CliError::Config(format!("channel file {}: {e}", path.display())))?)
}

pub fn channel_source(cfg: &ExperimentConfig) -> CliResult<ChannelSource> {
    match (cfg.fixed_spec(), &cfg.channel_file) {
        (Some(spec), Some(path)) => Ok(ChannelSource::fixed(load_channel(path, spec)?)?),
        _ => Ok(ChannelSource::new(&cfg.channel_mode, cfg.dims)?),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

/// Final-layer and decorrelator BER on a held-out batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldOut {
    pub samples: usize,
    pub detnet_ber: f64,
    pub zf_ber: f64,
}

/// Draws `batch_size` samples at training SNRs from a stream disjoint from
/// the training batches.
pub fn held_out(params: &DetNetParams, source: &ChannelSource, cfg: &ExperimentConfig) -> CliResult<HeldOut> {
    let train = cfg.train_config();
    let layers = params.num_layers();
    let (mut dn, mut zf) = (0u64, 0u64);
    for j in 0..train.batch_size {
        let mut rng = SimRng::derived(train.seed, &[4, j as u64]);
        let s = source.sample(&mut rng, &train.snr)?;
        dn += detect(params, &s.h, &s.y, layers)?.bit_errors(&s.x);
        zf += zero_forcing(&s.h, &s.y)?.bit_errors(&s.x);
    }
    let bits = (train.batch_size * cfg.dims.k_tx) as f64;
    Ok(HeldOut {
        samples: train.batch_size,
        detnet_ber: dn as f64 / bits,
        zf_ber: zf as f64 / bits,
    })
}

/// Trains, streaming the log to `log_path`, then writes the checkpoint.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    log_path: &Path,
    out: &mut dyn Write,
) -> CliResult<(DetNetParams, HeldOut)> {
    let source = channel_source(cfg)?;
    let mut log = create(log_path)?;
    let log_err = |e| CliError::io(format!("writing {}", log_path.display()), e);
    writeln!(log, "iteration,loss,ber,elapsed_ms").map_err(log_err)?;
    let mut write_failure = None;
    let result = train_on(&source, &cfg.train_config(), cfg.arch(), |e| {
        let line = writeln!(log, "{},{},{},{}", e.iteration, e.loss, e.ber, e.elapsed_ms).and_then(|_| log.flush());
        if let Err(err) = line {
            write_failure.get_or_insert(err);
        }
    });
    if let Some(e) = write_failure {
        return Err(log_err(e));
    }
    let (params, report) = result?;
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    save_checkpoint(&params, checkpoint)?;
    let h = held_out(&params, &source, cfg)?;
    let last = report.entries.last().expect("at least one log entry");
    let _ = writeln!(
        out,
        "trained {} iterations (final batch loss {:.4}); held-out BER over {} samples: detnet {:e}, zf {:e}",
        last.iteration, last.loss, h.samples, h.detnet_ber, h.zf_ber
    );
    Ok((params, h))
}

/// Runs every configured detector on shared samples and writes the CSV.
///
/// With `extra_exit` set, each DetNet entry gets a second row named
/// `<name>_exit<N>` that stops after layer `N`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    results: &Path,
    extra_exit: Option<usize>,
    out: &mut dyn Write,
) -> CliResult<Vec<BerCurve>> {
    let source = channel_source(cfg)?;
    let k = cfg.dims.k_tx;
    let wants_net = cfg.detectors.iter().any(|d| d.kind == DetectorKind::Detnet);
    if extra_exit.is_some() && !wants_net {
        return Err(CliError::Usage("--exit-layer needs a detnet detector in the config".into()));
    }
    let params = if wants_net {
        let path = checkpoint.unwrap_or(&cfg.output.checkpoint);
        Some(load_checkpoint(path, Some(&cfg.arch()))?)
    } else {
        None
    };

    let mut owned: Vec<Box<dyn Detector>> = Vec::new();
    for d in &cfg.detectors {
        match d.baseline(k) {
            Some(kind) => owned.push(Box::new(Baseline::new(d.name.clone(), kind))),
            None => {
                let p = params.clone().expect("checkpoint loaded");
                owned.push(Box::new(DetNetDetector::new(d.name.clone(), p.clone(), d.exit_layer)?));
                if let Some(e) = extra_exit {
                    let name = format!("{}_exit{e}", d.name);
                    if cfg.detectors.iter().any(|o| o.name == name) {
                        return Err(CliError::Usage(format!("row name {name} already used in the config")));
                    }
                    owned.push(Box::new(DetNetDetector::new(name, p, Some(e)).map_err(|err| {
                        CliError::Usage(format!("--exit-layer: {err}"))
                    })?));
                }
            }
        }
    }
    let dets: Vec<&dyn Detector> = owned.iter().map(|d| d.as_ref()).collect();
    let curves = compare(&dets, &source, &cfg.sweep)?;
    let mut file = create(results)?;
    write_csv(&mut file, &curves, cfg.output.record_timing)?;
    file.flush()
        .map_err(|e| CliError::io(format!("writing {}", results.display()), e))?;
    for c in &curves {
        for p in &c.points {
            let _ = writeln!(
                out,
                "{:>12} {:>6} dB  ber {:.3e}  ({} / {} bits)",
                c.detector, p.snr_db, p.ber, p.bit_errors, p.bits_tested
            );
        }
    }
    Ok(curves)
}

/// Finite-difference check over `seeds` consecutive seeds starting at
/// `seed`; prints the worst relative error of every parameter block.
pub fn cmd_gradcheck(
    dims: SystemDims,
    layers: usize,
    seed: u64,
    seeds: u64,
    out: &mut dyn Write,
) -> CliResult<Vec<GradCheckReport>> {
    if dims.k_tx > GRADCHECK_MAX_K {
        return Err(CliError::Usage(format!("gradcheck is limited to K <= {GRADCHECK_MAX_K}")));
    }
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let cfg = GradCheckConfig::new(dims, layers);
    let reports = (seed..seed + seeds)
        .map(|s| gradcheck(&cfg, s))
        .collect::<detnet_core::Result<Vec<_>>>()?;
    const TOL: f64 = 1e-5;
    let _ = writeln!(out, "layer block max_rel_error");
    let mut worst = 0.0f64;
    for (i, b) in reports[0].blocks.iter().enumerate() {
        let e = reports.iter().map(|r| r.blocks[i].rel_error).fold(0.0, f64::max);
        worst = worst.max(e);
        let _ = writeln!(out, "{:>5} {:<5} {e:.3e}", b.layer, b.block);
    }
    let directional = reports.iter().map(|r| r.directional_rel_error).fold(0.0, f64::max);
    let _ = writeln!(out, "directional {directional:.3e}");
    if worst < TOL && directional < 1e-6 {
        let _ = writeln!(out, "PASS");
        Ok(reports)
    } else {
        let _ = writeln!(out, "FAIL");
        Err(CliError::GradCheck(format!(
            "max block error {worst:e}, directional {directional:e}"
        )))
    }
}
