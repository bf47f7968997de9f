//! Monte-Carlo bit error rate over SNR sweeps.
//!
//! Sample `j` at SNR point `i` is drawn from `derive_seed(seed, [2, i, j])`
//! and every detector sees that same sample. The stream a detector may
//! consume for sample `j` is `derive_seed(seed, [3, i, j, label_of(name)])`.
//! A detector stops at the first sample after which it has accumulated
//! `min_bit_errors` errors, or at `max_samples`. Counts are therefore a pure
//! function of the seed, whatever the thread count or block size.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSample, ChannelSource};
use crate::detectors::Detector;
use crate::error::{Error, Result};
use crate::numerics::{label_of, SimRng};

/// Exact header of the results CSV.
pub const CSV_HEADER: &str = "detector,snr_db,bits_tested,bit_errors,ber,mean_detect_time_us";

/// Samples generated per round before the stopping rule is checked.
pub const EVAL_BLOCK: usize = 1024;

fn default_min_bit_errors() -> u64 {
    100
}

/// SNR points and stopping rule of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub snr_points_db: Vec<f64>,
    #[serde(default = "default_min_bit_errors")]
    pub min_bit_errors: u64,
    pub max_samples: u64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_points_db.is_empty() {
            return Err(Error::Parameter("snr_points_db is empty".into()));
        }
        if self.snr_points_db.iter().any(|v| !v.is_finite()) || self.snr_points_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(format!(
                "snr_points_db must be finite and strictly increasing, got {:?}",
                self.snr_points_db
            )));
        }
        if self.min_bit_errors == 0 || self.max_samples == 0 {
            return Err(Error::Parameter("min_bit_errors and max_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// One point of a BER curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits_tested: u64,
    pub bit_errors: u64,
    /// `bit_errors / bits_tested`.
    pub ber: f64,
    /// Mean wall time of one `detect` call, in seconds.
    pub mean_detect_time: f64,
}

impl BerPoint {
    /// Binomial standard error `sqrt(p(1-p)/n)` of the estimate.
    pub fn std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits_tested as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub detector: String,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn at(&self, snr_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.snr_db == snr_db)
    }
}

/// Outcome of one detector on one sample.
struct Outcome {
    errors: u64,
    nanos: u128,
}

struct Tally {
    samples: u64,
    errors: u64,
    nanos: u128,
    done: bool,
}

fn run_one(
    det: &dyn Detector,
    label: u64,
    s: &ChannelSample,
    seed: u64,
    point: usize,
    j: u64,
) -> Result<Outcome> {
    let mut rng = SimRng::derived(seed, &[3, point as u64, j, label]);
    let start = Instant::now();
    let r = det.detect(s, &mut rng);
    let nanos = start.elapsed().as_nanos();
    let r = r.map_err(|e| Error::Detector {
        detector: det.name().to_string(),
        sample: j,
        snr_db: s.snr_db,
        source: Box::new(e),
    })?;
    Ok(Outcome {
        errors: r.bit_errors(&s.x),
        nanos,
    })
}

/// BER curves of every detector on shared samples.
pub fn compare(detectors: &[&dyn Detector], source: &ChannelSource, spec: &SweepSpec) -> Result<Vec<BerCurve>> {
    spec.validate()?;
    if detectors.is_empty() {
        return Err(Error::Parameter("no detectors to compare".into()));
    }
    let k = source.dims().k_tx as u64;
    let labels: Vec<u64> = detectors.iter().map(|d| label_of(d.name())).collect();
    let mut curves: Vec<BerCurve> = detectors
        .iter()
        .map(|d| BerCurve {
            detector: d.name().to_string(),
            points: Vec::with_capacity(spec.snr_points_db.len()),
        })
        .collect();

    for (i, &snr_db) in spec.snr_points_db.iter().enumerate() {
        let mut tallies: Vec<Tally> = detectors
            .iter()
            .map(|_| Tally {
                samples: 0,
                errors: 0,
                nanos: 0,
                done: false,
            })
            .collect();
        let mut next = 0u64;
        while tallies.iter().any(|t| !t.done) {
            let end = (next + EVAL_BLOCK as u64).min(spec.max_samples);
            let samples = (next..end)
                .into_par_iter()
                .map(|j| source.sample_at(&mut SimRng::derived(spec.seed, &[2, i as u64, j]), snr_db))
                .collect::<Result<Vec<_>>>()?;
            for (d, det) in detectors.iter().enumerate() {
                if tallies[d].done {
                    continue;
                }
                let outcomes = samples
                    .par_iter()
                    .enumerate()
                    .map(|(o, s)| run_one(*det, labels[d], s, spec.seed, i, next + o as u64))
                    .collect::<Result<Vec<_>>>()?;
                let t = &mut tallies[d];
                for o in outcomes {
                    t.samples += 1;
                    t.errors += o.errors;
                    t.nanos += o.nanos;
                    if t.errors >= spec.min_bit_errors || t.samples >= spec.max_samples {
                        t.done = true;
                        break;
                    }
                }
            }
            next = end;
        }
        for (curve, t) in curves.iter_mut().zip(&tallies) {
            let bits = t.samples * k;
            curve.points.push(BerPoint {
                snr_db,
                bits_tested: bits,
                bit_errors: t.errors,
                ber: t.errors as f64 / bits as f64,
                mean_detect_time: t.nanos as f64 * 1e-9 / t.samples as f64,
            });
        }
    }
    Ok(curves)
}

/// BER curve of one detector; identical to its row in [`compare`].
pub fn run_sweep(detector: &dyn Detector, source: &ChannelSource, spec: &SweepSpec) -> Result<BerCurve> {
    Ok(compare(&[detector], source, spec)?.remove(0))
}

/// Writes curves as CSV under [`CSV_HEADER`]. With `record_timing` false the
/// time column is written as 0.
pub fn write_csv<W: Write>(mut out: W, curves: &[BerCurve], record_timing: bool) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for c in curves {
        for p in &c.points {
            let us = if record_timing { p.mean_detect_time * 1e6 } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.detector, p.snr_db, p.bits_tested, p.bit_errors, p.ber, us
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelMode, SystemDims};
    use crate::detectors::{Baseline, BaselineKind, GroundTruth};

    fn spec(points: Vec<f64>) -> SweepSpec {
        SweepSpec {
            snr_points_db: points,
            min_bit_errors: 50,
            max_samples: 3000,
            seed: 4,
        }
    }

    #[test]
    fn validation() {
        assert!(spec(vec![]).validate().is_err());
        assert!(spec(vec![3.0, 3.0]).validate().is_err());
        assert!(spec(vec![4.0, 3.0]).validate().is_err());
        let mut s = spec(vec![1.0]);
        s.min_bit_errors = 0;
        assert!(s.validate().is_err());
        assert!(spec(vec![1.0, 2.0]).validate().is_ok());
    }

    #[test]
    fn truth_has_zero_ber() {
        let source = ChannelSource::new(&ChannelMode::Varying, SystemDims::new(4, 8).unwrap()).unwrap();
        let c = run_sweep(&GroundTruth, &source, &spec(vec![0.0, 10.0])).unwrap();
        for p in &c.points {
            assert_eq!(p.bit_errors, 0);
            assert_eq!(p.bits_tested, 3000 * 4);
            assert_eq!(p.ber, 0.0);
        }
    }

    #[test]
    fn stopping_rule_is_per_detector() {
        let source = ChannelSource::new(&ChannelMode::Varying, SystemDims::new(4, 8).unwrap()).unwrap();
        let mf = Baseline::new("mf", BaselineKind::Mf);
        let curves = compare(&[&mf, &GroundTruth], &source, &spec(vec![2.0])).unwrap();
        let p = &curves[0].points[0];
        assert!(p.bit_errors >= 50 && p.bits_tested < 3000 * 4);
        // The last sample tested pushed the count over the threshold.
        assert!(p.bit_errors - 50 < 4);
        assert_eq!(curves[1].points[0].bits_tested, 3000 * 4);
        assert_eq!(p.ber, p.bit_errors as f64 / p.bits_tested as f64);
    }

    #[test]
    fn csv_layout() {
        let curves = vec![BerCurve {
            detector: "zf".into(),
            points: vec![BerPoint {
                snr_db: 12.0,
                bits_tested: 800,
                bit_errors: 2,
                ber: 0.0025,
                mean_detect_time: 1.5e-6,
            }],
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &curves, false).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CSV_HEADER}\nzf,12,800,2,0.0025,0\n"));
    }
}
