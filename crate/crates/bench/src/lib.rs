//! Shared fixtures for the benchmarks.

use detnet_core::{ArchConfig, ChannelMode, ChannelSample, ChannelSource, DetNetParams, SimRng, SystemDims};

/// `n` varying-channel samples at `snr_db` for a `k`×`2k` system.
pub fn samples(k: usize, n: usize, snr_db: f64) -> Vec<ChannelSample> {
    let dims = SystemDims::new(k, 2 * k).expect("valid dims");
    let source = ChannelSource::new(&ChannelMode::Varying, dims).expect("varying source");
    let mut rng = SimRng::from_seed(1);
    (0..n).map(|_| source.sample_at(&mut rng, snr_db).expect("sample")).collect()
}

/// Freshly initialized full-size network for `k` transmitters.
pub fn network(k: usize) -> DetNetParams {
    let arch = ArchConfig::full(SystemDims::new(k, 2 * k).expect("valid dims"));
    DetNetParams::init(arch, &mut SimRng::from_seed(2)).expect("init")
}
