//! Shared inputs for the criterion benchmarks.

use driftcal::signal::{gen_awgn_event, simulate, ChainOutput};
use driftcal::{ChainConfig, FirFilter, SignalSeries};

pub fn event(n: usize) -> SignalSeries {
    gen_awgn_event(n, 1.0, 7).expect("valid event parameters")
}

pub fn default_filter() -> FirFilter {
    ChainConfig::calibrated().filter.build().expect("default filter")
}

pub fn chain(num_samples: usize) -> ChainOutput {
    let cfg = ChainConfig {
        num_samples,
        seed: 11,
        ..ChainConfig::drifted()
    };
    simulate(&cfg).expect("valid chain")
}
