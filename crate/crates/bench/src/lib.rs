//! Fixtures for the benchmarks.

use std::path::PathBuf;

use ests_core::traffic::INTERVALS_PER_DAY;
use ests_core::Scenario;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// The single-sector offload scenario.
pub fn s1() -> Scenario {
    Scenario::load(fixture_dir().join("s1_scenario.json")).expect("S1 fixture")
}

/// The 41-sector diurnal scenario cut to `days`.
pub fn s2_days(days: usize) -> Scenario {
    let mut sc = Scenario::load(fixture_dir().join("s2_scenario.json")).expect("S2 fixture");
    sc.duration_intervals = (days * INTERVALS_PER_DAY).min(sc.trace.len());
    sc
}
