#![allow(dead_code)]

use std::path::PathBuf;

use toolground::scenario::{ScenarioConfig, ScenarioFields};
use toolground_core::scheduler::Trajectory;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn scenario(rel: &str) -> ScenarioConfig {
    let fields = ScenarioFields::from_file(&fixture(rel)).expect("scenario file");
    ScenarioConfig::try_from(fields).expect("valid scenario")
}

pub fn run(rel: &str) -> Trajectory {
    toolground::run_scenario(&scenario(rel)).expect("scenario runs")
}

/// Deterministic SplitMix64 stream for fuzz loops.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n.max(1)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}
