#![allow(dead_code)]

use lcm_core::sim::{run_scenario, ScenarioConfig, ScenarioRun};

pub const DRIFT_SWITCH: &str = include_str!("../../../../scenarios/drift_switch.conf");
pub const SNR_DROP: &str = include_str!("../../../../scenarios/snr_drop.conf");
pub const MILD_DRIFT: &str = include_str!("../../../../scenarios/mild_drift.conf");
pub const RETRAIN_FALLBACK: &str = include_str!("../../../../scenarios/retrain_fallback.conf");
pub const OPERATOR_FALLBACK: &str = include_str!("../../../../scenarios/operator_fallback.conf");

pub const ALL_SCENARIOS: [(&str, &str); 5] = [
    ("drift_switch", DRIFT_SWITCH),
    ("snr_drop", SNR_DROP),
    ("mild_drift", MILD_DRIFT),
    ("retrain_fallback", RETRAIN_FALLBACK),
    ("operator_fallback", OPERATOR_FALLBACK),
];

pub fn run(text: &str) -> (ScenarioConfig, ScenarioRun) {
    let cfg = ScenarioConfig::parse(text).expect("scenario parses");
    let run = run_scenario(&cfg).expect("scenario runs");
    (cfg, run)
}

/// Prints one verdict line and returns the verdict.
pub fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {id:02} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
