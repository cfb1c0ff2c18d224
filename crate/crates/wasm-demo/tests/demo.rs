use lcm_wasm_demo::{autoencoder_point, drift_run, monitoring_sweep, DEFAULT_SCENARIO};

#[test]
fn drift_run_shows_alarm_and_recovery() {
    let run = drift_run(DEFAULT_SCENARIO, 20).unwrap();
    assert_eq!(run.trace.len() as u64, run.num_slots / 20);
    assert!(run.events.iter().any(|e| e.kind == "DriftAlarm"));
    assert!(run.events.iter().any(|e| e.kind == "ActionIssued" && e.detail.contains("action=Switch")));
    assert_eq!(run.final_state, "Stable");
}

#[test]
fn drift_run_rejects_bad_config() {
    assert!(drift_run("seed = x", 10).is_err());
}

#[test]
fn autoencoder_quality_grows_with_latent() {
    let small = autoencoder_point(16, 6, 0.05, 2, 0, 1).unwrap();
    let large = autoencoder_point(16, 6, 0.05, 8, 0, 1).unwrap();
    assert!(large.train_sgcs > small.train_sgcs);
    assert!(large.decoder_flops > small.decoder_flops);
    assert_eq!(autoencoder_point(16, 6, 0.05, 4, 3, 1).unwrap().feedback_bits, 24);
}

#[test]
fn sweep_overhead_falls_with_period() {
    let rows = monitoring_sweep(DEFAULT_SCENARIO, &[10, 40]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].overhead_bits > rows[1].overhead_bits);
    assert!(rows[0].evaluations > rows[1].evaluations);
}
