use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn lcm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcm-sim"))
        .args(args)
        .current_dir(dir)
        .env_remove("LCM_SIM_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_and_config_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let o = lcm(d.path(), &["simulate", "--config", "missing.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.cfg"));
    assert_eq!(code(&lcm(d.path(), &["frobnicate"])), 1);
    let cfg = scenario("drift_switch.conf");
    let o = lcm(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--set", "monitoring.colour=blue"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("monitoring.colour"));
    assert_eq!(code(&lcm(d.path(), &["--help"])), 0);
}

#[test]
fn simulate_writes_outputs_under_env_root() {
    let d = tempfile::tempdir().unwrap();
    let cfg = scenario("drift_switch.conf");
    let o = Command::new(env!("CARGO_BIN_EXE_lcm-sim"))
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--set", "num_slots=300", "--quiet"])
        .current_dir(d.path())
        .env("LCM_SIM_OUT", d.path().join("root"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = d.path().join("root/drift_switch");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 301);
    assert!(metrics.starts_with("slot,sgcs,nmse,loop_state,"));
    assert!(std::fs::read_to_string(out.join("events.log")).unwrap().contains("kind=RunStart"));
    assert!(out.join("summary.txt").exists());
}

#[test]
fn registry_verify_detects_corruption() {
    let d = tempfile::tempdir().unwrap();
    let cfg = scenario("drift_switch.conf");
    let o = lcm(
        d.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", "run", "--set", "num_slots=100", "--set", "registry.path=reg"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = lcm(d.path(), &["registry", "--path", "reg", "verify"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok")).count(), 2);
    let listed = stdout(&lcm(d.path(), &["registry", "--path", "reg", "list"]));
    assert!(listed.contains("pred-slow@v1") && listed.contains("active"));

    let file = d.path().join("reg/pred-fast/1.lcmp");
    let mut bytes = std::fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&file, bytes).unwrap();
    let o = lcm(d.path(), &["registry", "--path", "reg", "verify"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("FAIL\tpred-fast@v1"));
}

#[test]
fn sweep_overhead_falls_with_period() {
    let d = tempfile::tempdir().unwrap();
    let cfg = scenario("drift_switch.conf");
    let o = lcm(
        d.path(),
        &["sweep", "--config", cfg.to_str().unwrap(), "--param", "monitoring.period", "--values", "5,10,20", "--out", "sw"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for p in [5, 10, 20] {
        assert!(d.path().join(format!("sw/monitoring.period={p}/metrics.csv")).exists());
    }
    let table = std::fs::read_to_string(d.path().join("sw/sweep.csv")).unwrap();
    let bits: Vec<u64> = table.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(bits.len(), 3);
    assert!(bits[0] > bits[1] && bits[1] > bits[2], "{bits:?}");
}

#[test]
fn two_sided_flow_enforces_pairing() {
    let d = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let o = lcm(d.path(), args);
        (code(&o), stdout(&o), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    let ok = |r: (i32, String, String)| {
        assert_eq!(r.0, 0, "{}", r.2);
        r.1
    };
    ok(run(&["train", "autoencoder", "--antennas", "16", "--slots", "400", "--latent", "4", "--id", "ue", "--out-dir", "ue"]));
    ok(run(&["train", "autoencoder", "--antennas", "16", "--slots", "400", "--latent", "4", "--id", "other", "--seed", "5", "--out-dir", "other"]));
    ok(run(&["intervendor", "export-dataset", "--encoder", "ue/encoder.lcmp", "--antennas", "16", "--slots", "400", "--out", "ue.dset"]));
    ok(run(&["intervendor", "train-decoder", "--dataset", "ue.dset", "--id", "gnb", "--out", "gnb.lcmp"]));
    let joint = ok(run(&["eval", "sgcs", "--model", "ue/encoder.lcmp", "--decoder", "ue/decoder.lcmp", "--antennas", "16", "--slots", "200"]));
    let sep = ok(run(&["eval", "sgcs", "--model", "ue/encoder.lcmp", "--decoder", "gnb.lcmp", "--antennas", "16", "--slots", "200"]));
    let value = |s: &str| -> f64 { s.lines().find_map(|l| l.strip_prefix("mean_sgcs = ")).unwrap().parse().unwrap() };
    assert!((value(&joint) - value(&sep)).abs() < 0.02, "{joint} vs {sep}");

    let (c, _, err) = run(&["eval", "sgcs", "--model", "other/encoder.lcmp", "--decoder", "gnb.lcmp", "--antennas", "16"]);
    assert_eq!(c, 2);
    assert!(err.contains("associated ID"));

    let m = ok(run(&[
        "intervendor", "crosspair", "--encoder", "ue/encoder.lcmp", "--encoder", "other/encoder.lcmp", "--decoder",
        "gnb.lcmp", "--antennas", "16", "--slots", "100",
    ]));
    assert_eq!(m.lines().count(), 3);
}

#[test]
fn derive_reference_writes_report_and_artifact() {
    let d = tempfile::tempdir().unwrap();
    let o = lcm(
        d.path(),
        &[
            "intervendor", "derive-reference", "--candidate", "2:4", "--candidate", "4:4", "--candidate", "8:4",
            "--antennas", "16", "--paths", "6", "--doppler", "0.03", "--slots", "600", "--eval-slots", "200",
            "--seed", "9", "--storage-budget", "1536", "--sgcs-floor", "0.3", "--robustness-floor", "0.2",
            "--out-dir", "ref",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("selected=1"));
    let csv = std::fs::read_to_string(d.path().join("ref/scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(d.path().join("ref/reference.lcmp").exists());
}

#[test]
fn predictor_and_beam_commands() {
    let d = tempfile::tempdir().unwrap();
    let cfg = scenario("drift_switch.conf");
    let o = lcm(d.path(), &["train", "predictor", "--config", cfg.to_str().unwrap(), "--regime", "fast", "--out", "p.lcmp"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = lcm(
        d.path(),
        &["eval", "sgcs", "--model", "p.lcmp", "--paths", "4", "--doppler", "0.15", "--site-seed", "7", "--slots", "200"],
    );
    assert_eq!(code(&o), 0);
    let v: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("mean_sgcs = ")).unwrap().parse().unwrap();
    assert!(v > 0.95, "{v}");
    assert_eq!(code(&lcm(d.path(), &["train", "predictor", "--config", cfg.to_str().unwrap(), "--regime", "nope", "--out", "x"])), 1);

    let o = lcm(d.path(), &["train", "beams", "--subset", "0,8,16,24", "--slots", "400", "--out", "b.lcmp"]);
    assert_eq!(code(&o), 0);
    let o = lcm(d.path(), &["eval", "beams", "--model", "b.lcmp", "--k", "4", "--m", "1", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("top4_of_best1 = "));
}
