//! Whole-run properties of the bundled scenarios.

mod common;

use std::collections::BTreeMap;

use lcm_core::monitor::monitoring_overhead;
use lcm_core::registry::EntryStatus;
use lcm_core::sim::{metrics_from_csv, warmup_slots, EventLog, RecordKind, ScenarioRun};

use common::{run, ALL_SCENARIOS};

fn actions(run: &ScenarioRun) -> Vec<String> {
    run.events.of_kind(RecordKind::ActionIssued).filter_map(|r| r.field("action").map(str::to_string)).collect()
}

#[test]
fn event_logs_are_ordered_and_causal() {
    for (name, text) in ALL_SCENARIOS {
        let (_, run) = run(text);
        let recs = &run.events.records;
        assert!(recs.windows(2).all(|w| w[0].slot <= w[1].slot), "{name}");
        assert_eq!(recs.first().map(|r| r.kind), Some(RecordKind::RunStart), "{name}");
        assert_eq!(recs.last().map(|r| r.kind), Some(RecordKind::RunEnd), "{name}");
        for (i, r) in recs.iter().enumerate() {
            if r.kind != RecordKind::ActionIssued {
                continue;
            }
            let caused = recs[..i]
                .iter()
                .any(|p| matches!(p.kind, RecordKind::DriftAlarm | RecordKind::FallbackOrdered) && p.slot <= r.slot);
            assert!(caused, "{name}: uncaused action at slot {}", r.slot);
            assert!(r.field("rule").is_some() && r.field("buffered").is_some(), "{name}: no rationale at {}", r.slot);
        }
    }
}

#[test]
fn each_slot_uses_exactly_one_report_path() {
    for (name, text) in ALL_SCENARIOS {
        let (cfg, run) = run(text);
        let s = &run.summary;
        assert_eq!(s.inference_calls + s.legacy_reports, cfg.num_slots, "{name}");
        for row in run.metrics.iter().filter(|r| r.loop_state == "Fallback") {
            assert!(row.active_model_id.is_none(), "{name}: model active in fallback at {}", row.slot);
        }
    }
}

#[test]
fn at_most_one_active_model_per_functionality() {
    for (name, text) in ALL_SCENARIOS {
        let (_, run) = run(text);
        let mut active: BTreeMap<&str, usize> = BTreeMap::new();
        for e in run.registry.list() {
            if e.status == EntryStatus::Active {
                *active.entry(&e.functionality_tag).or_default() += 1;
            }
        }
        assert!(active.values().all(|&n| n == 1), "{name}: {active:?}");
    }
}

#[test]
fn overhead_matches_the_closed_form_when_never_in_fallback() {
    for (name, text) in ALL_SCENARIOS {
        let (cfg, run) = run(text);
        let expected = monitoring_overhead(cfg.num_slots, cfg.channel.antennas, warmup_slots(&cfg), &cfg.monitoring);
        let fell_back = run.metrics.iter().any(|r| r.loop_state == "Fallback");
        if fell_back {
            assert!(run.summary.monitor_overhead_bits < expected.total_bits, "{name}");
        } else {
            assert_eq!(run.summary.monitor_overhead_bits, expected.total_bits, "{name}");
            assert_eq!(run.summary.evaluations, expected.evaluations, "{name}");
        }
    }
}

#[test]
fn outputs_are_written_and_parse_back() {
    let (cfg, run) = run(common::DRIFT_SWITCH);
    let dir = tempfile::tempdir().unwrap();
    run.write_outputs(dir.path()).unwrap();
    let metrics = metrics_from_csv(&std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(metrics.len() as u64, cfg.num_slots);
    let events = EventLog::parse(&std::fs::read_to_string(dir.path().join("events.log")).unwrap()).unwrap();
    assert_eq!(events.to_text(), run.events.to_text());
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("inference_calls"));
}

#[test]
fn missing_match_falls_back_then_retrains() {
    let (_, run) = run(common::RETRAIN_FALLBACK);
    let acts = actions(&run);
    assert_eq!(acts.first().map(String::as_str), Some("Fallback"), "{acts:?}");
    assert!(acts.iter().any(|a| a == "Retrain"), "{acts:?}");
    assert!(!acts.iter().any(|a| a == "Switch"), "{acts:?}");
    assert_eq!(run.summary.final_state, "Stable");
}

#[test]
fn operator_fallback_stops_inference_until_resumed() {
    let (cfg, run) = run(common::OPERATOR_FALLBACK);
    let from = cfg.fallback_slots[0];
    let to = cfg.resume_slots[0];
    assert!(run.events.of_kind(RecordKind::FallbackOrdered).any(|r| r.slot == from));
    for row in run.metrics.iter().filter(|r| r.slot >= from && r.slot < to) {
        assert_eq!(row.loop_state, "Fallback", "slot {}", row.slot);
        assert!(row.active_model_id.is_none());
    }
    assert!(run.summary.legacy_reports > to - from);
    let reactivated = run
        .events
        .of_kind(RecordKind::ActionIssued)
        .find(|r| r.field("action") == Some("ReactivateAi"))
        .map(|r| r.slot);
    assert_eq!(reactivated, Some(to));
    assert_eq!(run.summary.final_state, "Stable");
}

#[test]
fn snr_drop_only_keeps() {
    let (_, run) = run(common::SNR_DROP);
    let acts = actions(&run);
    assert!(!acts.is_empty() && acts.iter().all(|a| a == "Keep"), "{acts:?}");
    assert!(run
        .events
        .of_kind(RecordKind::ActionIssued)
        .all(|r| r.field("rule") == Some("snr_guard")));
}
