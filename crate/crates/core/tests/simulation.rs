use rfagree_core::byzantine::{PolicyKind, StrategyKind};
use rfagree_core::harness::{build_world, monitor_trace, run_experiment, run_trial, ExperimentConfig, Placement};
use rfagree_core::simnet::{EndReason, EventTrace, Mode, SimError, TraceEvent};

fn arcast(n: usize, t: usize) -> ExperimentConfig {
    ExperimentConfig { mode: Mode::Arcast, n, t, ..Default::default() }
}

#[test]
fn fault_free_broadcast_delivery_count() {
    // With c correct nodes and silent faults the sender's init reaches c - 1
    // nodes, then every correct node sends one echo and one ready to the
    // other c - 1: (c - 1)(2c + 1) deliveries.
    for (n, t) in [(4, 0), (5, 1), (9, 2), (13, 3)] {
        let c = (n - t) as u64;
        let out = run_trial(&ExperimentConfig { ideal_channel: true, ..arcast(n, t) }, 0).unwrap();
        assert_eq!(out.record.event_count, (c - 1) * (2 * c + 1), "n = {n}");
        assert!(out.record.event_count < 5 * (n * n) as u64);
    }
}

#[test]
fn pinned_noisy_broadcast() {
    let out = run_trial(&arcast(9, 2), 0).unwrap();
    let r = &out.record;
    assert_eq!(r.event_count, 90);
    assert!(r.all_correct_terminated());
    assert!(r.max_pairwise_distance < 0.1);
    assert_eq!(out.trace.end_reason(), Some(EndReason::Quiescent));
}

#[test]
fn same_seed_same_trace() {
    let cfg = ExperimentConfig {
        fault_strategy: StrategyKind::Colluder,
        scheduler: PolicyKind::Random,
        master_seed: 99,
        ..Default::default()
    };
    let a = run_trial(&cfg, 4).unwrap();
    let b = run_trial(&cfg, 4).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.record, b.record);
    let mut x = Vec::new();
    let mut y = Vec::new();
    a.trace.write_jsonl(&mut x).unwrap();
    b.trace.write_jsonl(&mut y).unwrap();
    assert_eq!(x, y);
    let other = run_trial(&ExperimentConfig { master_seed: 100, ..cfg.clone() }, 4).unwrap();
    assert_ne!(a.trace, other.trace);
}

#[test]
fn traces_round_trip_through_jsonl() {
    let cfg = ExperimentConfig { fault_strategy: StrategyKind::RandomNoise, trials: 2, ..Default::default() };
    let exp = run_experiment(&cfg, true).unwrap();
    let mut buf = Vec::new();
    for t in &exp.traces {
        t.write_jsonl(&mut buf).unwrap();
    }
    let back = EventTrace::read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, exp.traces);
    for (t, r) in back.iter().zip(&exp.records) {
        assert_eq!(monitor_trace(t).violations, r.lemma_violations);
    }
}

#[test]
fn every_strategy_and_policy_runs_clean_on_a_small_network() {
    for &s in StrategyKind::ALL {
        for &p in PolicyKind::ALL {
            for mode in [Mode::Arcast, Mode::Agree] {
                let cfg = ExperimentConfig {
                    mode,
                    n: 5,
                    t: 1,
                    delta: 0.05,
                    fault_strategy: s,
                    scheduler: p,
                    trials: 4,
                    ..Default::default()
                };
                let exp = run_experiment(&cfg, false).unwrap();
                assert_eq!(exp.summary.failed_runs, 0, "{s}/{p}/{mode:?}: {:#?}", exp.records);
            }
        }
    }
}

#[test]
fn faulty_sender_broadcasts_need_not_terminate() {
    for &s in StrategyKind::ALL {
        let cfg = ExperimentConfig { faulty_placement: Placement::Low, fault_strategy: s, trials: 3, ..arcast(9, 2) };
        let exp = run_experiment(&cfg, false).unwrap();
        assert!(exp.records.iter().all(|r| !r.expected_termination && !r.failed()), "{s}");
    }
}

#[test]
fn violation_study_records_without_failing() {
    let cfg = ExperimentConfig {
        n: 8,
        t: 2,
        allow_excess_faults: true,
        fault_strategy: StrategyKind::Colluder,
        scheduler: PolicyKind::AdaptiveSplitter,
        trials: 5,
        ..Default::default()
    };
    let exp = run_experiment(&cfg, false).unwrap();
    assert!(exp.records.iter().all(|r| r.violation_study && !r.failed()));
    assert_eq!(exp.summary.failed_runs, 0);
    assert!(run_experiment(&ExperimentConfig { allow_excess_faults: false, ..cfg }, false).is_err());
}

#[test]
fn unfair_schedulers_are_stopped() {
    let cfg = ExperimentConfig { mode: Mode::Agree, n: 5, t: 1, fairness_bound: 3, ..Default::default() };
    let mut world = build_world(&cfg, 0).unwrap();
    world.start();
    // Deliver newest first, overtaking the oldest envelope every step.
    let mut result = Ok(());
    for _ in 0..1000 {
        let Some(&newest) = world.pending_ids().last() else { break };
        result = world.deliver_now(newest);
        if result.is_err() {
            break;
        }
    }
    assert!(matches!(result, Err(SimError::FairnessViolation { bound: 3, .. })), "{result:?}");
}

#[test]
fn agreement_trace_shape() {
    let out = run_trial(&ExperimentConfig { trials: 1, ..Default::default() }, 0).unwrap();
    let finalizes = out.trace.events.iter().filter(|e| matches!(e, TraceEvent::IcFinalize { .. })).count();
    let agrees = out.trace.events.iter().filter(|e| matches!(e, TraceEvent::Agree { .. })).count();
    assert_eq!(finalizes, 1);
    assert_eq!(agrees, 7);
    let ks: std::collections::BTreeSet<_> = out.record.elected.iter().flatten().collect();
    assert_eq!(ks.len(), 1);
}
