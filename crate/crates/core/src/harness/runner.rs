use rayon::prelude::*;

use super::config::{ConfigError, ExperimentConfig, InputMode};
use super::monitor::monitor_trace;
use super::record::{RunRecord, Summary};
use crate::byzantine::{make_adversary, IcHook};
use crate::estimation::EstimationConfig;
use crate::geometry::{distance, random_frame, random_unit_vector, NodeId, UnitVector};
use crate::protocols::{AAgreeNode, ArCastParams, CastNode, ICOracleConfig, IcOracle};
use crate::rng::{stream, Purpose};
use crate::simnet::{
    EndReason, EventTrace, Mode, NetworkConfig, NodeHandle, NodeStatus, Process, SimError, TraceHeader, World,
    TRACE_SCHEMA,
};

/// Local-frame input of every node for one trial.
pub fn trial_inputs(cfg: &ExperimentConfig, trial: u64) -> Vec<UnitVector> {
    match cfg.inputs {
        InputMode::LocalZ => vec![UnitVector::Z; cfg.n],
        InputMode::Random => {
            let mut rng = stream(cfg.master_seed, trial, Purpose::Inputs);
            (0..cfg.n).map(|_| random_unit_vector(&mut rng)).collect()
        }
    }
}

pub fn trace_header(cfg: &ExperimentConfig, trial: u64) -> TraceHeader {
    TraceHeader {
        schema: TRACE_SCHEMA.into(),
        mode: cfg.mode,
        n: cfg.n,
        t: cfg.t,
        delta: cfg.delta,
        qubits_per_axis: cfg.qubits_per_axis,
        ideal_channel: cfg.ideal_channel,
        faulty: cfg.faulty_nodes(),
        sender: (cfg.mode == Mode::Arcast).then_some(cfg.sender),
        seed: cfg.master_seed,
        trial,
        fault_strategy: cfg.fault_strategy.name().into(),
        scheduler: cfg.scheduler.name().into(),
        ic_mode: (cfg.mode == Mode::Agree).then(|| cfg.ic_mode.name().into()),
    }
}

/// The fully seeded network of one trial, trace recording enabled.
pub fn build_world(cfg: &ExperimentConfig, trial: u64) -> Result<World, ConfigError> {
    cfg.validate()?;
    let n = cfg.n;
    let faulty = cfg.faulty_nodes();
    let is_faulty: Vec<bool> = (0..n).map(|i| faulty.contains(&i)).collect();
    let estimation = EstimationConfig::new(cfg.delta, cfg.qubits_per_axis, cfg.ideal_channel)
        .map_err(|e| ConfigError(e.to_string()))?;
    let instances: Vec<NodeId> = match cfg.mode {
        Mode::Arcast => vec![cfg.sender],
        Mode::Agree => (0..n).collect(),
    };
    let net = NetworkConfig { n, estimation, fairness_bound: cfg.fairness_bound, instances };

    let mut frame_rng = stream(cfg.master_seed, trial, Purpose::Frames);
    let nodes: Vec<NodeHandle> = (0..n)
        .map(|i| NodeHandle {
            node_id: i,
            frame: random_frame(&mut frame_rng),
            status: if is_faulty[i] { NodeStatus::Faulty } else { NodeStatus::Correct },
        })
        .collect();
    let inputs = trial_inputs(cfg, trial);
    let params = ArCastParams { n, t: cfg.t, delta: cfg.delta };
    let processes: Vec<Option<Box<dyn Process>>> = (0..n)
        .map(|i| -> Option<Box<dyn Process>> {
            if is_faulty[i] {
                return None;
            }
            Some(match cfg.mode {
                Mode::Arcast => {
                    Box::new(CastNode::new(cfg.sender, i, params, (i == cfg.sender).then_some(inputs[i])))
                }
                Mode::Agree => Box::new(AAgreeNode::new(i, params, inputs[i])),
            })
        })
        .collect();
    let adversary = make_adversary(cfg.fault_strategy, cfg.scheduler, &faulty, &cfg.adversary);
    let mut world = World::new(net, nodes, processes, adversary, cfg.master_seed, trial)
        .map_err(|e| ConfigError(e.to_string()))?
        .with_trace(trace_header(cfg, trial));
    if cfg.mode == Mode::Agree {
        let hook = IcHook::for_strategy(cfg.fault_strategy, stream(cfg.master_seed, trial, Purpose::IcHook));
        let oracle = IcOracle::new(ICOracleConfig { mode: cfg.ic_mode, hook: Box::new(hook) }, cfg.t, is_faulty);
        world = world.with_oracle(Box::new(oracle));
    }
    Ok(world)
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: RunRecord,
    pub trace: EventTrace,
}

/// Runs one trial to quiescence (or `max_events` deliveries) and monitors it.
pub fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialOutput, ConfigError> {
    let mut world = build_world(cfg, trial)?;
    let (end, error) = match world.run_until(|_| false, cfg.max_events) {
        Ok(end) => (end, None),
        Err(SimError::Timeout(_)) => (EndReason::Timeout, None),
        Err(e) => (EndReason::Aborted, Some(e.to_string())),
    };
    let error = error.or_else(|| (!world.errors().is_empty()).then(|| world.errors().join("; ")));
    let record = summarize(cfg, trial, &world, end, error);
    let trace = world.into_trace().expect("harness worlds record traces");
    let report = monitor_trace(&trace);
    let record = RunRecord {
        conditioned: report.conditioned,
        lemma_violations: report.violations,
        advisory: report.advisory,
        ..record
    };
    Ok(TrialOutput { record, trace })
}

fn summarize(cfg: &ExperimentConfig, trial: u64, world: &World, end: EndReason, error: Option<String>) -> RunRecord {
    let n = cfg.n;
    let faulty = cfg.faulty_nodes();
    let outputs: Vec<Option<UnitVector>> = (0..n)
        .map(|i| match cfg.mode {
            _ if world.is_faulty(i) => None,
            Mode::Arcast => world.cast_output(i, cfg.sender),
            Mode::Agree => world.agreed(i),
        })
        .collect();
    let present: Vec<UnitVector> = outputs.iter().flatten().copied().collect();
    let mut max_pairwise: f64 = 0.0;
    for (i, a) in present.iter().enumerate() {
        for b in &present[i + 1..] {
            max_pairwise = max_pairwise.max(distance(a, b));
        }
    }
    let sender_correct = !faulty.contains(&cfg.sender);
    let sender_distance = (cfg.mode == Mode::Arcast && sender_correct && !present.is_empty()).then(|| {
        let u = world.nodes()[cfg.sender].frame.to_global(&trial_inputs(cfg, trial)[cfg.sender]);
        present.iter().map(|v| distance(&u, v)).fold(0.0, f64::max)
    });
    let stats = world.stats();
    RunRecord {
        trial,
        seed: cfg.master_seed,
        sender: (cfg.mode == Mode::Arcast).then_some(cfg.sender),
        terminated: outputs.iter().map(Option::is_some).collect(),
        outputs,
        elected: match cfg.mode {
            Mode::Agree => (0..n).map(|i| world.elected(i)).collect(),
            Mode::Arcast => Vec::new(),
        },
        faulty,
        conditioned: stats.bad_links == 0,
        correct_links: stats.correct_links,
        bad_links: stats.bad_links,
        max_link_error: stats.max_link_error,
        channel_failures: stats.channel_failures,
        max_pairwise_distance: max_pairwise,
        sender_distance,
        lemma_violations: Vec::new(),
        advisory: Vec::new(),
        event_count: stats.deliveries,
        end,
        error,
        expected_termination: !cfg.violation_study() && (cfg.mode == Mode::Agree || sender_correct),
        violation_study: cfg.violation_study(),
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    /// Present when traces were requested.
    pub traces: Vec<EventTrace>,
}

/// Runs every trial (in parallel) and merges results in trial order.
pub fn run_experiment(cfg: &ExperimentConfig, keep_traces: bool) -> Result<Experiment, ConfigError> {
    cfg.validate()?;
    let outputs: Vec<TrialOutput> =
        (0..cfg.trials).into_par_iter().map(|trial| run_trial(cfg, trial)).collect::<Result<_, _>>()?;
    let mut records = Vec::with_capacity(outputs.len());
    let mut traces = Vec::new();
    for out in outputs {
        records.push(out.record);
        if keep_traces {
            traces.push(out.trace);
        }
    }
    let summary = Summary::from_records(cfg.delta, &records);
    Ok(Experiment { records, summary, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::byzantine::{PolicyKind, StrategyKind};

    fn small(mode: Mode) -> ExperimentConfig {
        ExperimentConfig { mode, n: 4, t: 0, ideal_channel: true, trials: 10, ..Default::default() }
    }

    #[test]
    fn fault_free_ideal_runs_agree_exactly() {
        for mode in [Mode::Arcast, Mode::Agree] {
            let e = run_experiment(&small(mode), false).unwrap();
            assert_eq!(e.records.len(), 10);
            for r in &e.records {
                assert!(r.conditioned);
                assert!(r.all_correct_terminated(), "{mode:?} trial {}", r.trial);
                assert!(r.max_pairwise_distance < 1e-12, "{}", r.max_pairwise_distance);
                assert!(r.lemma_violations.is_empty());
                assert!(!r.failed());
            }
            assert_eq!(e.summary.success_rate, 1.0);
        }
    }

    #[test]
    fn silent_faulty_sender_is_not_a_failure() {
        let cfg = ExperimentConfig {
            mode: Mode::Arcast,
            n: 5,
            t: 1,
            faulty_placement: super::super::config::Placement::Low,
            fault_strategy: StrategyKind::Silent,
            trials: 2,
            ..Default::default()
        };
        let e = run_experiment(&cfg, false).unwrap();
        for r in &e.records {
            assert!(!r.expected_termination);
            assert!(r.outputs.iter().all(Option::is_none));
            assert!(!r.failed());
        }
    }

    #[test]
    fn trials_are_independent_of_batching() {
        let cfg = ExperimentConfig {
            n: 5,
            t: 1,
            fault_strategy: StrategyKind::Equivocator,
            scheduler: PolicyKind::Random,
            trials: 3,
            master_seed: 11,
            qubits_per_axis: 2000,
            delta: 0.1,
            ..Default::default()
        };
        let all = run_experiment(&cfg, true).unwrap();
        let third = run_trial(&cfg, 2).unwrap();
        assert_eq!(all.records[2], third.record);
        assert_eq!(all.traces[2], third.trace);
    }
}
