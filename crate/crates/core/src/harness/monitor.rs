//! Runtime checks of the broadcast and agreement bounds over an event trace.
//!
//! Distance and termination claims only hold on conditioned traces, where
//! every correct-to-correct transfer landed within δ. On other traces the
//! same checks are evaluated but reported as advisory exceedances. Structural
//! claims (common election, epoch order, eventual delivery) are checked on
//! every trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{distance, DirTag, NodeId, UnitVector};
use crate::simnet::{EndReason, EventTrace, Mode, TraceEvent};

/// Slack on every distance comparison.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// Two correct ready1 directions within 10δ.
    Ready11,
    /// A correct ready1 and a correct ready2 within 10δ.
    Ready12,
    /// Every correct ready2 preceded by some correct ready1.
    Causal,
    /// Two correct ready2 directions within 20δ.
    Ready22,
    /// Correct sender: every correct node outputs.
    Termination1,
    /// One correct output: every correct node outputs.
    Termination2,
    /// Correct sender: outputs within 14δ of its input.
    Correctness,
    /// Broadcast outputs pairwise within 42δ.
    Consistency,
    /// Agreement outputs pairwise within 42δ.
    AgreeConsistency,
    /// Every correct node reaches an agreement output.
    AgreeTermination,
    /// Common matrix, common elected column with at least t + 1 ones.
    Election,
    /// Epochs only move forward and each instance outputs once.
    EpochOrder,
    /// Every correct-to-correct envelope is delivered before quiescence.
    EventualDelivery,
    /// A correct node reported a protocol error.
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub lemma: Lemma,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<NodeId>,
    pub nodes: Vec<NodeId>,
    /// Trace indices of the offending events.
    pub events: Vec<u64>,
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorReport {
    pub conditioned: bool,
    pub max_link_error: f64,
    pub violations: Vec<Violation>,
    /// Bound exceedances on an unconditioned trace; expected, not failures.
    pub advisory: Vec<Violation>,
}

#[derive(Clone, Copy)]
struct Sent {
    index: u64,
    node: NodeId,
    dir: UnitVector,
}

#[derive(Default)]
struct InstanceView {
    init: Option<Sent>,
    ready1: Vec<Sent>,
    ready2: Vec<Sent>,
    outputs: BTreeMap<NodeId, Sent>,
    aborted: BTreeSet<NodeId>,
}

pub fn monitor_trace(trace: &EventTrace) -> MonitorReport {
    let h = &trace.header;
    let delta = h.delta;
    let faulty: Vec<bool> = (0..h.n).map(|i| h.is_faulty(i)).collect();
    let correct = |i: NodeId| i < h.n && !faulty[i];

    let mut conditioned = true;
    let mut max_link_error: f64 = 0.0;
    let mut instances: BTreeMap<NodeId, InstanceView> = BTreeMap::new();
    let mut agreed: BTreeMap<NodeId, Sent> = BTreeMap::new();
    let mut elected: BTreeMap<NodeId, (u64, usize)> = BTreeMap::new();
    let mut finalized: Vec<(u64, Vec<String>)> = Vec::new();
    let mut epochs: BTreeMap<(NodeId, NodeId), u8> = BTreeMap::new();
    let mut undelivered: BTreeMap<u64, u64> = BTreeMap::new();
    let mut structural = Vec::new();
    let mut end = None;

    for (i, event) in trace.events.iter().enumerate() {
        let i = i as u64;
        match event {
            TraceEvent::Send { msg, from, to, .. } => {
                if correct(*from) && correct(*to) {
                    undelivered.insert(*msg, i);
                }
            }
            TraceEvent::Deliver { msg, from, to, err, .. } => {
                undelivered.remove(msg);
                if let Some(err) = err {
                    if correct(*from) && correct(*to) {
                        max_link_error = max_link_error.max(*err);
                        if *err > delta + TOLERANCE {
                            conditioned = false;
                        }
                    }
                }
            }
            TraceEvent::Broadcast { node, inst, tag, dir } if correct(*node) => {
                let view = instances.entry(*inst).or_default();
                let s = Sent { index: i, node: *node, dir: *dir };
                match tag {
                    DirTag::Init => view.init = Some(s),
                    DirTag::Ready1 => view.ready1.push(s),
                    DirTag::Ready2 => view.ready2.push(s),
                    DirTag::Echo => {}
                }
            }
            TraceEvent::Transition { node, inst, from, to, .. } => {
                let last = epochs.entry((*node, *inst)).or_insert(if *node == *inst { 0 } else { 1 });
                if *from != *last || *to <= *from {
                    structural.push(Violation {
                        lemma: Lemma::EpochOrder,
                        instance: Some(*inst),
                        nodes: vec![*node],
                        events: vec![i],
                        value: *to as f64,
                        bound: *last as f64,
                        detail: format!("transition {from} -> {to} while in epoch {last}"),
                    });
                }
                *last = *to;
            }
            TraceEvent::CastOutput { node, inst, dir } if correct(*node) => {
                let view = instances.entry(*inst).or_default();
                if let Some(prev) = view.outputs.insert(*node, Sent { index: i, node: *node, dir: *dir }) {
                    structural.push(Violation {
                        lemma: Lemma::EpochOrder,
                        instance: Some(*inst),
                        nodes: vec![*node],
                        events: vec![prev.index, i],
                        value: 2.0,
                        bound: 1.0,
                        detail: "instance produced a second output".into(),
                    });
                }
            }
            TraceEvent::Abort { node, inst } => {
                instances.entry(*inst).or_default().aborted.insert(*node);
            }
            TraceEvent::Agree { node, dir } if correct(*node) => {
                agreed.insert(*node, Sent { index: i, node: *node, dir: *dir });
            }
            TraceEvent::Elect { node, k } if correct(*node) => {
                elected.insert(*node, (i, *k));
            }
            TraceEvent::IcFinalize { rows } => finalized.push((i, rows.clone())),
            TraceEvent::Error { node: Some(node), message } if correct(*node) => structural.push(Violation {
                lemma: Lemma::ProtocolError,
                instance: None,
                nodes: vec![*node],
                events: vec![i],
                value: 1.0,
                bound: 0.0,
                detail: message.clone(),
            }),
            TraceEvent::End { reason, .. } => end = Some(*reason),
            _ => {}
        }
    }

    let quiescent = end == Some(EndReason::Quiescent);
    let correct_nodes: Vec<NodeId> = (0..h.n).filter(|&i| correct(i)).collect();
    let mut bounded = Vec::new();

    for (&inst, view) in &instances {
        pairwise(&view.ready1, &view.ready1, 10.0 * delta, Lemma::Ready11, inst, &mut bounded);
        for a in &view.ready1 {
            for b in &view.ready2 {
                check_pair(a, b, 10.0 * delta, Lemma::Ready12, inst, &mut bounded);
            }
        }
        pairwise(&view.ready2, &view.ready2, 20.0 * delta, Lemma::Ready22, inst, &mut bounded);
        let first_ready1 = view.ready1.iter().map(|s| s.index).min();
        for r in &view.ready2 {
            if first_ready1.is_none_or(|f| f > r.index) {
                bounded.push(Violation {
                    lemma: Lemma::Causal,
                    instance: Some(inst),
                    nodes: vec![r.node],
                    events: vec![r.index],
                    value: 0.0,
                    bound: 1.0,
                    detail: "correct ready2 with no earlier correct ready1".into(),
                });
            }
        }
        let outputs: Vec<Sent> = view.outputs.values().copied().collect();
        pairwise(&outputs, &outputs, 42.0 * delta, Lemma::Consistency, inst, &mut bounded);
        let sender_correct = correct(inst);
        if sender_correct {
            if let Some(u) = view.init {
                for v in &outputs {
                    check_pair(&u, v, 14.0 * delta, Lemma::Correctness, inst, &mut bounded);
                }
            }
        }
        if quiescent && h.mode == Mode::Arcast {
            let missing: Vec<NodeId> = correct_nodes.iter().copied().filter(|i| !view.outputs.contains_key(i)).collect();
            if !missing.is_empty() {
                let lemma = if sender_correct {
                    Some(Lemma::Termination1)
                } else if !outputs.is_empty() {
                    Some(Lemma::Termination2)
                } else {
                    None
                };
                if let Some(lemma) = lemma {
                    bounded.push(Violation {
                        lemma,
                        instance: Some(inst),
                        nodes: missing,
                        events: outputs.iter().map(|s| s.index).collect(),
                        value: outputs.len() as f64,
                        bound: correct_nodes.len() as f64,
                        detail: "quiescent without every correct node producing an output".into(),
                    });
                }
            }
        }
    }
    if h.mode == Mode::Arcast {
        if let Some(s) = h.sender.filter(|&s| correct(s)) {
            if quiescent && !instances.contains_key(&s) {
                bounded.push(Violation {
                    lemma: Lemma::Termination1,
                    instance: Some(s),
                    nodes: correct_nodes.clone(),
                    events: vec![],
                    value: 0.0,
                    bound: correct_nodes.len() as f64,
                    detail: "correct sender never broadcast".into(),
                });
            }
        }
    }

    if h.mode == Mode::Agree {
        let outs: Vec<Sent> = agreed.values().copied().collect();
        pairwise(&outs, &outs, 42.0 * delta, Lemma::AgreeConsistency, usize::MAX, &mut bounded);
        if quiescent {
            let missing: Vec<NodeId> = correct_nodes.iter().copied().filter(|i| !agreed.contains_key(i)).collect();
            if !missing.is_empty() {
                bounded.push(Violation {
                    lemma: Lemma::AgreeTermination,
                    instance: None,
                    nodes: missing,
                    events: vec![],
                    value: outs.len() as f64,
                    bound: correct_nodes.len() as f64,
                    detail: "quiescent without every correct node agreeing".into(),
                });
            }
        }
        structural.extend(election_checks(h.t, &elected, &finalized));
    }

    if quiescent && !undelivered.is_empty() {
        structural.push(Violation {
            lemma: Lemma::EventualDelivery,
            instance: None,
            nodes: vec![],
            events: undelivered.values().copied().collect(),
            value: undelivered.len() as f64,
            bound: 0.0,
            detail: "correct-to-correct envelopes never delivered".into(),
        });
    }

    for v in &mut bounded {
        if v.instance == Some(usize::MAX) {
            v.instance = None;
        }
    }
    let (mut violations, advisory) = if conditioned { (bounded, Vec::new()) } else { (Vec::new(), bounded) };
    violations.extend(structural);
    MonitorReport { conditioned, max_link_error, violations, advisory }
}

fn check_pair(a: &Sent, b: &Sent, bound: f64, lemma: Lemma, inst: NodeId, out: &mut Vec<Violation>) {
    let d = distance(&a.dir, &b.dir);
    if d > bound + TOLERANCE {
        out.push(Violation {
            lemma,
            instance: Some(inst),
            nodes: vec![a.node, b.node],
            events: vec![a.index, b.index],
            value: d,
            bound,
            detail: format!("distance {d:.6} exceeds {bound:.6}"),
        });
    }
}

/// Unordered pairs when `a` and `b` are the same list.
fn pairwise(a: &[Sent], b: &[Sent], bound: f64, lemma: Lemma, inst: NodeId, out: &mut Vec<Violation>) {
    for (i, x) in a.iter().enumerate() {
        for y in &b[i + 1..] {
            check_pair(x, y, bound, lemma, inst, out);
        }
    }
}

fn election_checks(t: usize, elected: &BTreeMap<NodeId, (u64, usize)>, finalized: &[(u64, Vec<String>)]) -> Vec<Violation> {
    let mut out = Vec::new();
    let ks: BTreeSet<usize> = elected.values().map(|&(_, k)| k).collect();
    if ks.len() > 1 {
        out.push(Violation {
            lemma: Lemma::Election,
            instance: None,
            nodes: elected.keys().copied().collect(),
            events: elected.values().map(|&(i, _)| i).collect(),
            value: ks.len() as f64,
            bound: 1.0,
            detail: format!("correct nodes elected different columns {ks:?}"),
        });
    }
    if finalized.len() > 1 {
        out.push(Violation {
            lemma: Lemma::Election,
            instance: None,
            nodes: vec![],
            events: finalized.iter().map(|(i, _)| *i).collect(),
            value: finalized.len() as f64,
            bound: 1.0,
            detail: "more than one interactive-consistency result".into(),
        });
    }
    if let Some((fi, rows)) = finalized.first() {
        for (&node, &(i, k)) in elected {
            let weight = rows.iter().filter(|r| r.as_bytes().get(k) == Some(&b'1')).count();
            let smaller = (0..k).find(|&j| rows.iter().filter(|r| r.as_bytes().get(j) == Some(&b'1')).count() > t);
            if weight <= t || smaller.is_some() {
                out.push(Violation {
                    lemma: Lemma::Election,
                    instance: None,
                    nodes: vec![node],
                    events: vec![*fi, i],
                    value: weight as f64,
                    bound: (t + 1) as f64,
                    detail: format!("column {k} is not the smallest with at least t + 1 ones"),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{TraceHeader, TRACE_SCHEMA};

    fn header(n: usize, faulty: Vec<NodeId>) -> TraceHeader {
        TraceHeader {
            schema: TRACE_SCHEMA.into(),
            mode: Mode::Arcast,
            n,
            t: faulty.len(),
            delta: 0.02,
            qubits_per_axis: 20_000,
            ideal_channel: false,
            faulty,
            sender: Some(0),
            seed: 0,
            trial: 0,
            fault_strategy: "silent".into(),
            scheduler: "fifo".into(),
            ic_mode: None,
        }
    }

    fn at(angle: f64) -> UnitVector {
        UnitVector::Z.rotate_about(&UnitVector::X, angle)
    }

    fn bc(node: NodeId, tag: DirTag, angle: f64) -> TraceEvent {
        TraceEvent::Broadcast { node, inst: 0, tag, dir: at(angle) }
    }

    #[test]
    fn faulty_broadcasts_are_ignored() {
        let mut t = EventTrace::new(header(5, vec![4]));
        t.events.push(bc(4, DirTag::Ready2, 0.0));
        assert!(monitor_trace(&t).violations.is_empty());
    }

    #[test]
    fn unconditioned_traces_only_advise() {
        let mut t = EventTrace::new(header(5, vec![]));
        t.events.push(TraceEvent::Deliver {
            msg: 0,
            from: 0,
            to: 1,
            tag: crate::simnet::ClassicalTag::Echo,
            inst: crate::simnet::Instance::Cast(0),
            digest: String::new(),
            err: Some(0.5),
        });
        t.events.push(bc(1, DirTag::Ready2, 0.0));
        let r = monitor_trace(&t);
        assert!(!r.conditioned);
        assert!(r.violations.is_empty());
        assert_eq!(r.advisory.len(), 1);
        assert_eq!(r.advisory[0].lemma, Lemma::Causal);
    }

    #[test]
    fn epoch_regression_is_structural() {
        let mut t = EventTrace::new(header(5, vec![]));
        t.events.push(TraceEvent::Transition { node: 1, inst: 0, from: 1, to: 2, via: crate::simnet::Branch::Init });
        t.events.push(TraceEvent::Transition { node: 1, inst: 0, from: 1, to: 3, via: crate::simnet::Branch::Joint });
        let r = monitor_trace(&t);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].lemma, Lemma::EpochOrder);
    }

    #[test]
    fn disagreeing_election_is_flagged() {
        let elected: BTreeMap<_, _> = [(0, (3, 1)), (1, (4, 2))].into();
        let finalized = vec![(2, vec!["0110".to_string(), "0110".to_string(), "0110".to_string(), "0000".to_string()])];
        let v = election_checks(1, &elected, &finalized);
        assert!(v.iter().any(|v| v.detail.contains("different columns")));
        assert!(v.iter().any(|v| v.nodes == vec![1]));
        assert!(!v.iter().any(|v| v.nodes == vec![0]));
    }
}
