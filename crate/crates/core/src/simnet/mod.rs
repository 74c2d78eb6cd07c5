//! Asynchronous network simulation.
//!
//! Messages travel as [`MessageEnvelope`]s: a classical tag delivered
//! atomically with either a quantum direction payload or a classical bit
//! string. A pluggable scheduler policy (the adversary) picks the next
//! delivery from the pending set, subject to a skip bound `K` that makes
//! eventual delivery between correct nodes checkable in a finite run.
//!
//! Nodes are [`Process`] state machines. Faulty nodes have no state machine;
//! a [`FaultStrategy`] emits envelopes for them at every step. The runtime
//! stamps the true sender on everything it enqueues.

mod scheduler;
mod trace;
mod world;

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::QuantumPayload;
use crate::geometry::{DirTag, NodeId, UnitVector};

pub use scheduler::{Decision, SchedulerState, SchedulerView};
pub use trace::{Branch, EndReason, EventTrace, Mode, TraceEvent, TraceHeader, TraceLine, TRACE_SCHEMA};
pub use world::{NetworkConfig, NodeHandle, NodeStatus, RunStats, StepOutcome, World, MAX_NODES};

pub type MsgId = u64;

/// Default skip bound for correct-to-correct envelopes.
pub const DEFAULT_FAIRNESS_BOUND: u64 = 10_000;

/// Protocol instance an envelope belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instance {
    /// The broadcast whose designated sender is the given node.
    Cast(NodeId),
    /// The interactive-consistency subroutine.
    Ic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalTag {
    Init,
    Echo,
    Ready1,
    Ready2,
    IcPayload,
}

impl ClassicalTag {
    pub fn direction_tag(self) -> Option<DirTag> {
        match self {
            ClassicalTag::Init => Some(DirTag::Init),
            ClassicalTag::Echo => Some(DirTag::Echo),
            ClassicalTag::Ready1 => Some(DirTag::Ready1),
            ClassicalTag::Ready2 => Some(DirTag::Ready2),
            ClassicalTag::IcPayload => None,
        }
    }
}

impl From<DirTag> for ClassicalTag {
    fn from(tag: DirTag) -> Self {
        match tag {
            DirTag::Init => ClassicalTag::Init,
            DirTag::Echo => ClassicalTag::Echo,
            DirTag::Ready1 => ClassicalTag::Ready1,
            DirTag::Ready2 => ClassicalTag::Ready2,
        }
    }
}

/// The quantum part of a direction message, or the bits of a classical one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Quantum(QuantumPayload),
    Classical(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEnvelope {
    pub msg_id: MsgId,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub instance: Instance,
    pub classical_tag: ClassicalTag,
    pub payload: Payload,
}

impl MessageEnvelope {
    /// A direction message; `msg_id` and `sender` are overwritten by the runtime.
    pub fn direction(receiver: NodeId, instance: NodeId, tag: DirTag, payload: QuantumPayload) -> Self {
        MessageEnvelope {
            msg_id: 0,
            sender: 0,
            receiver,
            instance: Instance::Cast(instance),
            classical_tag: tag.into(),
            payload: Payload::Quantum(payload),
        }
    }

    /// Direction tags carry a quantum payload and the IC tag carries bits.
    pub fn is_well_formed(&self) -> bool {
        match (&self.payload, self.classical_tag) {
            (Payload::Quantum(_), ClassicalTag::IcPayload) => false,
            (Payload::Quantum(q), _) => q.qubits_per_axis >= 1,
            (Payload::Classical(_), tag) => tag == ClassicalTag::IcPayload && self.instance == Instance::Ic,
        }
    }

    /// Stable 64-bit FNV-1a digest of the payload.
    pub fn payload_digest(&self) -> u64 {
        let mut h = Fnv::default();
        match &self.payload {
            Payload::Quantum(q) => {
                h.write(&[0]);
                for c in q.true_direction_global.to_array() {
                    h.write(&c.to_bits().to_le_bytes());
                }
                h.write(&q.qubits_per_axis.to_le_bytes());
                h.write(&[q.corrupted as u8]);
            }
            Payload::Classical(bits) => {
                h.write(&[1]);
                h.write(&(bits.len() as u64).to_le_bytes());
                for &b in bits {
                    h.write(&[b as u8]);
                }
            }
        }
        h.finish()
    }
}

pub(crate) struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// What a correct node's state machine sees when an envelope is delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct Incoming {
    /// Authenticated sender.
    pub origin: NodeId,
    pub instance: Instance,
    pub body: IncomingBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IncomingBody {
    /// Receiver-local estimate of the transmitted direction.
    Direction { tag: DirTag, direction: UnitVector },
    /// Common interactive-consistency output, row `j` reported by node `j`.
    IcResult(Vec<Vec<bool>>),
}

/// Side effects requested by a state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send-to-all other nodes through the quantum channel. The node has
    /// already delivered its own copy to itself.
    Broadcast { instance: NodeId, tag: DirTag, direction: UnitVector },
    SubmitIc { bits: Vec<bool> },
    Note(Note),
}

/// Observable state changes, recorded in the trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    Transition { instance: NodeId, from: u8, to: u8, via: Branch },
    CastOutput { instance: NodeId, direction: UnitVector },
    Elected { k: usize },
    Agreed { direction: UnitVector },
    Aborted { instance: NodeId },
    Discarded { instance: Instance, origin: NodeId, tag: ClassicalTag, reason: &'static str },
    Error { message: String },
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outbox {
    pub actions: Vec<Action>,
}

impl Outbox {
    pub fn push(&mut self, action: Action) {
        self.actions.push(action);
    }

    pub fn note(&mut self, note: Note) {
        self.actions.push(Action::Note(note));
    }
}

/// A correct node's state machine.
pub trait Process: Send {
    fn on_start(&mut self, out: &mut Outbox);
    fn on_deliver(&mut self, msg: Incoming, out: &mut Outbox);
    /// The node produced its final output.
    fn finished(&self) -> bool;
    /// Canonical encoding of the state, for state-space exploration.
    fn digest(&self, out: &mut Vec<u8>);
    fn clone_box(&self) -> Box<dyn Process>;
}

/// The interactive-consistency service. Returns the common matrix once the
/// submissions suffice.
pub trait ClassicalOracle: Send {
    fn submit(&mut self, node: NodeId, bits: Vec<bool>) -> Option<Vec<Vec<bool>>>;
    fn digest(&self, out: &mut Vec<u8>);
    fn clone_box(&self) -> Box<dyn ClassicalOracle>;
}

/// Public information about correct nodes: which tags each has sent per
/// instance, derived from channel traffic.
#[derive(Debug, Clone, Default)]
pub struct PublicProgress {
    sent: Vec<Vec<u8>>,
}

impl PublicProgress {
    pub fn new(n: usize) -> Self {
        PublicProgress { sent: vec![vec![0; n]; n] }
    }

    pub(crate) fn record(&mut self, node: NodeId, instance: NodeId, tag: DirTag) {
        self.sent[node][instance] |= 1 << tag.index();
    }

    pub fn has_sent(&self, node: NodeId, instance: NodeId, tag: DirTag) -> bool {
        self.sent[node][instance] & (1 << tag.index()) != 0
    }
}

/// State shared by every faulty node and the scheduler policy.
#[derive(Debug, Clone, Default)]
pub struct AdversaryMemory {
    /// Two groups of correct nodes the adversary tries to drive apart.
    pub split: Option<[Vec<NodeId>; 2]>,
    /// First correct direction observed per instance (global frame).
    pub reference: BTreeMap<NodeId, UnitVector>,
    /// Per-instance target directions for the two groups.
    pub candidates: BTreeMap<NodeId, [UnitVector; 2]>,
}

/// Read-only view handed to faulty-node strategies.
pub struct AdversaryView<'a> {
    pub n: usize,
    pub delta: f64,
    pub qubits_per_axis: u64,
    pub faulty: &'a [bool],
    pub instances: &'a [NodeId],
    /// Envelopes sent since this node's previous turn (channels are public).
    pub fresh: &'a [MessageEnvelope],
    pub progress: &'a PublicProgress,
    pub deliveries: u64,
}

impl AdversaryView<'_> {
    pub fn correct_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(|&i| !self.faulty[i])
    }
}

/// A faulty node.
pub trait FaultStrategy: Send {
    fn name(&self) -> &'static str;
    fn on_event(
        &mut self,
        me: NodeId,
        view: &AdversaryView<'_>,
        memory: &mut AdversaryMemory,
        rng: &mut dyn RngCore,
    ) -> Vec<MessageEnvelope>;
    fn clone_box(&self) -> Box<dyn FaultStrategy>;
}

/// The adversarial scheduler.
pub trait SchedulerPolicy: Send {
    fn name(&self) -> &'static str;
    fn choose(&mut self, view: &SchedulerView<'_>, memory: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Decision;
    fn clone_box(&self) -> Box<dyn SchedulerPolicy>;
}

/// Faulty-node strategies plus the scheduler, coupled through shared memory.
pub struct Adversary {
    pub strategies: Vec<(NodeId, Box<dyn FaultStrategy>)>,
    pub policy: Box<dyn SchedulerPolicy>,
    pub memory: AdversaryMemory,
}

impl Clone for Adversary {
    fn clone(&self) -> Self {
        Adversary {
            strategies: self.strategies.iter().map(|(id, s)| (*id, s.clone_box())).collect(),
            policy: self.policy.clone_box(),
            memory: self.memory.clone(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("network needs at least one node")]
    EmptyNetwork,
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("scheduler skipped envelope {msg_id} more than {bound} times")]
    FairnessViolation { msg_id: MsgId, bound: u64 },
    #[error("strategy `{strategy}` of node {node} emitted a malformed envelope: {reason}")]
    MalformedEnvelope { node: NodeId, strategy: String, reason: String },
    #[error("scheduler chose envelope {0}, which it may not deliver or drop")]
    InvalidDecision(MsgId),
    #[error("no termination within {0} deliveries")]
    Timeout(u64),
}
