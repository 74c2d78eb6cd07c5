use sha2::{Digest, Sha256};

use super::scheduler::{Decision, SchedulerState, SchedulerView};
use super::trace::{bits_string, digest_string, EndReason, EventTrace, TraceEvent, TraceHeader};
use super::{
    Action, Adversary, AdversaryView, ClassicalOracle, ClassicalTag, Incoming, IncomingBody, Instance,
    MessageEnvelope, MsgId, Note, Outbox, Payload, Process, PublicProgress, SimError,
};
use crate::estimation::{ted_receive, ted_send, EstimationConfig};
use crate::geometry::{distance, LocalFrame, NodeId, UnitVector};
use crate::rng::{self, Purpose, SimRng};

/// Largest supported network (cluster search works on 128-bit sets).
pub const MAX_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub n: usize,
    pub estimation: EstimationConfig,
    pub fairness_bound: u64,
    /// Broadcast instances in use, by designated sender.
    pub instances: Vec<NodeId>,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::EmptyNetwork);
        }
        if self.n > MAX_NODES {
            return Err(SimError::Config(format!("at most {MAX_NODES} nodes are supported, got {}", self.n)));
        }
        if self.fairness_bound == 0 {
            return Err(SimError::Config("fairness bound must be positive".into()));
        }
        if let Some(&bad) = self.instances.iter().find(|&&j| j >= self.n) {
            return Err(SimError::Config(format!("instance {bad} has no sender among {} nodes", self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Correct,
    Faulty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeHandle {
    pub node_id: NodeId,
    pub frame: LocalFrame,
    pub status: NodeStatus,
}

/// Ground-truth channel statistics, invisible to nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub deliveries: u64,
    pub drops: u64,
    /// Delivered correct-to-correct quantum transfers.
    pub correct_links: u64,
    /// Of those, transfers that landed farther than δ.
    pub bad_links: u64,
    pub max_link_error: f64,
    pub channel_failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Delivered(MsgId),
    Dropped(MsgId),
    Quiescent,
}

/// One simulated network: nodes, adversary, pending envelopes and the trace.
pub struct World {
    cfg: NetworkConfig,
    nodes: Vec<NodeHandle>,
    faulty: Vec<bool>,
    processes: Vec<Option<Box<dyn Process>>>,
    oracle: Option<Box<dyn ClassicalOracle>>,
    adversary: Adversary,
    cursors: Vec<usize>,
    scheduler: SchedulerState,
    envelopes: Vec<MessageEnvelope>,
    progress: PublicProgress,
    channel_rng: SimRng,
    adversary_rng: SimRng,
    scheduler_rng: SimRng,
    trace: Option<EventTrace>,
    stats: RunStats,
    cast_outputs: Vec<Vec<Option<UnitVector>>>,
    agreed: Vec<Option<UnitVector>>,
    elected: Vec<Option<usize>>,
    errors: Vec<String>,
    started: bool,
}

impl Clone for World {
    fn clone(&self) -> Self {
        World {
            cfg: self.cfg.clone(),
            nodes: self.nodes.clone(),
            faulty: self.faulty.clone(),
            processes: self.processes.iter().map(|p| p.as_ref().map(|p| p.clone_box())).collect(),
            oracle: self.oracle.as_ref().map(|o| o.clone_box()),
            adversary: self.adversary.clone(),
            cursors: self.cursors.clone(),
            scheduler: self.scheduler.clone(),
            envelopes: self.envelopes.clone(),
            progress: self.progress.clone(),
            channel_rng: self.channel_rng.clone(),
            adversary_rng: self.adversary_rng.clone(),
            scheduler_rng: self.scheduler_rng.clone(),
            trace: self.trace.clone(),
            stats: self.stats.clone(),
            cast_outputs: self.cast_outputs.clone(),
            agreed: self.agreed.clone(),
            elected: self.elected.clone(),
            errors: self.errors.clone(),
            started: self.started,
        }
    }
}

impl World {
    /// `processes[i]` must be present exactly for correct nodes, and every
    /// faulty node needs a strategy in `adversary`.
    pub fn new(
        cfg: NetworkConfig,
        nodes: Vec<NodeHandle>,
        processes: Vec<Option<Box<dyn Process>>>,
        adversary: Adversary,
        master_seed: u64,
        trial: u64,
    ) -> Result<World, SimError> {
        cfg.validate()?;
        let n = cfg.n;
        if nodes.len() != n || processes.len() != n {
            return Err(SimError::Config(format!("expected {n} nodes and {n} processes")));
        }
        let mut faulty = vec![false; n];
        for (i, (node, process)) in nodes.iter().zip(&processes).enumerate() {
            if node.node_id != i {
                return Err(SimError::Config(format!("node at position {i} has id {}", node.node_id)));
            }
            faulty[i] = node.status == NodeStatus::Faulty;
            if faulty[i] == process.is_some() {
                return Err(SimError::Config(format!("node {i}: exactly correct nodes run a process")));
            }
            if faulty[i] && !adversary.strategies.iter().any(|(id, _)| *id == i) {
                return Err(SimError::Config(format!("faulty node {i} has no strategy")));
            }
        }
        if let Some((id, _)) = adversary.strategies.iter().find(|(id, _)| *id >= n || !faulty[*id]) {
            return Err(SimError::Config(format!("strategy attached to node {id}, which is not faulty")));
        }
        let instances = cfg.instances.len();
        Ok(World {
            cursors: vec![0; adversary.strategies.len()],
            scheduler: SchedulerState::new(cfg.fairness_bound),
            envelopes: Vec::new(),
            progress: PublicProgress::new(n),
            channel_rng: rng::stream(master_seed, trial, Purpose::Channel),
            adversary_rng: rng::stream(master_seed, trial, Purpose::Adversary),
            scheduler_rng: rng::stream(master_seed, trial, Purpose::Scheduler),
            trace: None,
            stats: RunStats::default(),
            cast_outputs: vec![vec![None; n.max(instances)]; n],
            agreed: vec![None; n],
            elected: vec![None; n],
            errors: Vec::new(),
            started: false,
            cfg,
            nodes,
            faulty,
            processes,
            oracle: None,
            adversary,
        })
    }

    pub fn with_oracle(mut self, oracle: Box<dyn ClassicalOracle>) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn with_trace(mut self, header: TraceHeader) -> Self {
        self.trace = Some(EventTrace::new(header));
        self
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &[NodeHandle] {
        &self.nodes
    }

    pub fn is_faulty(&self, node: NodeId) -> bool {
        self.faulty[node]
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn envelopes(&self) -> &[MessageEnvelope] {
        &self.envelopes
    }

    pub fn trace(&self) -> Option<&EventTrace> {
        self.trace.as_ref()
    }

    pub fn into_trace(self) -> Option<EventTrace> {
        self.trace
    }

    /// Broadcast output of `instance` at `node`, global frame.
    pub fn cast_output(&self, node: NodeId, instance: NodeId) -> Option<UnitVector> {
        self.cast_outputs[node][instance]
    }

    /// Agreement output of `node`, global frame.
    pub fn agreed(&self, node: NodeId) -> Option<UnitVector> {
        self.agreed[node]
    }

    pub fn elected(&self, node: NodeId) -> Option<usize> {
        self.elected[node]
    }

    /// Protocol errors reported by correct nodes.
    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    pub fn correct_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.cfg.n).filter(|&i| !self.faulty[i])
    }

    pub fn all_correct_finished(&self) -> bool {
        self.processes.iter().flatten().all(|p| p.finished())
    }

    fn record(&mut self, event: TraceEvent) {
        if let Some(trace) = &mut self.trace {
            trace.events.push(event);
        }
    }

    /// Runs every correct node's start hook, in id order.
    pub fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        for i in 0..self.cfg.n {
            if let Some(p) = self.processes[i].as_mut() {
                let mut out = Outbox::default();
                p.on_start(&mut out);
                self.apply(i, out);
            }
        }
    }

    fn push_envelope(&mut self, mut env: MessageEnvelope) -> MsgId {
        let id = self.envelopes.len() as MsgId;
        env.msg_id = id;
        if self.trace.is_some() {
            let (dir, bits) = match &env.payload {
                Payload::Quantum(q) => (Some(q.true_direction_global), None),
                Payload::Classical(b) => (None, Some(bits_string(b))),
            };
            self.record(TraceEvent::Send {
                msg: id,
                from: env.sender,
                to: env.receiver,
                tag: env.classical_tag,
                inst: env.instance,
                digest: digest_string(env.payload_digest()),
                dir,
                bits,
            });
        }
        let receiver_correct = !self.faulty[env.receiver];
        let sender_correct = !self.faulty[env.sender];
        self.envelopes.push(env);
        if receiver_correct {
            self.scheduler.enqueue(id, sender_correct);
        }
        id
    }

    fn apply(&mut self, node: NodeId, out: Outbox) {
        let frame = self.nodes[node].frame;
        for action in out.actions {
            match action {
                Action::Broadcast { instance, tag, direction } => {
                    let global = frame.to_global(&direction);
                    self.record(TraceEvent::Broadcast { node, inst: instance, tag, dir: global });
                    self.progress.record(node, instance, tag);
                    for r in 0..self.cfg.n {
                        if r == node {
                            continue;
                        }
                        let payload = ted_send(&direction, &frame, &self.cfg.estimation);
                        self.push_envelope(MessageEnvelope::direction(r, instance, tag, payload).stamped(node));
                    }
                }
                Action::SubmitIc { bits } => {
                    self.record(TraceEvent::IcSubmit { node, bits: bits_string(&bits) });
                    let Some(oracle) = self.oracle.as_mut() else {
                        self.errors.push(format!("node {node} submitted to an absent oracle"));
                        self.record(TraceEvent::Error { node: Some(node), message: "no oracle configured".into() });
                        continue;
                    };
                    if let Some(matrix) = oracle.submit(node, bits) {
                        self.record(TraceEvent::IcFinalize { rows: matrix.iter().map(|r| bits_string(r)).collect() });
                        let flat: Vec<bool> = matrix.concat();
                        for r in 0..self.cfg.n {
                            if self.faulty[r] {
                                continue;
                            }
                            self.push_envelope(MessageEnvelope {
                                msg_id: 0,
                                sender: r,
                                receiver: r,
                                instance: Instance::Ic,
                                classical_tag: ClassicalTag::IcPayload,
                                payload: Payload::Classical(flat.clone()),
                            });
                        }
                    }
                }
                Action::Note(note) => self.apply_note(node, &frame, note),
            }
        }
    }

    fn apply_note(&mut self, node: NodeId, frame: &LocalFrame, note: Note) {
        let event = match note {
            Note::Transition { instance, from, to, via } => TraceEvent::Transition { node, inst: instance, from, to, via },
            Note::CastOutput { instance, direction } => {
                let global = frame.to_global(&direction);
                self.cast_outputs[node][instance] = Some(global);
                TraceEvent::CastOutput { node, inst: instance, dir: global }
            }
            Note::Elected { k } => {
                self.elected[node] = Some(k);
                TraceEvent::Elect { node, k }
            }
            Note::Agreed { direction } => {
                let global = frame.to_global(&direction);
                self.agreed[node] = Some(global);
                TraceEvent::Agree { node, dir: global }
            }
            Note::Aborted { instance } => TraceEvent::Abort { node, inst: instance },
            Note::Discarded { instance, origin, tag, reason } => {
                TraceEvent::Discard { node, inst: instance, from: origin, tag, reason: reason.to_string() }
            }
            Note::Error { message } => {
                self.errors.push(format!("node {node}: {message}"));
                TraceEvent::Error { node: Some(node), message }
            }
        };
        self.record(event);
    }

    fn poll_faulty(&mut self) -> Result<(), SimError> {
        for idx in 0..self.adversary.strategies.len() {
            let start = self.cursors[idx];
            let end = self.envelopes.len();
            let (node, strategy) = &mut self.adversary.strategies[idx];
            let node = *node;
            let view = AdversaryView {
                n: self.cfg.n,
                delta: self.cfg.estimation.delta,
                qubits_per_axis: self.cfg.estimation.qubits_per_axis,
                faulty: &self.faulty,
                instances: &self.cfg.instances,
                fresh: &self.envelopes[start..end],
                progress: &self.progress,
                deliveries: self.scheduler.delivered_count(),
            };
            let emitted = strategy.on_event(node, &view, &mut self.adversary.memory, &mut self.adversary_rng);
            let name = strategy.name();
            self.cursors[idx] = end;
            for env in emitted {
                self.validate_faulty(node, name, &env)?;
                let env = match env.payload {
                    Payload::Quantum(mut q) => {
                        q.corrupted = true;
                        MessageEnvelope { payload: Payload::Quantum(q), ..env }
                    }
                    Payload::Classical(_) => env,
                };
                self.push_envelope(env.stamped(node));
            }
        }
        Ok(())
    }

    fn validate_faulty(&self, node: NodeId, strategy: &str, env: &MessageEnvelope) -> Result<(), SimError> {
        let reason = if env.receiver >= self.cfg.n {
            Some(format!("receiver {} out of range", env.receiver))
        } else if !env.is_well_formed() {
            Some("tag and payload kinds disagree".to_string())
        } else {
            match env.instance {
                Instance::Ic => Some("interactive-consistency traffic is handled by the oracle".to_string()),
                Instance::Cast(j) if !self.cfg.instances.contains(&j) => Some(format!("unknown instance {j}")),
                Instance::Cast(_) => None,
            }
        };
        match reason {
            Some(reason) => Err(SimError::MalformedEnvelope { node, strategy: strategy.to_string(), reason }),
            None => Ok(()),
        }
    }

    /// Gives faulty nodes their send opportunity and lets the scheduler pick.
    pub fn step(&mut self) -> Result<StepOutcome, SimError> {
        self.start();
        self.poll_faulty()?;
        if self.scheduler.is_empty() {
            return Ok(StepOutcome::Quiescent);
        }
        let decision = {
            let view = SchedulerView {
                state: &self.scheduler,
                envelopes: &self.envelopes,
                faulty: &self.faulty,
                progress: &self.progress,
                n: self.cfg.n,
                delta: self.cfg.estimation.delta,
            };
            self.adversary.policy.choose(&view, &mut self.adversary.memory, &mut self.scheduler_rng)
        };
        let envelopes = &self.envelopes;
        let faulty = &self.faulty;
        self.scheduler.check(decision, |id| faulty[envelopes[id as usize].sender])?;
        match decision {
            Decision::Deliver(id) => {
                self.deliver(id);
                Ok(StepOutcome::Delivered(id))
            }
            Decision::Drop(id) => {
                self.scheduler.remove_dropped(id);
                self.stats.drops += 1;
                let env = &self.envelopes[id as usize];
                let event = TraceEvent::Drop {
                    msg: id,
                    from: env.sender,
                    to: env.receiver,
                    tag: env.classical_tag,
                    inst: env.instance,
                };
                self.record(event);
                Ok(StepOutcome::Dropped(id))
            }
        }
    }

    /// Pending envelope ids, oldest first.
    pub fn pending_ids(&self) -> Vec<MsgId> {
        self.scheduler.pending().iter().copied().collect()
    }

    /// Delivers a specific pending envelope, bypassing the policy but not the
    /// skip bound.
    pub fn deliver_now(&mut self, id: MsgId) -> Result<(), SimError> {
        self.start();
        self.poll_faulty()?;
        let envelopes = &self.envelopes;
        let faulty = &self.faulty;
        self.scheduler.check(Decision::Deliver(id), |m| faulty[envelopes[m as usize].sender])?;
        self.deliver(id);
        Ok(())
    }

    fn deliver(&mut self, id: MsgId) {
        self.scheduler.remove_delivered(id);
        self.stats.deliveries += 1;
        let env = &self.envelopes[id as usize];
        let (sender, receiver, instance, tag) = (env.sender, env.receiver, env.instance, env.classical_tag);
        let digest = if self.trace.is_some() { digest_string(env.payload_digest()) } else { String::new() };
        let frame = self.nodes[receiver].frame;
        let body = match &env.payload {
            Payload::Quantum(q) => {
                let q = *q;
                let got = ted_receive(&q, &frame, &mut self.channel_rng, &self.cfg.estimation);
                let err = distance(&q.true_direction_global, &frame.to_global(&got.direction));
                if !self.faulty[sender] {
                    self.stats.correct_links += 1;
                    if err > self.cfg.estimation.delta {
                        self.stats.bad_links += 1;
                    }
                    self.stats.max_link_error = self.stats.max_link_error.max(err);
                }
                self.record(TraceEvent::Deliver { msg: id, from: sender, to: receiver, tag, inst: instance, digest, err: Some(err) });
                if got.channel_failure {
                    self.stats.channel_failures += 1;
                    self.record(TraceEvent::ChannelFailure { msg: id, node: receiver });
                }
                let tag = tag.direction_tag().expect("quantum payloads carry direction tags");
                IncomingBody::Direction { tag, direction: got.direction }
            }
            Payload::Classical(bits) => {
                let n = self.cfg.n;
                let matrix: Vec<Vec<bool>> = bits.chunks(n).map(|row| row.to_vec()).collect();
                self.record(TraceEvent::Deliver { msg: id, from: sender, to: receiver, tag, inst: instance, digest, err: None });
                IncomingBody::IcResult(matrix)
            }
        };
        let msg = Incoming { origin: sender, instance, body };
        if let Some(p) = self.processes[receiver].as_mut() {
            let mut out = Outbox::default();
            p.on_deliver(msg, &mut out);
            self.apply(receiver, out);
        }
    }

    fn finish(&mut self, reason: EndReason) {
        let deliveries = self.stats.deliveries;
        self.record(TraceEvent::End { reason, deliveries });
    }

    /// Steps until `predicate` holds or the network is quiescent. Exceeding
    /// `max_events` deliveries yields `Timeout`; any error is also closed in
    /// the trace.
    pub fn run_until<P: FnMut(&World) -> bool>(&mut self, mut predicate: P, max_events: u64) -> Result<EndReason, SimError> {
        self.start();
        loop {
            if predicate(self) {
                self.finish(EndReason::Predicate);
                return Ok(EndReason::Predicate);
            }
            if self.stats.deliveries >= max_events {
                self.finish(EndReason::Timeout);
                return Err(SimError::Timeout(max_events));
            }
            match self.step() {
                Ok(StepOutcome::Quiescent) => {
                    self.finish(EndReason::Quiescent);
                    return Ok(EndReason::Quiescent);
                }
                Ok(_) => {}
                Err(e) => {
                    self.record(TraceEvent::Error { node: None, message: e.to_string() });
                    self.finish(EndReason::Aborted);
                    return Err(e);
                }
            }
        }
    }

    /// Canonical 128-bit digest of everything that determines the future:
    /// node states, oracle state and the pending multiset (without ids).
    pub fn state_digest(&self) -> [u8; 16] {
        let mut buf = Vec::with_capacity(1024);
        for p in &self.processes {
            match p {
                Some(p) => {
                    buf.push(1);
                    p.digest(&mut buf);
                }
                None => buf.push(0),
            }
        }
        if let Some(o) = &self.oracle {
            o.digest(&mut buf);
        }
        let mut pending: Vec<(usize, usize, u64, u8, u64)> = self
            .scheduler
            .pending()
            .iter()
            .map(|&id| {
                let e = &self.envelopes[id as usize];
                let inst = match e.instance {
                    Instance::Cast(j) => j as u64,
                    Instance::Ic => u64::MAX,
                };
                (e.receiver, e.sender, inst, e.classical_tag as u8, e.payload_digest())
            })
            .collect();
        pending.sort_unstable();
        for (r, s, inst, tag, d) in pending {
            buf.extend_from_slice(&(r as u64).to_le_bytes());
            buf.extend_from_slice(&(s as u64).to_le_bytes());
            buf.extend_from_slice(&inst.to_le_bytes());
            buf.push(tag);
            buf.extend_from_slice(&d.to_le_bytes());
        }
        let hash = Sha256::digest(&buf);
        let mut out = [0u8; 16];
        out.copy_from_slice(&hash[..16]);
        out
    }
}

impl MessageEnvelope {
    fn stamped(mut self, sender: NodeId) -> Self {
        self.sender = sender;
        self
    }
}
