use std::collections::BTreeSet;

use rand::{Rng, RngCore};

use crate::estimation::QuantumPayload;
use crate::geometry::{random_unit_vector, DirTag, NodeId, UnitVector};
use crate::simnet::{AdversaryMemory, AdversaryView, FaultStrategy, Instance, MessageEnvelope, Payload};

/// A direction message from a faulty node; the state is its free choice.
fn forged(view: &AdversaryView<'_>, receiver: NodeId, instance: NodeId, tag: DirTag, global: UnitVector) -> MessageEnvelope {
    MessageEnvelope::direction(
        receiver,
        instance,
        tag,
        QuantumPayload { true_direction_global: global, qubits_per_axis: view.qubits_per_axis, corrupted: true },
    )
}

/// Rotation angle that moves a unit vector by chord length `chord`.
fn angle_for_chord(chord: f64) -> f64 {
    2.0 * (chord / 2.0).clamp(-1.0, 1.0).asin()
}

/// Correct-origin direction envelopes among `fresh`.
fn correct_directions<'a>(view: &'a AdversaryView<'_>) -> impl Iterator<Item = (NodeId, DirTag, UnitVector)> + 'a {
    view.fresh.iter().filter_map(|e| match (&e.payload, e.instance) {
        (Payload::Quantum(q), Instance::Cast(j)) if !view.faulty[e.sender] => {
            Some((j, e.classical_tag.direction_tag()?, q.true_direction_global))
        }
        _ => None,
    })
}

/// Never sends anything.
#[derive(Debug, Clone, Default)]
pub struct Silent;

impl FaultStrategy for Silent {
    fn name(&self) -> &'static str {
        "silent"
    }

    fn on_event(&mut self, _: NodeId, _: &AdversaryView<'_>, _: &mut AdversaryMemory, _: &mut dyn RngCore) -> Vec<MessageEnvelope> {
        Vec::new()
    }

    fn clone_box(&self) -> Box<dyn FaultStrategy> {
        Box::new(self.clone())
    }
}

/// Uniformly random directions under random tags, each (receiver, instance,
/// tag) at most once, emitted at a random trickle.
#[derive(Debug, Clone)]
pub struct RandomNoise {
    rate: f64,
    backlog: Option<Vec<(NodeId, NodeId, DirTag)>>,
}

impl RandomNoise {
    pub fn new(rate: f64) -> Self {
        RandomNoise { rate, backlog: None }
    }
}

impl FaultStrategy for RandomNoise {
    fn name(&self) -> &'static str {
        "random_noise"
    }

    fn on_event(&mut self, _me: NodeId, view: &AdversaryView<'_>, _: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Vec<MessageEnvelope> {
        let backlog = self.backlog.get_or_insert_with(|| {
            let mut all = Vec::new();
            for r in view.correct_nodes() {
                for &j in view.instances {
                    for tag in DirTag::ALL {
                        all.push((r, j, tag));
                    }
                }
            }
            all
        });
        if backlog.is_empty() || rng.random::<f64>() >= self.rate {
            return Vec::new();
        }
        let pick = rng.random_range(0..backlog.len());
        let (r, j, tag) = backlog.swap_remove(pick);
        let dir = random_unit_vector(rng);
        vec![forged(view, r, j, tag, dir)]
    }

    fn clone_box(&self) -> Box<dyn FaultStrategy> {
        Box::new(self.clone())
    }
}

/// As a sender: a different init direction for every correct receiver,
/// fanned over `spread` radians. As a relay: echoes each observed correct
/// echo/ready with alternating ±`offset` chord perturbations.
#[derive(Debug, Clone)]
pub struct Equivocator {
    spread: f64,
    offset_deltas: f64,
    started: bool,
    relayed: BTreeSet<(NodeId, DirTag)>,
}

impl Equivocator {
    pub fn new(spread: f64, offset_deltas: f64) -> Self {
        Equivocator { spread, offset_deltas, started: false, relayed: BTreeSet::new() }
    }
}

impl FaultStrategy for Equivocator {
    fn name(&self) -> &'static str {
        "equivocator"
    }

    fn on_event(&mut self, me: NodeId, view: &AdversaryView<'_>, _: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Vec<MessageEnvelope> {
        let mut out = Vec::new();
        let correct: Vec<NodeId> = view.correct_nodes().collect();
        if !self.started {
            self.started = true;
            if view.instances.contains(&me) {
                let base = random_unit_vector(rng);
                let axis = base.orthogonal().rotate_about(&base, rng.random_range(0.0..std::f64::consts::TAU));
                let steps = correct.len().saturating_sub(1).max(1) as f64;
                for (i, &r) in correct.iter().enumerate() {
                    let dir = base.rotate_about(&axis, self.spread * i as f64 / steps);
                    out.push(forged(view, r, me, DirTag::Init, dir));
                }
            }
        }
        let turn = angle_for_chord(self.offset_deltas * view.delta);
        for (j, tag, d) in correct_directions(view) {
            if tag == DirTag::Init || !self.relayed.insert((j, tag)) {
                continue;
            }
            let axis = d.orthogonal();
            for (i, &r) in correct.iter().enumerate() {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                out.push(forged(view, r, j, tag, d.rotate_about(&axis, sign * turn)));
            }
        }
        out
    }

    fn clone_box(&self) -> Box<dyn FaultStrategy> {
        Box::new(self.clone())
    }
}

/// Tries to make correct nodes leave Epoch 1 through the joint condition:
/// as soon as a correct echo appears it backs it with a ready2 and an echo of
/// the same direction. As a sender it gives init to only half of the correct
/// nodes.
#[derive(Debug, Clone, Default)]
pub struct Ready2Forcer {
    started: bool,
    forced: BTreeSet<NodeId>,
}

impl FaultStrategy for Ready2Forcer {
    fn name(&self) -> &'static str {
        "ready2_forcer"
    }

    fn on_event(&mut self, me: NodeId, view: &AdversaryView<'_>, _: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Vec<MessageEnvelope> {
        let mut out = Vec::new();
        let correct: Vec<NodeId> = view.correct_nodes().collect();
        if !self.started {
            self.started = true;
            if view.instances.contains(&me) {
                let base = random_unit_vector(rng);
                for &r in &correct[..correct.len() / 2] {
                    out.push(forged(view, r, me, DirTag::Init, base));
                }
            }
        }
        for (j, tag, d) in correct_directions(view) {
            if tag != DirTag::Echo || !self.forced.insert(j) {
                continue;
            }
            for &r in &correct {
                out.push(forged(view, r, j, DirTag::Echo, d));
                out.push(forged(view, r, j, DirTag::Ready2, d));
            }
        }
        out
    }

    fn clone_box(&self) -> Box<dyn FaultStrategy> {
        Box::new(self.clone())
    }
}

/// Splits the correct nodes into two groups (shared with every colluder and
/// the scheduler) and feeds each group its own candidate direction per
/// instance, the candidates `separation_deltas · δ` apart.
#[derive(Debug, Clone)]
pub struct Colluder {
    separation_deltas: f64,
    started: bool,
    sent: BTreeSet<(NodeId, DirTag)>,
}

impl Colluder {
    pub fn new(separation_deltas: f64) -> Self {
        Colluder { separation_deltas, started: false, sent: BTreeSet::new() }
    }

    fn candidates(&self, view: &AdversaryView<'_>, memory: &mut AdversaryMemory, j: NodeId, reference: UnitVector) -> [UnitVector; 2] {
        *memory.candidates.entry(j).or_insert_with(|| {
            memory.reference.insert(j, reference);
            let half = angle_for_chord(self.separation_deltas * view.delta) / 2.0;
            let axis = reference.orthogonal();
            [reference.rotate_about(&axis, half), reference.rotate_about(&axis, -half)]
        })
    }
}

pub(crate) fn default_split(view_faulty: &[bool]) -> [Vec<NodeId>; 2] {
    let correct: Vec<NodeId> = (0..view_faulty.len()).filter(|&i| !view_faulty[i]).collect();
    let half = correct.len().div_ceil(2);
    [correct[..half].to_vec(), correct[half..].to_vec()]
}

impl FaultStrategy for Colluder {
    fn name(&self) -> &'static str {
        "colluder"
    }

    fn on_event(&mut self, me: NodeId, view: &AdversaryView<'_>, memory: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Vec<MessageEnvelope> {
        let mut out = Vec::new();
        let groups = memory.split.get_or_insert_with(|| default_split(view.faulty)).clone();
        if !self.started {
            self.started = true;
            if view.instances.contains(&me) {
                let base = random_unit_vector(rng);
                let cand = self.candidates(view, memory, me, base);
                for (g, group) in groups.iter().enumerate() {
                    for &r in group {
                        out.push(forged(view, r, me, DirTag::Init, cand[g]));
                    }
                }
            }
        }
        for (j, _, d) in correct_directions(view) {
            let cand = self.candidates(view, memory, j, d);
            for send in [DirTag::Echo, DirTag::Ready1] {
                if !self.sent.insert((j, send)) {
                    continue;
                }
                for (g, group) in groups.iter().enumerate() {
                    for &r in group {
                        out.push(forged(view, r, j, send, cand[g]));
                    }
                }
            }
        }
        out
    }

    fn clone_box(&self) -> Box<dyn FaultStrategy> {
        Box::new(self.clone())
    }
}
