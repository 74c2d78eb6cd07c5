//! Reliable broadcast of a direction.
//!
//! Epochs: 0 (sender only) sends `init`; 1 waits for `init` or the joint
//! echo/ready condition; 2 waits for a large echo cluster or the joint
//! condition; 3 waits for a large ready cluster and outputs its center.

use crate::geometry::{distance, find_cluster, DirTag, NodeId, TagSet, TaggedDirection, UnitVector, EPS};
use crate::simnet::{Action, Branch, Instance, Note, Outbox};

/// Network size, fault bound and channel accuracy shared by every instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArCastParams {
    pub n: usize,
    pub t: usize,
    pub delta: f64,
}

impl ArCastParams {
    /// Echo cluster size that triggers `ready1`.
    pub fn echo_quorum(&self) -> usize {
        self.n - self.t
    }

    /// Echo cluster size of the joint condition.
    pub fn joint_echo_quorum(&self) -> usize {
        self.n.saturating_sub(2 * self.t).max(1)
    }

    /// Ready cluster size of the joint condition.
    pub fn joint_ready_quorum(&self) -> usize {
        self.t + 1
    }

    /// Ready cluster size that triggers the output.
    pub fn output_quorum(&self) -> usize {
        self.n - self.t
    }

    pub fn echo_diameter(&self) -> f64 {
        4.0 * self.delta
    }

    pub fn joint_ready_diameter(&self) -> f64 {
        10.0 * self.delta
    }

    pub fn joint_distance(&self) -> f64 {
        10.0 * self.delta
    }

    pub fn output_diameter(&self) -> f64 {
        20.0 * self.delta
    }
}

enum Fired {
    Send(DirTag, UnitVector),
    Output,
}

/// One node's state in one broadcast instance.
#[derive(Debug, Clone)]
pub struct ArCast {
    instance: NodeId,
    me: NodeId,
    params: ArCastParams,
    epoch: u8,
    init: Option<UnitVector>,
    store: Vec<TaggedDirection>,
    seen: Vec<bool>,
    per_tag: [usize; 4],
    sent: [bool; 4],
    arrivals: u64,
    output: Option<UnitVector>,
    halted: bool,
    aborted: bool,
}

impl ArCast {
    pub fn new(instance: NodeId, me: NodeId, params: ArCastParams) -> Self {
        ArCast {
            instance,
            me,
            params,
            epoch: if instance == me { 0 } else { 1 },
            init: None,
            store: Vec::new(),
            seen: vec![false; 4 * params.n],
            per_tag: [0; 4],
            sent: [false; 4],
            arrivals: 0,
            output: None,
            halted: false,
            aborted: false,
        }
    }

    pub fn instance(&self) -> NodeId {
        self.instance
    }

    pub fn is_sender(&self) -> bool {
        self.instance == self.me
    }

    pub fn epoch(&self) -> u8 {
        self.epoch
    }

    pub fn output(&self) -> Option<UnitVector> {
        self.output
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    pub fn has_sent(&self, tag: DirTag) -> bool {
        self.sent[tag.index()]
    }

    pub fn store(&self) -> &[TaggedDirection] {
        &self.store
    }

    /// Sender's Epoch 0: broadcast `(init, u)` and move to Epoch 1.
    pub fn start(&mut self, u: UnitVector, out: &mut Outbox) {
        if !self.is_sender() || self.epoch != 0 {
            return;
        }
        self.epoch = 1;
        self.note(out, Note::Transition { instance: self.instance, from: 0, to: 1, via: Branch::Start });
        self.send(DirTag::Init, u, out);
        self.evaluate(out);
    }

    /// Stops processing this instance; in-flight messages stay deliverable.
    pub fn abort(&mut self) {
        self.aborted = true;
    }

    pub fn deliver(&mut self, origin: NodeId, tag: DirTag, direction: UnitVector, out: &mut Outbox) {
        if self.halted || self.aborted {
            return;
        }
        if origin >= self.params.n {
            return self.discard(origin, tag, "unknown origin", out);
        }
        if tag == DirTag::Init && origin != self.instance {
            return self.discard(origin, tag, "init from a node other than the sender", out);
        }
        if !self.insert(origin, tag, direction) {
            return self.discard(origin, tag, "duplicate", out);
        }
        self.evaluate(out);
    }

    fn discard(&self, origin: NodeId, tag: DirTag, reason: &'static str, out: &mut Outbox) {
        out.note(Note::Discarded { instance: Instance::Cast(self.instance), origin, tag: tag.into(), reason });
    }

    fn note(&self, out: &mut Outbox, note: Note) {
        out.push(Action::Note(note));
    }

    fn insert(&mut self, origin: NodeId, tag: DirTag, direction: UnitVector) -> bool {
        let slot = origin * 4 + tag.index();
        if self.seen[slot] {
            return false;
        }
        self.seen[slot] = true;
        self.per_tag[tag.index()] += 1;
        if tag == DirTag::Init {
            self.init = Some(direction);
        }
        self.store.push(TaggedDirection { origin, tag, direction, arrival_order: self.arrivals });
        self.arrivals += 1;
        true
    }

    /// Send-to-all, then deliver the own copy immediately.
    fn send(&mut self, tag: DirTag, direction: UnitVector, out: &mut Outbox) {
        debug_assert!(!self.sent[tag.index()], "tag sent twice");
        self.sent[tag.index()] = true;
        out.push(Action::Broadcast { instance: self.instance, tag, direction });
        self.insert(self.me, tag, direction);
    }

    /// Each (self-)delivery may fire at most one transition; a transition's
    /// own self-delivery counts as the next delivery.
    fn evaluate(&mut self, out: &mut Outbox) {
        while let Some(fired) = self.try_fire(out) {
            match fired {
                Fired::Send(tag, direction) => self.send(tag, direction, out),
                Fired::Output => break,
            }
        }
    }

    fn try_fire(&mut self, out: &mut Outbox) -> Option<Fired> {
        let p = self.params;
        match self.epoch {
            1 => {
                if let Some(u) = self.init {
                    self.epoch = 2;
                    self.note(out, Note::Transition { instance: self.instance, from: 1, to: 2, via: Branch::Init });
                    return Some(Fired::Send(DirTag::Echo, u));
                }
                let w = self.joint()?;
                self.epoch = 3;
                self.note(out, Note::Transition { instance: self.instance, from: 1, to: 3, via: Branch::Joint });
                Some(Fired::Send(DirTag::Ready2, w))
            }
            2 => {
                if self.per_tag[DirTag::Echo.index()] >= p.echo_quorum() {
                    if let Some(c) = find_cluster(&self.store, TagSet::ECHO, p.echo_diameter(), p.echo_quorum()) {
                        self.epoch = 3;
                        self.note(out, Note::Transition { instance: self.instance, from: 2, to: 3, via: Branch::EchoCluster });
                        return Some(Fired::Send(DirTag::Ready1, c.center));
                    }
                }
                let w = self.joint()?;
                self.epoch = 3;
                self.note(out, Note::Transition { instance: self.instance, from: 2, to: 3, via: Branch::Joint });
                Some(Fired::Send(DirTag::Ready2, w))
            }
            3 => {
                if self.ready_count() < p.output_quorum() {
                    return None;
                }
                let c = find_cluster(&self.store, TagSet::READY, p.output_diameter(), p.output_quorum())?;
                self.output = Some(c.center);
                self.halted = true;
                out.note(Note::CastOutput { instance: self.instance, direction: c.center });
                Some(Fired::Output)
            }
            _ => None,
        }
    }

    fn ready_count(&self) -> usize {
        self.per_tag[DirTag::Ready1.index()] + self.per_tag[DirTag::Ready2.index()]
    }

    /// Echo cluster of size `n − 2t` (4δ) whose center lies within 10δ of
    /// the center of a ready cluster of size `t + 1` (10δ). Returns the echo
    /// center.
    fn joint(&self) -> Option<UnitVector> {
        let p = self.params;
        if self.per_tag[DirTag::Echo.index()] < p.joint_echo_quorum() || self.ready_count() < p.joint_ready_quorum() {
            return None;
        }
        let echo = find_cluster(&self.store, TagSet::ECHO, p.echo_diameter(), p.joint_echo_quorum())?;
        let ready = find_cluster(&self.store, TagSet::READY, p.joint_ready_diameter(), p.joint_ready_quorum())?;
        (distance(&echo.center, &ready.center) <= p.joint_distance() + EPS).then_some(echo.center)
    }

    /// Canonical state encoding; a halted or aborted instance forgets its store.
    pub fn digest(&self, out: &mut Vec<u8>) {
        out.push(self.epoch);
        out.push(self.halted as u8 | (self.aborted as u8) << 1);
        if let Some(v) = self.output {
            for c in v.to_array() {
                out.extend_from_slice(&c.to_bits().to_le_bytes());
            }
        }
        if self.halted || self.aborted {
            return;
        }
        let mut entries: Vec<(NodeId, usize, [u64; 3])> = self
            .store
            .iter()
            .map(|td| (td.origin, td.tag.index(), td.direction.to_array().map(f64::to_bits)))
            .collect();
        entries.sort_unstable();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (origin, tag, bits) in entries {
            out.push(origin as u8);
            out.push(tag as u8);
            for b in bits {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, t: usize) -> ArCastParams {
        ArCastParams { n, t, delta: 0.02 }
    }

    fn broadcasts(out: &Outbox) -> Vec<(DirTag, UnitVector)> {
        out.actions
            .iter()
            .filter_map(|a| match a {
                Action::Broadcast { tag, direction, .. } => Some((*tag, *direction)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn thresholds_for_nine_nodes_two_faults() {
        let p = params(9, 2);
        assert_eq!(p.echo_quorum(), 7);
        assert_eq!(p.joint_echo_quorum(), 5);
        assert_eq!(p.joint_ready_quorum(), 3);
        assert_eq!(p.output_quorum(), 7);
    }

    #[test]
    fn sender_start_sends_init_then_echo() {
        let mut s = ArCast::new(0, 0, params(4, 0));
        let mut out = Outbox::default();
        s.start(UnitVector::Z, &mut out);
        assert_eq!(broadcasts(&out), vec![(DirTag::Init, UnitVector::Z), (DirTag::Echo, UnitVector::Z)]);
        assert_eq!(s.epoch(), 2);
        // Own init and own echo are both stored.
        assert_eq!(s.store().len(), 2);
    }

    #[test]
    fn happy_path_outputs_exact_direction() {
        let p = params(4, 0);
        let u = UnitVector::normalize(0.3, -0.2, 0.9).unwrap();
        let mut r = ArCast::new(0, 1, p);
        let mut out = Outbox::default();
        r.deliver(0, DirTag::Init, u, &mut out);
        assert_eq!(r.epoch(), 2);
        for j in [0, 2, 3] {
            r.deliver(j, DirTag::Echo, u, &mut out);
        }
        assert_eq!(r.epoch(), 3);
        assert!(r.has_sent(DirTag::Ready1));
        for j in [0, 2] {
            r.deliver(j, DirTag::Ready1, u, &mut out);
        }
        assert_eq!(r.output(), None);
        r.deliver(3, DirTag::Ready1, u, &mut out);
        assert_eq!(r.output(), Some(u));
        assert!(r.halted());
        assert_eq!(broadcasts(&out).len(), 2);
    }

    #[test]
    fn echoes_alone_never_produce_ready1_in_epoch_one() {
        let p = params(9, 2);
        let mut r = ArCast::new(0, 1, p);
        let mut out = Outbox::default();
        for j in 2..9 {
            r.deliver(j, DirTag::Echo, UnitVector::Z, &mut out);
        }
        assert_eq!(r.epoch(), 1);
        assert!(broadcasts(&out).is_empty());
    }

    #[test]
    fn joint_condition_sends_ready2_from_epoch_one() {
        let p = params(9, 2);
        let mut r = ArCast::new(0, 1, p);
        let mut out = Outbox::default();
        for j in 2..7 {
            r.deliver(j, DirTag::Echo, UnitVector::Z, &mut out);
        }
        let near = UnitVector::Z.rotate_about(&UnitVector::X, 0.1);
        for j in 2..4 {
            r.deliver(j, DirTag::Ready1, near, &mut out);
        }
        assert_eq!(r.epoch(), 1);
        r.deliver(4, DirTag::Ready2, near, &mut out);
        assert_eq!(r.epoch(), 3);
        assert_eq!(broadcasts(&out), vec![(DirTag::Ready2, UnitVector::Z)]);
        assert!(!r.has_sent(DirTag::Echo));
    }

    #[test]
    fn joint_condition_rejects_distant_ready_cluster() {
        let p = params(9, 2);
        let mut r = ArCast::new(0, 1, p);
        let mut out = Outbox::default();
        for j in 2..7 {
            r.deliver(j, DirTag::Echo, UnitVector::Z, &mut out);
        }
        // Ready cluster center 0.3 away, beyond 10δ = 0.2.
        let far = UnitVector::Z.rotate_about(&UnitVector::X, 0.3);
        for j in 2..5 {
            r.deliver(j, DirTag::Ready1, far, &mut out);
        }
        assert_eq!(r.epoch(), 1);
    }

    #[test]
    fn init_branch_wins_over_joint_branch() {
        let p = params(9, 2);
        let mut r = ArCast::new(0, 1, p);
        let mut out = Outbox::default();
        for j in 2..7 {
            r.deliver(j, DirTag::Echo, UnitVector::Z, &mut out);
        }
        for j in 2..4 {
            r.deliver(j, DirTag::Ready1, UnitVector::Z, &mut out);
        }
        // Both branches hold after this delivery; init goes first.
        let u = UnitVector::Z.rotate_about(&UnitVector::Y, 0.01);
        r.deliver(0, DirTag::Init, u, &mut out);
        assert_eq!(broadcasts(&out)[0], (DirTag::Echo, u));
        assert!(r.has_sent(DirTag::Echo));
    }

    #[test]
    fn duplicates_and_forged_init_are_discarded() {
        let mut r = ArCast::new(0, 1, params(4, 0));
        let mut out = Outbox::default();
        r.deliver(2, DirTag::Init, UnitVector::X, &mut out);
        r.deliver(2, DirTag::Echo, UnitVector::X, &mut out);
        r.deliver(2, DirTag::Echo, UnitVector::Y, &mut out);
        let discards = out.actions.iter().filter(|a| matches!(a, Action::Note(Note::Discarded { .. }))).count();
        assert_eq!(discards, 2);
        assert_eq!(r.store().len(), 1);
        assert_eq!(r.epoch(), 1);
    }

    #[test]
    fn aborted_instance_ignores_traffic() {
        let mut r = ArCast::new(0, 1, params(4, 0));
        r.abort();
        let mut out = Outbox::default();
        r.deliver(0, DirTag::Init, UnitVector::X, &mut out);
        assert!(out.actions.is_empty());
        assert_eq!(r.epoch(), 1);
    }
}
