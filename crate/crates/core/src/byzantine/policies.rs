use std::collections::BTreeSet;

use rand::{Rng, RngCore};

use super::strategies::default_split;
use crate::geometry::NodeId;
use crate::simnet::{AdversaryMemory, ClassicalTag, Decision, Instance, MessageEnvelope, MsgId, SchedulerPolicy, SchedulerView};

/// Pending envelopes sorted into priority classes as they appear. Only the
/// owning policy delivers, so removal at decision time keeps it exact.
#[derive(Debug, Clone, Default)]
struct Buckets {
    cursor: usize,
    sets: Vec<BTreeSet<MsgId>>,
}

impl Buckets {
    fn sync(&mut self, view: &SchedulerView<'_>, mut classify: impl FnMut(&MessageEnvelope) -> usize) {
        while self.cursor < view.envelopes.len() {
            let id = self.cursor as MsgId;
            self.cursor += 1;
            if !view.state.pending().contains(&id) {
                continue;
            }
            let class = classify(&view.envelopes[id as usize]);
            if self.sets.len() <= class {
                self.sets.resize(class + 1, BTreeSet::new());
            }
            self.sets[class].insert(id);
        }
    }

    fn remove(&mut self, id: MsgId) {
        for s in &mut self.sets {
            if s.remove(&id) {
                return;
            }
        }
    }

    fn last_in(&self, class: usize) -> Option<MsgId> {
        self.sets.get(class)?.last().copied()
    }

    /// Oldest envelope of the highest-priority (lowest-index) non-empty class.
    fn first_by_priority(&self) -> Option<MsgId> {
        self.sets.iter().find_map(|s| s.first().copied())
    }

    fn take(&mut self, decision: Decision) -> Decision {
        let (Decision::Deliver(id) | Decision::Drop(id)) = decision;
        self.remove(id);
        decision
    }
}

/// Delivers in send order.
#[derive(Debug, Clone, Default)]
pub struct Fifo;

impl SchedulerPolicy for Fifo {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn choose(&mut self, view: &SchedulerView<'_>, _: &mut AdversaryMemory, _: &mut dyn RngCore) -> Decision {
        Decision::Deliver(*view.state.pending().first().expect("scheduler is called with pending envelopes"))
    }

    fn clone_box(&self) -> Box<dyn SchedulerPolicy> {
        Box::new(self.clone())
    }
}

/// Uniformly random pending envelope; faulty-origin picks are dropped with
/// probability `drop_probability`.
#[derive(Debug, Clone)]
pub struct RandomOrder {
    drop_probability: f64,
}

impl RandomOrder {
    pub fn new(drop_probability: f64) -> Self {
        RandomOrder { drop_probability }
    }
}

impl SchedulerPolicy for RandomOrder {
    fn name(&self) -> &'static str {
        "random"
    }

    fn choose(&mut self, view: &SchedulerView<'_>, _: &mut AdversaryMemory, rng: &mut dyn RngCore) -> Decision {
        if let Some(f) = view.forced() {
            return Decision::Deliver(f);
        }
        let id = view.state.pending_at(rng.random_range(0..view.state.pending_len()));
        if view.is_faulty(view.envelope(id).sender) && rng.random::<f64>() < self.drop_probability {
            Decision::Drop(id)
        } else {
            Decision::Deliver(id)
        }
    }

    fn clone_box(&self) -> Box<dyn SchedulerPolicy> {
        Box::new(self.clone())
    }
}

/// Round-robin over instances; newest pending envelope first within each.
#[derive(Debug, Clone, Default)]
pub struct LifoPerInstance {
    buckets: Buckets,
    next: usize,
}

impl SchedulerPolicy for LifoPerInstance {
    fn name(&self) -> &'static str {
        "lifo_per_instance"
    }

    fn choose(&mut self, view: &SchedulerView<'_>, _: &mut AdversaryMemory, _: &mut dyn RngCore) -> Decision {
        let n = view.n;
        self.buckets.sync(view, |e| match e.instance {
            Instance::Cast(j) => j,
            Instance::Ic => n,
        });
        if let Some(f) = view.forced() {
            return self.buckets.take(Decision::Deliver(f));
        }
        for k in 0..=n {
            let class = (self.next + k) % (n + 1);
            if let Some(id) = self.buckets.last_in(class) {
                self.next = (class + 1) % (n + 1);
                return self.buckets.take(Decision::Deliver(id));
            }
        }
        unreachable!("scheduler is called with pending envelopes")
    }

    fn clone_box(&self) -> Box<dyn SchedulerPolicy> {
        Box::new(self.clone())
    }
}

/// Holds back every init addressed to one correct node (the highest id
/// unless chosen) for as long as anything else is pending or fairness
/// forces it; everything else goes in send order.
#[derive(Debug, Clone, Default)]
pub struct TargetedStarvation {
    target: Option<NodeId>,
    buckets: Buckets,
}

impl TargetedStarvation {
    pub fn new(target: Option<NodeId>) -> Self {
        TargetedStarvation { target, buckets: Buckets::default() }
    }

    pub fn target(&self) -> Option<NodeId> {
        self.target
    }
}

impl SchedulerPolicy for TargetedStarvation {
    fn name(&self) -> &'static str {
        "targeted_starvation"
    }

    fn choose(&mut self, view: &SchedulerView<'_>, _: &mut AdversaryMemory, _: &mut dyn RngCore) -> Decision {
        let target = *self.target.get_or_insert_with(|| (0..view.n).rev().find(|&i| !view.is_faulty(i)).unwrap_or(0));
        self.buckets.sync(view, |e| usize::from(e.receiver == target && e.classical_tag == ClassicalTag::Init));
        if let Some(f) = view.forced() {
            return self.buckets.take(Decision::Deliver(f));
        }
        let id = self.buckets.first_by_priority().expect("scheduler is called with pending envelopes");
        self.buckets.take(Decision::Deliver(id))
    }

    fn clone_box(&self) -> Box<dyn SchedulerPolicy> {
        Box::new(self.clone())
    }
}

/// Pushes the two halves of the correct nodes apart: faulty traffic goes
/// first, then everything for the first group, while the second group waits.
/// Within the second group ready messages are held back longest so its
/// members see echoes (and faulty readies) before correct readies.
#[derive(Debug, Clone, Default)]
pub struct AdaptiveSplitter {
    buckets: Buckets,
}

impl SchedulerPolicy for AdaptiveSplitter {
    fn name(&self) -> &'static str {
        "adaptive_splitter"
    }

    fn choose(&mut self, view: &SchedulerView<'_>, memory: &mut AdversaryMemory, _: &mut dyn RngCore) -> Decision {
        let groups = memory.split.get_or_insert_with(|| default_split(view.faulty)).clone();
        let faulty = view.faulty;
        self.buckets.sync(view, |e| {
            if faulty[e.sender] {
                0
            } else if groups[0].contains(&e.receiver) {
                1
            } else if matches!(e.classical_tag, ClassicalTag::Ready1 | ClassicalTag::Ready2) {
                3
            } else {
                2
            }
        });
        if let Some(f) = view.forced() {
            return self.buckets.take(Decision::Deliver(f));
        }
        let id = self.buckets.first_by_priority().expect("scheduler is called with pending envelopes");
        self.buckets.take(Decision::Deliver(id))
    }

    fn clone_box(&self) -> Box<dyn SchedulerPolicy> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_priority_and_lifo() {
        let mut b = Buckets { sets: vec![BTreeSet::from([5, 7]), BTreeSet::from([1, 2])], ..Default::default() };
        assert_eq!(b.first_by_priority(), Some(5));
        assert_eq!(b.last_in(1), Some(2));
        b.take(Decision::Deliver(5));
        b.take(Decision::Drop(7));
        assert_eq!(b.first_by_priority(), Some(1));
    }
}
