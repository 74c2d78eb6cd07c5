use std::collections::BTreeSet;

use super::{MessageEnvelope, MsgId, PublicProgress, SimError};

/// Scheduler verdict for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Deliver(MsgId),
    /// Only envelopes sent by faulty nodes may be dropped.
    Drop(MsgId),
}

/// Counts of delivered message ids, for "how many younger envelopes were
/// delivered" queries.
#[derive(Debug, Clone, Default)]
struct Fenwick {
    tree: Vec<u32>,
    delivered: Vec<bool>,
    total: u64,
}

impl Fenwick {
    fn add(&mut self, id: MsgId) {
        let id = id as usize;
        if id >= self.delivered.len() {
            self.delivered.resize((id + 1).max(2 * self.delivered.len()).max(64), false);
            self.rebuild();
        }
        self.delivered[id] = true;
        self.total += 1;
        let mut i = id + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    fn rebuild(&mut self) {
        self.tree = vec![0; self.delivered.len() + 1];
        for (id, &d) in self.delivered.iter().enumerate() {
            if d {
                let mut i = id + 1;
                while i < self.tree.len() {
                    self.tree[i] += 1;
                    i += i & i.wrapping_neg();
                }
            }
        }
    }

    /// Delivered ids `<= id`.
    fn prefix(&self, id: MsgId) -> u64 {
        let mut i = (id as usize + 1).min(self.tree.len().saturating_sub(1));
        let mut sum = 0u64;
        while i > 0 {
            sum += self.tree[i] as u64;
            i -= i & i.wrapping_neg();
        }
        sum
    }

    fn greater_than(&self, id: MsgId) -> u64 {
        self.total - self.prefix(id)
    }
}

/// Pending envelopes and the skip accounting.
///
/// An envelope is skipped whenever an envelope sent after it is delivered
/// while it is still pending. The skip count of a pending envelope is thus
/// the number of delivered ids greater than its own, which is non-increasing
/// in the id: only the oldest pending correct-to-correct envelope can reach
/// the bound first.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    pending: BTreeSet<MsgId>,
    pending_correct: BTreeSet<MsgId>,
    /// Pending ids in arbitrary order, for O(1) uniform choice.
    unordered: Vec<MsgId>,
    slot: Vec<u32>,
    delivered_count: u64,
    fairness_bound: u64,
    delivered: Fenwick,
}

impl SchedulerState {
    pub fn new(fairness_bound: u64) -> Self {
        SchedulerState {
            pending: BTreeSet::new(),
            pending_correct: BTreeSet::new(),
            unordered: Vec::new(),
            slot: Vec::new(),
            delivered_count: 0,
            fairness_bound,
            delivered: Fenwick::default(),
        }
    }

    pub fn fairness_bound(&self) -> u64 {
        self.fairness_bound
    }

    pub fn delivered_count(&self) -> u64 {
        self.delivered_count
    }

    pub fn pending(&self) -> &BTreeSet<MsgId> {
        &self.pending
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// The `i`-th pending id in an unspecified but deterministic order.
    pub fn pending_at(&self, i: usize) -> MsgId {
        self.unordered[i]
    }

    pub fn pending_len(&self) -> usize {
        self.unordered.len()
    }

    pub(crate) fn enqueue(&mut self, id: MsgId, correct_to_correct: bool) {
        if self.slot.len() <= id as usize {
            self.slot.resize(id as usize + 1, u32::MAX);
        }
        self.slot[id as usize] = self.unordered.len() as u32;
        self.unordered.push(id);
        self.pending.insert(id);
        if correct_to_correct {
            self.pending_correct.insert(id);
        }
    }

    /// Skips accumulated by a pending envelope.
    pub fn skip_count(&self, id: MsgId) -> u64 {
        self.delivered.greater_than(id)
    }

    /// The envelope that must be delivered before anything younger, if any.
    pub fn forced(&self) -> Option<MsgId> {
        let &oldest = self.pending_correct.first()?;
        (self.skip_count(oldest) >= self.fairness_bound).then_some(oldest)
    }

    /// Oldest pending correct-to-correct envelope.
    pub fn oldest_correct(&self) -> Option<MsgId> {
        self.pending_correct.first().copied()
    }

    pub(crate) fn check(&self, decision: Decision, faulty_origin: impl Fn(MsgId) -> bool) -> Result<(), SimError> {
        match decision {
            Decision::Deliver(id) => {
                if !self.pending.contains(&id) {
                    return Err(SimError::InvalidDecision(id));
                }
                if let Some(f) = self.forced() {
                    if id > f {
                        return Err(SimError::FairnessViolation { msg_id: f, bound: self.fairness_bound });
                    }
                }
                Ok(())
            }
            Decision::Drop(id) => {
                if self.pending.contains(&id) && faulty_origin(id) {
                    Ok(())
                } else {
                    Err(SimError::InvalidDecision(id))
                }
            }
        }
    }

    fn unlist(&mut self, id: MsgId) {
        let at = self.slot[id as usize] as usize;
        self.unordered.swap_remove(at);
        if let Some(&moved) = self.unordered.get(at) {
            self.slot[moved as usize] = at as u32;
        }
        self.slot[id as usize] = u32::MAX;
    }

    pub(crate) fn remove_delivered(&mut self, id: MsgId) {
        self.unlist(id);
        self.pending.remove(&id);
        self.pending_correct.remove(&id);
        self.delivered.add(id);
        self.delivered_count += 1;
    }

    pub(crate) fn remove_dropped(&mut self, id: MsgId) {
        self.unlist(id);
        self.pending.remove(&id);
    }
}

/// What a scheduler policy may look at: every pending envelope in full.
pub struct SchedulerView<'a> {
    pub state: &'a SchedulerState,
    pub envelopes: &'a [MessageEnvelope],
    pub faulty: &'a [bool],
    pub progress: &'a PublicProgress,
    pub n: usize,
    pub delta: f64,
}

impl<'a> SchedulerView<'a> {
    pub fn envelope(&self, id: MsgId) -> &'a MessageEnvelope {
        &self.envelopes[id as usize]
    }

    pub fn pending(&self) -> impl DoubleEndedIterator<Item = &'a MessageEnvelope> + '_ {
        self.state.pending.iter().map(move |&id| &self.envelopes[id as usize])
    }

    pub fn forced(&self) -> Option<MsgId> {
        self.state.forced()
    }

    pub fn is_faulty(&self, node: usize) -> bool {
        self.faulty[node]
    }

    /// Whether delivering `id` now respects the skip bound.
    pub fn allowed(&self, id: MsgId) -> bool {
        self.state.forced().is_none_or(|f| id <= f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skip_counts_track_younger_deliveries() {
        let mut s = SchedulerState::new(2);
        for id in 0..5 {
            s.enqueue(id, true);
        }
        assert_eq!(s.skip_count(0), 0);
        s.remove_delivered(3);
        s.remove_delivered(4);
        assert_eq!(s.skip_count(0), 2);
        assert_eq!(s.skip_count(2), 2);
        assert_eq!(s.forced(), Some(0));
        assert!(s.check(Decision::Deliver(1), |_| false).is_err());
        assert!(s.check(Decision::Deliver(0), |_| false).is_ok());
        s.remove_delivered(0);
        // 1 is now the oldest and has been overtaken twice as well.
        assert_eq!(s.forced(), Some(1));
    }

    #[test]
    fn drops_only_for_faulty_origin() {
        let mut s = SchedulerState::new(10);
        s.enqueue(0, true);
        s.enqueue(1, false);
        assert!(s.check(Decision::Drop(0), |id| id == 1).is_err());
        assert!(s.check(Decision::Drop(1), |id| id == 1).is_ok());
        assert!(s.check(Decision::Deliver(7), |_| false).is_err());
    }

    #[test]
    fn unordered_view_matches_pending_set() {
        let mut s = SchedulerState::new(100);
        for id in 0..10 {
            s.enqueue(id, id % 2 == 0);
        }
        for id in [3, 0, 9, 4] {
            s.remove_delivered(id);
        }
        s.remove_dropped(5);
        let mut listed: Vec<_> = (0..s.pending_len()).map(|i| s.pending_at(i)).collect();
        listed.sort();
        assert_eq!(listed, s.pending().iter().copied().collect::<Vec<_>>());
    }

    #[test]
    fn fenwick_grows_past_initial_capacity() {
        let mut f = Fenwick::default();
        for id in (0..1000).step_by(3) {
            f.add(id);
        }
        let brute = |x: u64| (0..1000).step_by(3).filter(|&i| i > x).count() as u64;
        for x in [0, 1, 2, 500, 998, 999, 5000] {
            assert_eq!(f.greater_than(x), brute(x));
        }
    }
}
