//! Exhaustive exploration of delivery interleavings.
//!
//! Depth-first over every choice of the next pending envelope, merging
//! branches that reach the same state digest. The digest covers node and
//! oracle state and the pending multiset, not adversary state, so this is
//! only exact for networks whose faulty nodes (if any) are silent.
//!
//! With a depth limit, every distinct state reached after `max_depth`
//! deliveries is completed by the world's own scheduler policy instead.

use std::collections::HashSet;

use crate::simnet::{SimError, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreLimits {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        ExploreLimits { max_states: 1_000_000, max_depth: usize::MAX }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExploreReport {
    /// Distinct states visited.
    pub states: usize,
    /// Distinct quiescent states reached.
    pub terminals: usize,
    /// Depth-limited states handed to the scheduler policy.
    pub completed: usize,
    /// Longest delivery sequence seen.
    pub max_depth: usize,
    /// The state budget ran out before the space was covered.
    pub truncated: bool,
    /// Messages from the terminal check, at most one per terminal.
    pub failures: Vec<String>,
}

/// Visits every reachable state within `limits`. `terminal` is called on
/// each distinct quiescent world (with its trace closed) and returns a
/// failure description, if any.
pub fn explore<F>(root: World, limits: ExploreLimits, mut terminal: F) -> Result<ExploreReport, SimError>
where
    F: FnMut(World) -> Option<String>,
{
    let mut report = ExploreReport::default();
    let mut seen = HashSet::new();
    let mut root = root;
    root.start();
    let mut stack = vec![(root, 0usize)];
    while let Some((world, depth)) = stack.pop() {
        if !seen.insert(world.state_digest()) {
            continue;
        }
        report.states += 1;
        report.max_depth = report.max_depth.max(depth);
        let pending = world.pending_ids();
        if pending.is_empty() || depth >= limits.max_depth {
            if pending.is_empty() {
                report.terminals += 1;
            } else {
                report.completed += 1;
            }
            let mut done = world;
            done.run_until(|_| false, u64::MAX)?;
            if let Some(msg) = terminal(done) {
                report.failures.push(msg);
            }
            continue;
        }
        if report.states >= limits.max_states {
            report.truncated = true;
            break;
        }
        for &id in pending.iter().rev() {
            let mut next = world.clone();
            next.deliver_now(id)?;
            stack.push((next, depth + 1));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{build_world, ExperimentConfig};
    use crate::simnet::Mode;

    #[test]
    fn four_node_broadcast_space_is_covered() {
        let cfg = ExperimentConfig { mode: Mode::Arcast, n: 4, t: 0, ideal_channel: true, ..Default::default() };
        let world = build_world(&cfg, 0).unwrap();
        let report = explore(world, ExploreLimits::default(), |w| {
            (!(0..4).all(|i| w.cast_output(i, 0).is_some())).then(|| "missing output".to_string())
        })
        .unwrap();
        assert!(!report.truncated, "{report:?}");
        assert!(report.terminals >= 1);
        assert!(report.failures.is_empty(), "{:?}", report.failures);
    }

    #[test]
    fn depth_limit_completes_with_the_policy() {
        let cfg = ExperimentConfig { mode: Mode::Agree, n: 4, t: 0, ideal_channel: true, ..Default::default() };
        let world = build_world(&cfg, 0).unwrap();
        let limits = ExploreLimits { max_states: 100_000, max_depth: 3 };
        let report = explore(world, limits, |w| (0..4).any(|i| w.agreed(i).is_none()).then(|| "no agreement".into())).unwrap();
        assert!(!report.truncated);
        assert_eq!(report.terminals, 0);
        assert!(report.completed > 1);
        assert!(report.failures.is_empty(), "{:?}", report.failures);
    }
}
