//! Interactive-consistency oracle.
//!
//! Every correct node submits a bit string; once all of them have, the oracle
//! publishes one `n × n` matrix to everybody. Rows of faulty nodes come from
//! an adversary hook. In `core_set` mode the hook may also blank up to `t`
//! correct rows, which is what asynchronous implementations can guarantee.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::NodeId;
use crate::simnet::ClassicalOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcMode {
    Strict,
    CoreSet,
}

impl IcMode {
    pub fn name(self) -> &'static str {
        match self {
            IcMode::Strict => "strict",
            IcMode::CoreSet => "core_set",
        }
    }
}

impl std::str::FromStr for IcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(IcMode::Strict),
            "core_set" | "core-set" => Ok(IcMode::CoreSet),
            _ => Err(format!("unknown ic mode `{s}` (expected strict or core_set)")),
        }
    }
}

/// Adversary influence on the oracle output.
pub trait IcAdversaryHook: Send {
    /// Row reported for faulty `node`, given every correct submission.
    fn faulty_row(&mut self, node: NodeId, n: usize, correct: &BTreeMap<NodeId, Vec<bool>>) -> Vec<bool>;
    /// Correct rows to blank in core-set mode. Entries beyond `t`, repeats
    /// and non-correct ids are ignored.
    fn drop_set(&mut self, correct: &BTreeMap<NodeId, Vec<bool>>, t: usize) -> Vec<NodeId>;
    fn clone_box(&self) -> Box<dyn IcAdversaryHook>;
}

/// Zero rows for faulty nodes; blanks the `t` lowest correct rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuietHook;

impl IcAdversaryHook for QuietHook {
    fn faulty_row(&mut self, _node: NodeId, n: usize, _correct: &BTreeMap<NodeId, Vec<bool>>) -> Vec<bool> {
        vec![false; n]
    }

    fn drop_set(&mut self, correct: &BTreeMap<NodeId, Vec<bool>>, t: usize) -> Vec<NodeId> {
        correct.keys().take(t).copied().collect()
    }

    fn clone_box(&self) -> Box<dyn IcAdversaryHook> {
        Box::new(*self)
    }
}

pub struct ICOracleConfig {
    pub mode: IcMode,
    pub hook: Box<dyn IcAdversaryHook>,
}

impl Clone for ICOracleConfig {
    fn clone(&self) -> Self {
        ICOracleConfig { mode: self.mode, hook: self.hook.clone_box() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IcError {
    #[error("no input from correct node {0}")]
    MissingInput(NodeId),
    #[error("input of node {node} has {len} bits, expected {n}")]
    BadLength { node: NodeId, len: usize, n: usize },
}

/// Computes the common matrix; every correct node receives the same one.
pub fn ic_execute(
    cfg: &mut ICOracleConfig,
    t: usize,
    faulty: &[bool],
    inputs: &BTreeMap<NodeId, Vec<bool>>,
) -> Result<BTreeMap<NodeId, Vec<Vec<bool>>>, IcError> {
    let n = faulty.len();
    let mut correct = BTreeMap::new();
    for node in (0..n).filter(|&i| !faulty[i]) {
        let row = inputs.get(&node).ok_or(IcError::MissingInput(node))?;
        if row.len() != n {
            return Err(IcError::BadLength { node, len: row.len(), n });
        }
        correct.insert(node, row.clone());
    }
    let mut matrix = vec![vec![false; n]; n];
    for (node, row) in matrix.iter_mut().enumerate() {
        if faulty[node] {
            let mut r = cfg.hook.faulty_row(node, n, &correct);
            r.resize(n, false);
            *row = r;
        } else {
            row.clone_from(&correct[&node]);
        }
    }
    if cfg.mode == IcMode::CoreSet {
        let mut dropped = Vec::new();
        for node in cfg.hook.drop_set(&correct, t) {
            if dropped.len() == t {
                break;
            }
            if node < n && !faulty[node] && !dropped.contains(&node) {
                dropped.push(node);
                matrix[node] = vec![false; n];
            }
        }
    }
    Ok(correct.keys().map(|&node| (node, matrix.clone())).collect())
}

/// The oracle as a network service: finalizes when every correct node has
/// submitted. Later submissions are ignored.
pub struct IcOracle {
    cfg: ICOracleConfig,
    t: usize,
    faulty: Vec<bool>,
    submissions: BTreeMap<NodeId, Vec<bool>>,
    finalized: bool,
}

impl IcOracle {
    pub fn new(cfg: ICOracleConfig, t: usize, faulty: Vec<bool>) -> Self {
        IcOracle { cfg, t, faulty, submissions: BTreeMap::new(), finalized: false }
    }
}

impl ClassicalOracle for IcOracle {
    fn submit(&mut self, node: NodeId, bits: Vec<bool>) -> Option<Vec<Vec<bool>>> {
        if self.finalized || self.faulty.get(node).copied().unwrap_or(true) {
            return None;
        }
        self.submissions.entry(node).or_insert(bits);
        let waiting = (0..self.faulty.len()).any(|i| !self.faulty[i] && !self.submissions.contains_key(&i));
        if waiting {
            return None;
        }
        self.finalized = true;
        let results = ic_execute(&mut self.cfg, self.t, &self.faulty, &self.submissions).ok()?;
        results.into_values().next()
    }

    fn digest(&self, out: &mut Vec<u8>) {
        out.push(self.finalized as u8);
        for (node, bits) in &self.submissions {
            out.push(*node as u8);
            out.extend(bits.iter().map(|&b| b as u8));
        }
    }

    fn clone_box(&self) -> Box<dyn ClassicalOracle> {
        Box::new(IcOracle {
            cfg: self.cfg.clone(),
            t: self.t,
            faulty: self.faulty.clone(),
            submissions: self.submissions.clone(),
            finalized: self.finalized,
        })
    }
}

/// Smallest column index with at least `t + 1` ones.
pub fn elect_column(b: &[Vec<bool>], t: usize) -> Option<usize> {
    let n = b.len();
    (0..n).find(|&j| b.iter().filter(|row| row.get(j).copied().unwrap_or(false)).count() > t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Clone)]
    struct Ones;

    impl IcAdversaryHook for Ones {
        fn faulty_row(&mut self, _: NodeId, n: usize, _: &BTreeMap<NodeId, Vec<bool>>) -> Vec<bool> {
            vec![true; n]
        }
        fn drop_set(&mut self, _: &BTreeMap<NodeId, Vec<bool>>, _: usize) -> Vec<NodeId> {
            Vec::new()
        }
        fn clone_box(&self) -> Box<dyn IcAdversaryHook> {
            Box::new(self.clone())
        }
    }

    #[derive(Clone)]
    struct Drop(Vec<NodeId>);

    impl IcAdversaryHook for Drop {
        fn faulty_row(&mut self, _: NodeId, n: usize, _: &BTreeMap<NodeId, Vec<bool>>) -> Vec<bool> {
            vec![false; n]
        }
        fn drop_set(&mut self, _: &BTreeMap<NodeId, Vec<bool>>, _: usize) -> Vec<NodeId> {
            self.0.clone()
        }
        fn clone_box(&self) -> Box<dyn IcAdversaryHook> {
            Box::new(self.clone())
        }
    }

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn strict_without_faults_copies_inputs() {
        let inputs: BTreeMap<_, _> = [(0, bits("1100")), (1, bits("0110")), (2, bits("1111")), (3, bits("1000"))].into();
        let mut cfg = ICOracleConfig { mode: IcMode::Strict, hook: Box::new(QuietHook) };
        let out = ic_execute(&mut cfg, 0, &[false; 4], &inputs).unwrap();
        assert_eq!(out.len(), 4);
        for m in out.values() {
            for (j, row) in m.iter().enumerate() {
                assert_eq!(row, &inputs[&j]);
            }
        }
    }

    #[test]
    fn all_ones_faulty_rows_keep_common_election() {
        let faulty = [false, false, false, false, false, false, false, true, true];
        let inputs: BTreeMap<_, _> = (0..7).map(|i| (i, bits("001111111"))).collect();
        let mut cfg = ICOracleConfig { mode: IcMode::Strict, hook: Box::new(Ones) };
        let out = ic_execute(&mut cfg, 2, &faulty, &inputs).unwrap();
        let ks: Vec<_> = out.values().map(|b| elect_column(b, 2)).collect();
        assert!(ks.iter().all(|&k| k == ks[0]));
        // Two all-ones rows are not enough to qualify columns 0 and 1.
        assert_eq!(ks[0], Some(2));
    }

    #[test]
    fn core_set_honours_the_drop_bound() {
        let faulty = [false; 5];
        let inputs: BTreeMap<_, _> = (0..5).map(|i| (i, bits("11111"))).collect();
        let mut cfg = ICOracleConfig { mode: IcMode::CoreSet, hook: Box::new(Drop(vec![3, 3, 9, 1, 0])) };
        let m = &ic_execute(&mut cfg, 1, &faulty, &inputs).unwrap()[&0];
        let blank: Vec<_> = (0..5).filter(|&i| m[i].iter().all(|&b| !b)).collect();
        assert_eq!(blank, vec![3]);
    }

    #[test]
    fn missing_input_is_an_error() {
        let inputs: BTreeMap<_, _> = [(0, bits("11")),].into();
        let mut cfg = ICOracleConfig { mode: IcMode::Strict, hook: Box::new(QuietHook) };
        assert_eq!(ic_execute(&mut cfg, 0, &[false, false], &inputs), Err(IcError::MissingInput(1)));
    }

    #[test]
    fn election_picks_smallest_heavy_column() {
        // Column 3 is the first with three ones.
        let rows = [
            "110100000", "100100000", "000110000", "000001000", "000000100", "000000010", "000000001", "010000000", "000000000",
        ];
        let b: Vec<_> = rows.iter().map(|r| bits(r)).collect();
        assert_eq!(elect_column(&b, 2), Some(3));
        assert_eq!(elect_column(&b[..0], 2), None);
    }

    #[test]
    fn some_column_survives_every_drop_set() {
        // n = 9, t = 2, faulty {7, 8} with blank rows. Correct rows carry at
        // least 3t + 1 = 7 ones; the adversary blanks up to two of them.
        let faulty = [false, false, false, false, false, false, false, true, true];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let inputs: BTreeMap<_, _> = (0..7)
                .map(|i| {
                    let mut row = vec![true; 9];
                    let zeros = rng.random_range(0..=2);
                    for _ in 0..zeros {
                        row[rng.random_range(0..9)] = false;
                    }
                    (i, row)
                })
                .collect();
            let mut drop_sets = vec![vec![]];
            for a in 0..7 {
                drop_sets.push(vec![a]);
                for b in a + 1..7 {
                    drop_sets.push(vec![a, b]);
                }
            }
            assert_eq!(drop_sets.len(), 29);
            for d in drop_sets {
                let mut cfg = ICOracleConfig { mode: IcMode::CoreSet, hook: Box::new(Drop(d)) };
                let out = ic_execute(&mut cfg, 2, &faulty, &inputs).unwrap();
                let b = &out[&0];
                let survivors = (0..7).filter(|&i| b[i].iter().any(|&x| x)).count();
                assert!(survivors >= 5);
                assert!(elect_column(b, 2).is_some());
            }
        }
    }

    #[test]
    fn oracle_waits_for_every_correct_node() {
        let cfg = ICOracleConfig { mode: IcMode::Strict, hook: Box::new(QuietHook) };
        let mut o = IcOracle::new(cfg, 1, vec![false, false, true, false]);
        assert_eq!(o.submit(0, bits("1101")), None);
        assert_eq!(o.submit(2, bits("1111")), None);
        assert_eq!(o.submit(1, bits("1101")), None);
        let m = o.submit(3, bits("0101")).unwrap();
        assert_eq!(m[2], bits("0000"));
        assert_eq!(m[3], bits("0101"));
        assert_eq!(o.submit(3, bits("1111")), None);
    }
}
