use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::monitor::Violation;
use crate::geometry::{NodeId, UnitVector};
use crate::simnet::EndReason;

pub const RESULTS_SCHEMA: &str = "rfagree-results/1";

/// Outcome of one trial. Directions are in the global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: u64,
    pub seed: u64,
    pub faulty: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<NodeId>,
    /// Per node; always false for faulty nodes.
    pub terminated: Vec<bool>,
    pub outputs: Vec<Option<UnitVector>>,
    /// Elected column per node (agreement runs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub elected: Vec<Option<usize>>,
    /// Every correct-to-correct transfer landed within δ.
    pub conditioned: bool,
    pub correct_links: u64,
    pub bad_links: u64,
    pub max_link_error: f64,
    pub channel_failures: u64,
    /// Over correct outputs; 0 with fewer than two.
    pub max_pairwise_distance: f64,
    /// Farthest correct output from a correct sender's input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_distance: Option<f64>,
    pub lemma_violations: Vec<Violation>,
    /// Bound exceedances on unconditioned runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub advisory: Vec<Violation>,
    /// Deliveries performed.
    pub event_count: u64,
    pub end: EndReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Whether the protocol guarantees termination for this run.
    pub expected_termination: bool,
    /// Bounds are recorded but not asserted.
    pub violation_study: bool,
}

impl RunRecord {
    pub fn all_correct_terminated(&self) -> bool {
        (0..self.terminated.len()).filter(|i| !self.faulty.contains(i)).all(|i| self.terminated[i])
    }

    pub fn unexpected_nontermination(&self) -> bool {
        self.expected_termination && !self.all_correct_terminated()
    }

    /// Counts against the exit status.
    pub fn failed(&self) -> bool {
        if self.violation_study {
            return self.error.is_some() && self.end == EndReason::Aborted;
        }
        !self.lemma_violations.is_empty() || self.unexpected_nontermination() || self.error.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    fn of(mut xs: Vec<f64>) -> Option<Spread> {
        if xs.is_empty() {
            return None;
        }
        xs.sort_by(f64::total_cmp);
        Some(Spread { min: xs[0], median: xs[xs.len() / 2], max: xs[xs.len() - 1] })
    }
}

/// Aggregate view of a set of records; a pure function of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: u64,
    pub conditioned_runs: u64,
    pub terminated_runs: u64,
    pub unexpected_nonterminations: u64,
    pub runs_with_violations: u64,
    pub violations: u64,
    pub advisory: u64,
    pub errors: u64,
    pub failed_runs: u64,
    /// Runs where every correct node terminated with no violation.
    pub success_rate: f64,
    pub conditioned_rate: f64,
    /// Per-link failure frequency over all correct-to-correct transfers.
    pub link_failure_rate: f64,
    /// `42δ` minus the pairwise spread, over conditioned runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_slack: Option<Spread>,
    /// `14δ` minus the sender distance, over conditioned runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_slack: Option<Spread>,
}

impl Summary {
    pub fn from_records(delta: f64, records: &[RunRecord]) -> Summary {
        let count = |f: &dyn Fn(&RunRecord) -> bool| records.iter().filter(|r| f(r)).count() as u64;
        let runs = records.len() as u64;
        let successes = count(&|r| r.all_correct_terminated() && r.lemma_violations.is_empty() && r.error.is_none());
        let links: u64 = records.iter().map(|r| r.correct_links).sum();
        let bad: u64 = records.iter().map(|r| r.bad_links).sum();
        let conditioned: Vec<&RunRecord> = records.iter().filter(|r| r.conditioned).collect();
        let rate = |k: u64, of: u64| if of == 0 { 0.0 } else { k as f64 / of as f64 };
        Summary {
            runs,
            conditioned_runs: conditioned.len() as u64,
            terminated_runs: count(&|r| r.all_correct_terminated()),
            unexpected_nonterminations: count(&|r| r.unexpected_nontermination()),
            runs_with_violations: count(&|r| !r.lemma_violations.is_empty()),
            violations: records.iter().map(|r| r.lemma_violations.len() as u64).sum(),
            advisory: records.iter().map(|r| r.advisory.len() as u64).sum(),
            errors: count(&|r| r.error.is_some()),
            failed_runs: count(&|r| r.failed()),
            success_rate: rate(successes, runs),
            conditioned_rate: rate(conditioned.len() as u64, runs),
            link_failure_rate: rate(bad, links),
            pairwise_slack: Spread::of(conditioned.iter().map(|r| 42.0 * delta - r.max_pairwise_distance).collect()),
            sender_slack: Spread::of(
                conditioned.iter().filter_map(|r| r.sender_distance).map(|d| 14.0 * delta - d).collect(),
            ),
        }
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultLine {
    Header { schema: String, config: ExperimentConfig },
    Record(Box<RunRecord>),
    Summary(Summary),
}

/// Appends a header, the records and their summary as JSON lines.
pub fn write_results<W: Write>(
    mut w: W,
    config: &ExperimentConfig,
    records: &[RunRecord],
    summary: &Summary,
) -> io::Result<()> {
    let mut line = |l: ResultLine| -> io::Result<()> {
        serde_json::to_writer(&mut w, &l)?;
        w.write_all(b"\n")
    };
    line(ResultLine::Header { schema: RESULTS_SCHEMA.into(), config: config.clone() })?;
    for r in records {
        line(ResultLine::Record(Box::new(r.clone())))?;
    }
    line(ResultLine::Summary(summary.clone()))?;
    w.flush()
}

pub fn read_results<R: BufRead>(r: R) -> io::Result<Vec<ResultLine>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: u64, conditioned: bool, pairwise: f64) -> RunRecord {
        RunRecord {
            trial,
            seed: 1,
            faulty: vec![3],
            sender: None,
            terminated: vec![true, true, true, false],
            outputs: vec![Some(UnitVector::Z); 4],
            elected: vec![],
            conditioned,
            correct_links: 10,
            bad_links: u64::from(!conditioned),
            max_link_error: 0.01,
            channel_failures: 0,
            max_pairwise_distance: pairwise,
            sender_distance: None,
            lemma_violations: vec![],
            advisory: vec![],
            event_count: 30,
            end: EndReason::Quiescent,
            error: None,
            expected_termination: true,
            violation_study: false,
        }
    }

    #[test]
    fn summary_counts() {
        let mut rs = vec![record(0, true, 0.1), record(1, false, 0.5), record(2, true, 0.3)];
        rs[2].terminated[1] = false;
        let s = Summary::from_records(0.02, &rs);
        assert_eq!(s.runs, 3);
        assert_eq!(s.conditioned_runs, 2);
        assert_eq!(s.unexpected_nonterminations, 1);
        assert_eq!(s.failed_runs, 1);
        assert!((s.link_failure_rate - 1.0 / 30.0).abs() < 1e-15);
        let slack = s.pairwise_slack.unwrap();
        assert!((slack.min - (0.84 - 0.3)).abs() < 1e-12);
        assert!((slack.max - (0.84 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn results_round_trip() {
        let cfg = ExperimentConfig::default();
        let rs = vec![record(0, true, 0.0)];
        let s = Summary::from_records(cfg.delta, &rs);
        let mut buf = Vec::new();
        write_results(&mut buf, &cfg, &rs, &s).unwrap();
        let lines = read_results(&buf[..]).unwrap();
        assert_eq!(lines.len(), 3);
        assert!(matches!(&lines[0], ResultLine::Header { schema, .. } if schema == RESULTS_SCHEMA));
        assert_eq!(lines[1], ResultLine::Record(Box::new(rs[0].clone())));
        assert_eq!(lines[2], ResultLine::Summary(s));
    }
}
