use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ClassicalTag, Instance, MsgId};
use crate::geometry::{DirTag, NodeId, UnitVector};

pub const TRACE_SCHEMA: &str = "rfagree-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Arcast,
    Agree,
}

/// Which exit condition moved a broadcast state machine forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Sender's own init broadcast.
    Start,
    /// Received the sender's init.
    Init,
    /// Large echo cluster.
    EchoCluster,
    /// Echo cluster plus a nearby ready cluster.
    Joint,
    /// Large ready cluster: output.
    ReadyCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Predicate,
    Quiescent,
    Timeout,
    Aborted,
}

/// Run metadata heading each trace segment. Directions in the trace are in
/// the global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub mode: Mode,
    pub n: usize,
    pub t: usize,
    pub delta: f64,
    pub qubits_per_axis: u64,
    pub ideal_channel: bool,
    pub faulty: Vec<NodeId>,
    /// Designated sender of a single broadcast run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<NodeId>,
    pub seed: u64,
    pub trial: u64,
    #[serde(default)]
    pub fault_strategy: String,
    #[serde(default)]
    pub scheduler: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic_mode: Option<String>,
}

impl TraceHeader {
    pub fn is_faulty(&self, node: NodeId) -> bool {
        self.faulty.contains(&node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Send {
        msg: MsgId,
        from: NodeId,
        to: NodeId,
        tag: ClassicalTag,
        inst: Instance,
        digest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<UnitVector>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bits: Option<String>,
    },
    Deliver {
        msg: MsgId,
        from: NodeId,
        to: NodeId,
        tag: ClassicalTag,
        inst: Instance,
        digest: String,
        /// Estimation error of a quantum payload, global frame.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        err: Option<f64>,
    },
    Drop {
        msg: MsgId,
        from: NodeId,
        to: NodeId,
        tag: ClassicalTag,
        inst: Instance,
    },
    ChannelFailure {
        msg: MsgId,
        node: NodeId,
    },
    /// Logical send-to-all by a correct node.
    Broadcast {
        node: NodeId,
        inst: NodeId,
        tag: DirTag,
        dir: UnitVector,
    },
    Transition {
        node: NodeId,
        inst: NodeId,
        from: u8,
        to: u8,
        via: Branch,
    },
    CastOutput {
        node: NodeId,
        inst: NodeId,
        dir: UnitVector,
    },
    IcSubmit {
        node: NodeId,
        bits: String,
    },
    IcFinalize {
        rows: Vec<String>,
    },
    Elect {
        node: NodeId,
        k: usize,
    },
    Agree {
        node: NodeId,
        dir: UnitVector,
    },
    Abort {
        node: NodeId,
        inst: NodeId,
    },
    Discard {
        node: NodeId,
        inst: Instance,
        from: NodeId,
        tag: ClassicalTag,
        reason: String,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<NodeId>,
        message: String,
    },
    End {
        reason: EndReason,
        deliveries: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub i: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

pub(crate) fn bits_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub(crate) fn digest_string(d: u64) -> String {
    format!("{d:016x}")
}

impl EventTrace {
    pub fn new(header: TraceHeader) -> Self {
        EventTrace { header, events: Vec::new() }
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::End { reason, .. } => Some(*reason),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for (i, event) in self.events.iter().enumerate() {
            let line = TraceLine { i: i as u64, event: event.clone() };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses one or more concatenated trace segments.
    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Vec<EventTrace>> {
        let mut traces: Vec<EventTrace> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: serde_json::Error| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", lineno + 1));
            let value: serde_json::Value = serde_json::from_str(&line).map_err(bad)?;
            if value.get("schema").is_some() {
                let header: TraceHeader = serde_json::from_value(value).map_err(bad)?;
                if header.schema != TRACE_SCHEMA {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("line {}: unsupported schema `{}`", lineno + 1, header.schema),
                    ));
                }
                traces.push(EventTrace::new(header));
            } else {
                let parsed: TraceLine = serde_json::from_value(value).map_err(bad)?;
                let trace = traces.last_mut().ok_or_else(|| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("line {}: event before header", lineno + 1))
                })?;
                trace.events.push(parsed.event);
            }
        }
        Ok(traces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceHeader {
        TraceHeader {
            schema: TRACE_SCHEMA.into(),
            mode: Mode::Arcast,
            n: 4,
            t: 1,
            delta: 0.02,
            qubits_per_axis: 100,
            ideal_channel: false,
            faulty: vec![3],
            sender: Some(0),
            seed: 1,
            trial: 0,
            fault_strategy: "silent".into(),
            scheduler: "fifo".into(),
            ic_mode: None,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = EventTrace::new(header());
        t.events.push(TraceEvent::Broadcast { node: 0, inst: 0, tag: DirTag::Init, dir: UnitVector::Z });
        t.events.push(TraceEvent::Deliver {
            msg: 0,
            from: 0,
            to: 1,
            tag: ClassicalTag::Init,
            inst: Instance::Cast(0),
            digest: digest_string(0xabc),
            err: Some(0.0125),
        });
        t.events.push(TraceEvent::IcFinalize { rows: vec!["1010".into()] });
        t.events.push(TraceEvent::End { reason: EndReason::Quiescent, deliveries: 1 });
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        t.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("{\"i\":0,\"kind\":\"broadcast\""));
        let back = EventTrace::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], t);
        assert_eq!(back[0].end_reason(), Some(EndReason::Quiescent));
    }

    #[test]
    fn events_before_header_are_rejected() {
        let line = b"{\"i\":0,\"kind\":\"end\",\"reason\":\"timeout\",\"deliveries\":3}\n";
        assert!(EventTrace::read_jsonl(&line[..]).is_err());
    }
}
