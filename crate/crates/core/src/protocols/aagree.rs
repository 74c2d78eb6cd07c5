//! Agreement on a direction: every node broadcasts its input, the nodes agree
//! through interactive consistency on which broadcasts completed, and all
//! adopt the output of the smallest column backed by `t + 1` reports.

use crate::geometry::{DirTag, NodeId, UnitVector};
use crate::protocols::arcast::{ArCast, ArCastParams};
use crate::protocols::ic::elect_column;
use crate::simnet::{Action, Incoming, IncomingBody, Instance, Note, Outbox, Process};

#[derive(Debug, Clone)]
pub struct AAgreeNode {
    me: NodeId,
    params: ArCastParams,
    input: UnitVector,
    casts: Vec<ArCast>,
    w: Vec<Option<UnitVector>>,
    a: Option<Vec<bool>>,
    b: Option<Vec<Vec<bool>>>,
    early_b: Option<Vec<Vec<bool>>>,
    k: Option<usize>,
    phase: u8,
    output: Option<UnitVector>,
    failed: bool,
}

impl AAgreeNode {
    pub fn new(me: NodeId, params: ArCastParams, input: UnitVector) -> Self {
        AAgreeNode {
            me,
            params,
            input,
            casts: (0..params.n).map(|j| ArCast::new(j, me, params)).collect(),
            w: vec![None; params.n],
            a: None,
            b: None,
            early_b: None,
            k: None,
            phase: 0,
            output: None,
            failed: false,
        }
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn snapshot(&self) -> Option<&[bool]> {
        self.a.as_deref()
    }

    pub fn matrix(&self) -> Option<&[Vec<bool>]> {
        self.b.as_deref()
    }

    pub fn elected(&self) -> Option<usize> {
        self.k
    }

    pub fn output(&self) -> Option<UnitVector> {
        self.output
    }

    pub fn completed(&self, instance: NodeId) -> Option<UnitVector> {
        self.w[instance]
    }

    fn completed_count(&self) -> usize {
        self.w.iter().filter(|w| w.is_some()).count()
    }

    fn advance(&mut self, out: &mut Outbox) {
        if self.phase == 0 && self.completed_count() > 3 * self.params.t {
            let a: Vec<bool> = self.w.iter().map(|w| w.is_some()).collect();
            self.a = Some(a.clone());
            self.phase = 1;
            out.push(Action::SubmitIc { bits: a });
            if let Some(b) = self.early_b.take() {
                self.receive_matrix(b, out);
            }
        }
        if self.phase == 2 && self.output.is_none() {
            let Some(k) = self.k else { return };
            if let Some(v) = self.w[k] {
                self.output = Some(v);
                out.note(Note::Agreed { direction: v });
                for cast in self.casts.iter_mut() {
                    if cast.output().is_none() && !cast.aborted() {
                        cast.abort();
                        out.note(Note::Aborted { instance: cast.instance() });
                    }
                }
            }
        }
    }

    fn receive_matrix(&mut self, b: Vec<Vec<bool>>, out: &mut Outbox) {
        let n = self.params.n;
        if b.len() != n || b.iter().any(|r| r.len() != n) {
            self.failed = true;
            out.note(Note::Error { message: format!("interactive-consistency result is not {n}x{n}") });
            return;
        }
        match elect_column(&b, self.params.t) {
            Some(k) => {
                self.k = Some(k);
                self.phase = 2;
                out.note(Note::Elected { k });
            }
            None => {
                self.failed = true;
                out.note(Note::Error { message: "NoQualifyingColumn: no column has t + 1 ones".into() });
            }
        }
        self.b = Some(b);
    }
}

impl Process for AAgreeNode {
    fn on_start(&mut self, out: &mut Outbox) {
        let u = self.input;
        self.casts[self.me].start(u, out);
        self.collect(self.me, out);
    }

    fn on_deliver(&mut self, msg: Incoming, out: &mut Outbox) {
        if self.output.is_some() || self.failed {
            return;
        }
        match (msg.instance, msg.body) {
            (Instance::Cast(j), IncomingBody::Direction { tag, direction }) if j < self.params.n => {
                self.casts[j].deliver(msg.origin, tag, direction, out);
                self.collect(j, out);
            }
            (Instance::Ic, IncomingBody::IcResult(b)) => {
                if self.b.is_some() {
                    return;
                }
                if self.phase == 0 {
                    self.early_b = Some(b);
                } else {
                    self.receive_matrix(b, out);
                    self.advance(out);
                }
            }
            (instance, _) => out.note(Note::Discarded {
                instance,
                origin: msg.origin,
                tag: DirTag::Init.into(),
                reason: "message does not match its instance",
            }),
        }
    }

    fn finished(&self) -> bool {
        self.output.is_some()
    }

    fn digest(&self, out: &mut Vec<u8>) {
        out.push(self.phase);
        out.push(self.failed as u8);
        out.push(self.k.map_or(u8::MAX, |k| k as u8));
        if let Some(v) = self.output {
            // Nothing else influences the future of a finished node.
            for c in v.to_array() {
                out.extend_from_slice(&c.to_bits().to_le_bytes());
            }
            return;
        }
        for bits in [&self.a, &self.early_b.as_ref().map(|b| b.concat())] {
            if let Some(bits) = bits {
                out.extend(bits.iter().map(|&b| b as u8));
            }
            out.push(0xff);
        }
        for cast in &self.casts {
            cast.digest(out);
        }
    }

    fn clone_box(&self) -> Box<dyn Process> {
        Box::new(self.clone())
    }
}

impl AAgreeNode {
    fn collect(&mut self, j: NodeId, out: &mut Outbox) {
        if self.w[j].is_none() {
            if let Some(v) = self.casts[j].output() {
                self.w[j] = Some(v);
            }
        }
        self.advance(out);
    }
}

/// A node taking part in a single broadcast instance.
#[derive(Debug, Clone)]
pub struct CastNode {
    cast: ArCast,
    input: Option<UnitVector>,
}

impl CastNode {
    /// `input` is required for the designated sender and ignored otherwise.
    pub fn new(instance: NodeId, me: NodeId, params: ArCastParams, input: Option<UnitVector>) -> Self {
        CastNode { cast: ArCast::new(instance, me, params), input }
    }

    pub fn state(&self) -> &ArCast {
        &self.cast
    }
}

impl Process for CastNode {
    fn on_start(&mut self, out: &mut Outbox) {
        if let Some(u) = self.input {
            self.cast.start(u, out);
        }
    }

    fn on_deliver(&mut self, msg: Incoming, out: &mut Outbox) {
        match (msg.instance, msg.body) {
            (Instance::Cast(j), IncomingBody::Direction { tag, direction }) if j == self.cast.instance() => {
                self.cast.deliver(msg.origin, tag, direction, out);
            }
            (instance, _) => out.note(Note::Discarded {
                instance,
                origin: msg.origin,
                tag: DirTag::Init.into(),
                reason: "message does not match its instance",
            }),
        }
    }

    fn finished(&self) -> bool {
        self.cast.output().is_some()
    }

    fn digest(&self, out: &mut Vec<u8>) {
        self.cast.digest(out);
    }

    fn clone_box(&self) -> Box<dyn Process> {
        Box::new(self.clone())
    }
}
