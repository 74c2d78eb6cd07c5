//! Asynchronous reference-frame broadcast and agreement among nodes whose
//! coordinate frames are unknown to each other, simulated over a quantum
//! direction channel with Byzantine nodes and an adversarial scheduler.

pub mod byzantine;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod protocols;
pub mod rng;
pub mod simnet;

pub use estimation::{EstimationConfig, QuantumPayload};
pub use geometry::{distance, DirTag, LocalFrame, NodeId, UnitVector};
