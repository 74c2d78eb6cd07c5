//! Protocol state machines driven by the simulator.

pub mod aagree;
pub mod arcast;
pub mod ic;

pub use aagree::{AAgreeNode, CastNode};
pub use arcast::{ArCast, ArCastParams};
pub use ic::{elect_column, ic_execute, IcAdversaryHook, IcMode, IcOracle, ICOracleConfig, QuietHook};
