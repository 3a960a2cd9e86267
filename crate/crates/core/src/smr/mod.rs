//! Composition of turtle instances into state machine replication.

pub mod check;
pub mod codec;
mod engine;
mod schedule;

pub use engine::{EngineError, ProposalSource, QueueSource, SmrEngine, DEFAULT_BATCH_MAX};
pub use schedule::{Repeat, ScheduleEntry, TurtleKind, TurtleSchedule};
