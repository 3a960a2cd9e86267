//! Rotating-leader wrapper around each turtle instance.
//!
//! Before instance `i` starts, every processor arms a timer of length
//! `T0 · 2^(i-1)` and waits for the chain broadcast by leader `i mod n`. If it
//! arrives first (and extends the processor's required prefix) it becomes the
//! processor's input; otherwise the processor proposes its own chain.

use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use crate::quorum::ProcessorId;

/// Round tag of the leader's broadcast.
pub const ROUND_LEADER: u8 = 0;

pub const DEFAULT_INITIAL_TIMER: u64 = 10;

/// Upper limit on any timer length. Far above any delay bound the simulator
/// uses, and small enough that simulated time cannot overflow.
pub const TIMER_CAP: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_initial_timer")]
    pub initial_timer: u64,
}

fn default_initial_timer() -> u64 {
    DEFAULT_INITIAL_TIMER
}

impl Default for LeaderConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            initial_timer: DEFAULT_INITIAL_TIMER,
        }
    }
}

pub fn leader_for(i: u64, n: usize) -> ProcessorId {
    ProcessorId((i % n as u64) as u16)
}

/// `T0 · 2^(i-1)`, saturating at [`TIMER_CAP`].
pub fn timer_length(initial_timer: u64, i: u64) -> u64 {
    let shift = i.saturating_sub(1);
    if shift >= 63 {
        return TIMER_CAP;
    }
    initial_timer
        .checked_mul(1u64 << shift)
        .map_or(TIMER_CAP, |t| t.min(TIMER_CAP))
}

/// First instance whose timer exceeds `bound`, or `u64::MAX` if none does.
pub fn first_instance_with_timer_above(initial_timer: u64, bound: u64) -> u64 {
    if bound >= TIMER_CAP || initial_timer == 0 {
        return u64::MAX;
    }
    let mut i = 1;
    while timer_length(initial_timer, i) <= bound {
        i += 1;
    }
    i
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeaderPhaseState {
    pub instance: u64,
    pub leader: ProcessorId,
    pub own_input: Chain,
    /// The processor's previous upper bound; every input must extend it.
    pub required: Chain,
    pub awaiting_leader: bool,
    pub adopted: Option<Chain>,
}

impl LeaderPhaseState {
    pub fn new(instance: u64, n: usize, own_input: Chain, required: Chain) -> Self {
        Self {
            instance,
            leader: leader_for(instance, n),
            own_input,
            required,
            awaiting_leader: true,
            adopted: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeaderEvent {
    Message { from: ProcessorId, chain: Chain },
    TimerExpired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeaderOutcome {
    /// Start the turtle with this chain.
    Start { chain: Chain, adopted: bool },
    /// The event does not concern the waiting phase.
    Ignored,
}

pub fn on_leader_message_or_timeout(state: &mut LeaderPhaseState, event: LeaderEvent) -> LeaderOutcome {
    if !state.awaiting_leader {
        return LeaderOutcome::Ignored;
    }
    match event {
        LeaderEvent::Message { from, .. } if from != state.leader => LeaderOutcome::Ignored,
        LeaderEvent::Message { chain, .. } => {
            state.awaiting_leader = false;
            if state.required.is_prefix_of(&chain) {
                state.adopted = Some(chain.clone());
                LeaderOutcome::Start {
                    chain,
                    adopted: true,
                }
            } else {
                LeaderOutcome::Start {
                    chain: state.own_input.clone(),
                    adopted: false,
                }
            }
        }
        LeaderEvent::TimerExpired => {
            state.awaiting_leader = false;
            LeaderOutcome::Start {
                chain: state.own_input.clone(),
                adopted: false,
            }
        }
    }
}
