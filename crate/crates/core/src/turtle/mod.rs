//! Tree turtles: single-instance agreement subprotocols over chains.
//!
//! Each participant inputs one chain `c` and eventually outputs a pair
//! `⟨d, u⟩` with `d ⪯ u`. Implementations are pure state machines; the
//! network simulator owns time and delivery.

pub mod lowerbound;
pub mod onestep;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{meet, Chain};
use crate::quorum::{ProcSet, ProcessorId};

pub use lowerbound::LowerBoundTurtle;
pub use onestep::{OneStepTurtle, UpperSelection};

/// Round tag of the proposal broadcast (every turtle's first round).
pub const ROUND_PROPOSAL: u8 = 1;
/// Round tag of the Lower-Bound turtle's second broadcast.
pub const ROUND_SECOND: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TurtleInput {
    pub turtle_index: u64,
    pub chain: Chain,
}

impl TurtleInput {
    pub fn new(turtle_index: u64, chain: Chain) -> Self {
        Self {
            turtle_index,
            chain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TurtleOutput {
    pub turtle_index: u64,
    pub decided: Chain,
    pub upper: Chain,
}

impl TurtleOutput {
    /// Fails unless `decided ⪯ upper`.
    pub fn new(turtle_index: u64, decided: Chain, upper: Chain) -> Result<Self, TurtleError> {
        if !decided.is_prefix_of(&upper) {
            return Err(TurtleError::Invariant(format!(
                "decided {decided} is not a prefix of upper {upper}"
            )));
        }
        Ok(Self {
            turtle_index,
            decided,
            upper,
        })
    }

    /// `⟨0, ⊥, ⊥⟩`, the output every processor starts from.
    pub fn initial() -> Self {
        Self {
            turtle_index: 0,
            decided: Chain::empty(),
            upper: Chain::empty(),
        }
    }
}

/// Why a received message was dropped without affecting protocol state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    Malformed,
    Undecodable,
    WrongSender,
    BadSignature,
    NotAQuorum,
    RecomputeMismatch,
    NonAgreeingChains,
    StaleEvidence,
    WrongKind,
    InputNotExtendingEvidence,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::Malformed => "malformed",
            DiscardReason::Undecodable => "undecodable",
            DiscardReason::WrongSender => "wrong-sender",
            DiscardReason::BadSignature => "bad-signature",
            DiscardReason::NotAQuorum => "not-a-quorum",
            DiscardReason::RecomputeMismatch => "recompute-mismatch",
            DiscardReason::NonAgreeingChains => "non-agreeing-chains",
            DiscardReason::StaleEvidence => "stale-evidence",
            DiscardReason::WrongKind => "wrong-kind",
            DiscardReason::InputNotExtendingEvidence => "input-not-extending-evidence",
        }
    }
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<crate::wire::WireError> for DiscardReason {
    fn from(e: crate::wire::WireError) -> Self {
        match e {
            crate::wire::WireError::Undecodable { .. } => DiscardReason::Undecodable,
            _ => DiscardReason::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurtleAction<O> {
    Broadcast { round: u8, payload: Vec<u8> },
    ProduceOutput(O),
    Discard { sender: ProcessorId, round: u8, reason: DiscardReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TurtleError {
    #[error("turtle already started")]
    AlreadyStarted,
    #[error("turtle not started")]
    NotStarted,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub trait TurtleStateMachine {
    type Input;
    type Output;

    fn start(&mut self, input: Self::Input) -> Result<Vec<TurtleAction<Self::Output>>, TurtleError>;

    fn on_message(
        &mut self,
        sender: ProcessorId,
        round: u8,
        payload: &[u8],
    ) -> Result<Vec<TurtleAction<Self::Output>>, TurtleError>;

    fn is_done(&self) -> bool;
}

/// Meet of the chains recorded for the members of `set`.
pub(crate) fn meet_over(received: &BTreeMap<ProcessorId, Chain>, set: ProcSet) -> Option<Chain> {
    meet(set.iter().filter_map(|p| received.get(&p))).ok()
}

/// Senders in `received`, as a set.
pub(crate) fn sender_set(received: &BTreeMap<ProcessorId, Chain>) -> ProcSet {
    received.keys().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("outputs mix turtle indices {0} and {1}")]
    MixedIndices(u64, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnanimityMode {
    Crash,
    Bft,
}

fn same_index(outputs: &[TurtleOutput]) -> Result<(), CheckError> {
    if let Some(first) = outputs.first() {
        if let Some(o) = outputs.iter().find(|o| o.turtle_index != first.turtle_index) {
            return Err(CheckError::MixedIndices(first.turtle_index, o.turtle_index));
        }
    }
    Ok(())
}

/// First ordered pair `(i, j)` with `outputs[i].decided ⋠ outputs[j].upper`.
pub fn agreement_violation(outputs: &[TurtleOutput]) -> Result<Option<(usize, usize)>, CheckError> {
    same_index(outputs)?;
    for (i, a) in outputs.iter().enumerate() {
        for (j, b) in outputs.iter().enumerate() {
            if !a.decided.is_prefix_of(&b.upper) {
                return Ok(Some((i, j)));
            }
        }
    }
    Ok(None)
}

pub fn check_turtle_agreement(outputs: &[TurtleOutput]) -> Result<bool, CheckError> {
    Ok(agreement_violation(outputs)?.is_none())
}

/// First output whose `d` (crash) or `u` (BFT) fails to extend the meet of all inputs.
pub fn unanimity_violation(
    inputs: &[TurtleInput],
    outputs: &[TurtleOutput],
    mode: UnanimityMode,
) -> Option<usize> {
    let w = meet(inputs.iter().map(|i| &i.chain)).ok()?;
    outputs.iter().position(|o| {
        let bound = match mode {
            UnanimityMode::Crash => &o.decided,
            UnanimityMode::Bft => &o.upper,
        };
        !w.is_prefix_of(bound)
    })
}

pub fn check_turtle_unanimity(
    inputs: &[TurtleInput],
    outputs: &[TurtleOutput],
    mode: UnanimityMode,
) -> bool {
    unanimity_violation(inputs, outputs, mode).is_none()
}

/// First output whose upper bound no input chain extends.
pub fn validity_violation(inputs: &[TurtleInput], outputs: &[TurtleOutput]) -> Option<usize> {
    outputs
        .iter()
        .position(|o| !inputs.iter().any(|i| o.upper.is_prefix_of(&i.chain)))
}

pub fn check_turtle_validity(inputs: &[TurtleInput], outputs: &[TurtleOutput]) -> bool {
    validity_violation(inputs, outputs).is_none()
}

/// What one processor did in one instance, as seen at quiescence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lifecycle {
    pub proc: ProcessorId,
    pub correct: bool,
    pub started: bool,
    pub output: bool,
}

pub fn termination_violation(records: &[Lifecycle]) -> Option<ProcessorId> {
    records
        .iter()
        .find(|r| r.correct && r.started && !r.output)
        .map(|r| r.proc)
}

pub fn check_turtle_termination(records: &[Lifecycle]) -> bool {
    termination_violation(records).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;

    fn out(d: &str, u: &str) -> TurtleOutput {
        TurtleOutput::new(1, chain(d), chain(u)).unwrap()
    }

    fn inp(c: &str) -> TurtleInput {
        TurtleInput::new(1, chain(c))
    }

    #[test]
    fn output_requires_decided_prefix_of_upper() {
        assert!(TurtleOutput::new(1, chain("ab"), chain("ac")).is_err());
        assert!(TurtleOutput::new(1, chain("a"), chain("ab")).is_ok());
    }

    #[test]
    fn agreement_examples() {
        assert!(check_turtle_agreement(&[out("a", "ab"), out("ab", "ab")]).unwrap());
        assert!(!check_turtle_agreement(&[out("ab", "ab"), out("ac", "ac")]).unwrap());
        assert!(check_turtle_agreement(&[out("a", "abc")]).unwrap());
        let mixed = [out("a", "a"), TurtleOutput::new(2, chain("a"), chain("a")).unwrap()];
        assert_eq!(
            check_turtle_agreement(&mixed),
            Err(CheckError::MixedIndices(1, 2))
        );
    }

    #[test]
    fn unanimity_examples() {
        let inputs = [inp("ab"), inp("abc")];
        assert!(check_turtle_unanimity(&inputs, &[out("ab", "abc")], UnanimityMode::Crash));
        assert!(!check_turtle_unanimity(&inputs, &[out("a", "ab")], UnanimityMode::Crash));
        assert!(check_turtle_unanimity(&inputs, &[out("a", "ab")], UnanimityMode::Bft));
    }

    #[test]
    fn validity_examples() {
        assert!(check_turtle_validity(&[inp("abc")], &[out("a", "ab")]));
        assert!(!check_turtle_validity(&[inp("a")], &[out("a", "ab")]));
        assert!(check_turtle_validity(&[inp("")], &[out("", "")]));
    }

    #[test]
    fn termination_examples() {
        let rec = |p: u16, correct, started, output| Lifecycle {
            proc: ProcessorId(p),
            correct,
            started,
            output,
        };
        let all: Vec<_> = (0..4).map(|p| rec(p, true, true, true)).collect();
        assert!(check_turtle_termination(&all));
        let mut silent = all.clone();
        silent[3].output = false;
        assert!(!check_turtle_termination(&silent));
        let mut crashed = all;
        crashed[2] = rec(2, false, true, false);
        assert!(check_turtle_termination(&crashed));
    }
}
