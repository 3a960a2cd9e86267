//! Lower-Bound tree turtle: two broadcast rounds, needs only 2-intersection.
//!
//! Round 1 collects proposals from a quorum `Q¹_p` and computes their meet
//! `x`. Round 2 broadcasts `x`; from a quorum `Q²_p` of such values the
//! processor outputs `d = min` and `u = max`.

use std::collections::BTreeMap;

use crate::chain::{max_agreeing, meet, min_agreeing, Chain};
use crate::quorum::{ProcessorId, QuorumSystem};
use crate::smr::codec::ChainCodec;

use super::{
    DiscardReason, TurtleAction, TurtleError, TurtleInput, TurtleOutput, TurtleStateMachine,
    ROUND_PROPOSAL, ROUND_SECOND,
};

/// `x`: the meet of the round-1 proposals.
pub fn lowerbound_round1_complete(received: &BTreeMap<ProcessorId, Chain>) -> Result<Chain, TurtleError> {
    meet(received.values()).map_err(|_| TurtleError::Invariant("empty round-1 quorum".into()))
}

/// `⟨min, max⟩` of the round-2 values.
pub fn lowerbound_round2_complete(
    turtle_index: u64,
    received: &BTreeMap<ProcessorId, Chain>,
) -> Result<TurtleOutput, TurtleError> {
    let invariant = |e: crate::chain::ChainError| TurtleError::Invariant(format!("round-2 values: {e}"));
    let decided = min_agreeing(received.values()).map_err(invariant)?;
    let upper = max_agreeing(received.values()).map_err(invariant)?;
    TurtleOutput::new(turtle_index, decided, upper)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LowerBoundTurtle {
    system: QuorumSystem,
    codec: ChainCodec,
    index: Option<u64>,
    round1: BTreeMap<ProcessorId, Chain>,
    x: Option<Chain>,
    round2: BTreeMap<ProcessorId, Chain>,
    done: bool,
}

impl LowerBoundTurtle {
    pub fn new(system: QuorumSystem, codec: ChainCodec) -> Self {
        Self {
            system,
            codec,
            index: None,
            round1: BTreeMap::new(),
            x: None,
            round2: BTreeMap::new(),
            done: false,
        }
    }

    /// The round-1 meet, once computed.
    pub fn x(&self) -> Option<&Chain> {
        self.x.as_ref()
    }

    fn try_finish(&mut self) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        if self.done || self.x.is_none() || self.round2.len() < self.system.quorum_size() {
            return Ok(vec![]);
        }
        self.done = true;
        let index = self.index.ok_or(TurtleError::NotStarted)?;
        Ok(vec![TurtleAction::ProduceOutput(lowerbound_round2_complete(
            index,
            &self.round2,
        )?)])
    }
}

impl TurtleStateMachine for LowerBoundTurtle {
    type Input = TurtleInput;
    type Output = TurtleOutput;

    fn start(&mut self, input: TurtleInput) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        if self.index.is_some() {
            return Err(TurtleError::AlreadyStarted);
        }
        self.index = Some(input.turtle_index);
        Ok(vec![TurtleAction::Broadcast {
            round: ROUND_PROPOSAL,
            payload: self.codec.encode_to_vec(&input.chain),
        }])
    }

    fn on_message(
        &mut self,
        sender: ProcessorId,
        round: u8,
        payload: &[u8],
    ) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        self.index.ok_or(TurtleError::NotStarted)?;
        if self.done {
            return Ok(vec![]);
        }
        let slot = match round {
            ROUND_PROPOSAL if self.x.is_none() => &self.round1,
            ROUND_PROPOSAL => return Ok(vec![]),
            // Round-2 values may arrive before this processor finishes round 1.
            ROUND_SECOND if self.round2.len() < self.system.quorum_size() => &self.round2,
            ROUND_SECOND => return Ok(vec![]),
            _ => {
                return Ok(vec![TurtleAction::Discard {
                    sender,
                    round,
                    reason: DiscardReason::Malformed,
                }])
            }
        };
        if slot.contains_key(&sender) {
            return Ok(vec![]);
        }
        let chain = match self.codec.decode_exact(payload) {
            Ok(c) => c,
            Err(e) => {
                return Ok(vec![TurtleAction::Discard {
                    sender,
                    round,
                    reason: e.into(),
                }])
            }
        };
        let mut actions = vec![];
        if round == ROUND_PROPOSAL {
            self.round1.insert(sender, chain);
            if self.round1.len() == self.system.quorum_size() {
                let x = lowerbound_round1_complete(&self.round1)?;
                actions.push(TurtleAction::Broadcast {
                    round: ROUND_SECOND,
                    payload: self.codec.encode_to_vec(&x),
                });
                self.x = Some(x);
            }
        } else {
            self.round2.insert(sender, chain);
        }
        actions.extend(self.try_finish()?);
        Ok(actions)
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;

    fn recv(chains: &[(u16, &str)]) -> BTreeMap<ProcessorId, Chain> {
        chains.iter().map(|(p, c)| (ProcessorId(*p), chain(c))).collect()
    }

    #[test]
    fn round1_examples() {
        assert_eq!(
            lowerbound_round1_complete(&recv(&[(0, "ab"), (1, "abc"), (2, "a")])).unwrap(),
            chain("a")
        );
        assert_eq!(
            lowerbound_round1_complete(&recv(&[(0, "ab"), (1, "ab")])).unwrap(),
            chain("ab")
        );
        assert_eq!(
            lowerbound_round1_complete(&recv(&[(0, "ab"), (1, "")])).unwrap(),
            Chain::empty()
        );
    }

    #[test]
    fn round2_examples() {
        let out = lowerbound_round2_complete(3, &recv(&[(0, "a"), (1, "ab"), (2, "ab")])).unwrap();
        assert_eq!((out.decided, out.upper), (chain("a"), chain("ab")));
        let out = lowerbound_round2_complete(3, &recv(&[(0, "ab"), (1, "ab")])).unwrap();
        assert_eq!((out.decided, out.upper), (chain("ab"), chain("ab")));
        assert!(matches!(
            lowerbound_round2_complete(3, &recv(&[(0, "ab"), (1, "ac")])),
            Err(TurtleError::Invariant(_))
        ));
    }

    #[test]
    fn early_round2_values_are_kept() {
        let s = QuorumSystem::make_threshold(3, 1, 2).unwrap();
        let codec = ChainCodec::full();
        let enc = |c: &str| codec.encode_to_vec(&chain(c));
        let mut t = LowerBoundTurtle::new(s, codec.clone());
        t.start(TurtleInput::new(1, chain("ab"))).unwrap();
        assert!(t.on_message(ProcessorId(1), 2, &enc("a")).unwrap().is_empty());
        assert!(t.on_message(ProcessorId(2), 2, &enc("ab")).unwrap().is_empty());
        assert!(t.on_message(ProcessorId(0), 1, &enc("ab")).unwrap().is_empty());
        let acts = t.on_message(ProcessorId(1), 1, &enc("abc")).unwrap();
        assert_eq!(acts.len(), 2);
        assert_eq!(
            acts[0],
            TurtleAction::Broadcast {
                round: 2,
                payload: enc("ab")
            }
        );
        assert_eq!(
            acts[1],
            TurtleAction::ProduceOutput(TurtleOutput::new(1, chain("a"), chain("ab")).unwrap())
        );
        assert_eq!(t.x(), Some(&chain("ab")));
        assert!(t.is_done());
    }

    #[test]
    fn late_round1_messages_are_ignored() {
        let s = QuorumSystem::make_threshold(3, 1, 2).unwrap();
        let codec = ChainCodec::full();
        let enc = |c: &str| codec.encode_to_vec(&chain(c));
        let mut t = LowerBoundTurtle::new(s, codec.clone());
        t.start(TurtleInput::new(1, chain("a"))).unwrap();
        t.on_message(ProcessorId(0), 1, &enc("a")).unwrap();
        t.on_message(ProcessorId(2), 1, &enc("ab")).unwrap();
        assert_eq!(t.x(), Some(&chain("a")));
        assert!(t.on_message(ProcessorId(1), 1, &enc("")).unwrap().is_empty());
        assert_eq!(t.x(), Some(&chain("a")));
    }
}
