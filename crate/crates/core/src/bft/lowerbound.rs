//! BFT Lower-Bound turtle: the two-round protocol where every round-2 value
//! travels with the signed proposals it was computed from. Needs
//! 3-intersection.

use std::collections::BTreeMap;

use crate::chain::{max_agreeing, meet, min_agreeing, Chain};
use crate::quorum::ProcessorId;
use crate::turtle::{
    DiscardReason, TurtleAction, TurtleError, TurtleStateMachine, ROUND_PROPOSAL, ROUND_SECOND,
};

use super::{
    sign_chain, validate_bft_lowerbound_message2, validate_round1, BftContext, BftInput, BftOutput,
    EvidenceKind, Round1Message, Round2Message, SignedChain,
};

#[derive(Debug, Clone)]
pub struct BftLowerBoundTurtle {
    ctx: BftContext,
    index: Option<u64>,
    round1: BTreeMap<ProcessorId, SignedChain>,
    x: Option<Chain>,
    round2: BTreeMap<ProcessorId, SignedChain>,
    done: bool,
}

impl BftLowerBoundTurtle {
    pub fn new(ctx: BftContext) -> Self {
        Self {
            ctx,
            index: None,
            round1: BTreeMap::new(),
            x: None,
            round2: BTreeMap::new(),
            done: false,
        }
    }

    pub fn x(&self) -> Option<&Chain> {
        self.x.as_ref()
    }

    fn try_finish(&mut self, index: u64) -> Result<Vec<TurtleAction<BftOutput>>, TurtleError> {
        if self.done || self.x.is_none() || self.round2.len() < self.ctx.system.quorum_size() {
            return Ok(vec![]);
        }
        self.done = true;
        let evidence: Vec<SignedChain> = self.round2.values().cloned().collect();
        let invariant = |e: crate::chain::ChainError| TurtleError::Invariant(format!("validated round-2 values: {e}"));
        let decided = min_agreeing(evidence.iter().map(|s| &s.chain)).map_err(invariant)?;
        let upper = max_agreeing(evidence.iter().map(|s| &s.chain)).map_err(invariant)?;
        Ok(vec![TurtleAction::ProduceOutput(BftOutput {
            turtle_index: index,
            decided,
            upper,
            kind: EvidenceKind::LowerBound,
            evidence,
        })])
    }
}

fn discard(sender: ProcessorId, round: u8, reason: DiscardReason) -> Vec<TurtleAction<BftOutput>> {
    vec![TurtleAction::Discard { sender, round, reason }]
}

impl TurtleStateMachine for BftLowerBoundTurtle {
    type Input = BftInput;
    type Output = BftOutput;

    fn start(&mut self, input: BftInput) -> Result<Vec<TurtleAction<BftOutput>>, TurtleError> {
        if self.index.is_some() {
            return Err(TurtleError::AlreadyStarted);
        }
        self.index = Some(input.turtle_index);
        let signed = sign_chain(&self.ctx.key, input.turtle_index, ROUND_PROPOSAL, &input.chain);
        let msg = Round1Message {
            chain: input.chain,
            evidence: input.evidence,
            signature: signed.signature,
        };
        Ok(vec![TurtleAction::Broadcast {
            round: ROUND_PROPOSAL,
            payload: msg.encode(&self.ctx.codec),
        }])
    }

    fn on_message(
        &mut self,
        sender: ProcessorId,
        round: u8,
        payload: &[u8],
    ) -> Result<Vec<TurtleAction<BftOutput>>, TurtleError> {
        let index = self.index.ok_or(TurtleError::NotStarted)?;
        if self.done {
            return Ok(vec![]);
        }
        let quorum = self.ctx.system.quorum_size();
        match round {
            ROUND_PROPOSAL => {
                if self.x.is_some() || self.round1.contains_key(&sender) {
                    return Ok(vec![]);
                }
                let msg = match Round1Message::decode(&self.ctx.codec, payload) {
                    Ok(m) => m,
                    Err(e) => return Ok(discard(sender, round, e.into())),
                };
                if let Err(reason) =
                    validate_round1(&msg, sender, index, self.ctx.prev_kind, &self.ctx.system, self.ctx.ledger())
                {
                    return Ok(discard(sender, round, reason));
                }
                self.round1.insert(
                    sender,
                    SignedChain {
                        signer: sender,
                        chain: msg.chain,
                        signature: msg.signature,
                    },
                );
                if self.round1.len() < quorum {
                    return Ok(vec![]);
                }
                let support: Vec<SignedChain> = self.round1.values().cloned().collect();
                let x = meet(support.iter().map(|s| &s.chain))
                    .map_err(|e| TurtleError::Invariant(e.to_string()))?;
                let signed = sign_chain(&self.ctx.key, index, ROUND_SECOND, &x);
                let msg = Round2Message {
                    x: x.clone(),
                    signature: signed.signature,
                    support,
                };
                self.x = Some(x);
                let mut actions = vec![TurtleAction::Broadcast {
                    round: ROUND_SECOND,
                    payload: msg.encode(&self.ctx.codec),
                }];
                actions.extend(self.try_finish(index)?);
                Ok(actions)
            }
            ROUND_SECOND => {
                if self.round2.len() >= quorum || self.round2.contains_key(&sender) {
                    return Ok(vec![]);
                }
                let msg = match Round2Message::decode(&self.ctx.codec, payload) {
                    Ok(m) => m,
                    Err(e) => return Ok(discard(sender, round, e.into())),
                };
                if let Err(reason) =
                    validate_bft_lowerbound_message2(&msg, sender, index, &self.ctx.system, self.ctx.ledger())
                {
                    return Ok(discard(sender, round, reason));
                }
                self.round2.insert(
                    sender,
                    SignedChain {
                        signer: sender,
                        chain: msg.x,
                        signature: msg.signature,
                    },
                );
                self.try_finish(index)
            }
            _ => Ok(discard(sender, round, DiscardReason::Malformed)),
        }
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
