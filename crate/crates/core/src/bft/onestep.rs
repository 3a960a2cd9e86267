//! BFT One-Step turtle: the One-Step protocol over signed, evidence-carrying
//! proposals. Needs 5-intersection.

use std::collections::BTreeMap;

use crate::quorum::ProcessorId;
use crate::turtle::onestep::compute_output_at_depth;
use crate::turtle::{
    DiscardReason, TurtleAction, TurtleError, TurtleStateMachine, UpperSelection, ROUND_PROPOSAL,
};

use super::{
    by_signer, sign_chain, validate_round1, BftContext, BftInput, BftOutput, EvidenceKind, Round1Message,
    SignedChain,
};

#[derive(Debug, Clone)]
pub struct BftOneStepTurtle {
    ctx: BftContext,
    index: Option<u64>,
    received: BTreeMap<ProcessorId, SignedChain>,
    done: bool,
}

impl BftOneStepTurtle {
    pub fn new(ctx: BftContext) -> Self {
        Self {
            ctx,
            index: None,
            received: BTreeMap::new(),
            done: false,
        }
    }
}

fn discard(sender: ProcessorId, round: u8, reason: DiscardReason) -> Vec<TurtleAction<BftOutput>> {
    vec![TurtleAction::Discard { sender, round, reason }]
}

impl TurtleStateMachine for BftOneStepTurtle {
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
        if self.done || self.received.contains_key(&sender) {
            return Ok(vec![]);
        }
        if round != ROUND_PROPOSAL {
            return Ok(discard(sender, round, DiscardReason::Malformed));
        }
        let msg = match Round1Message::decode(&self.ctx.codec, payload) {
            Ok(m) => m,
            Err(e) => return Ok(discard(sender, round, e.into())),
        };
        if let Err(reason) = validate_round1(
            &msg,
            sender,
            index,
            self.ctx.prev_kind,
            &self.ctx.system,
            self.ctx.ledger(),
        ) {
            return Ok(discard(sender, round, reason));
        }
        self.received.insert(
            sender,
            SignedChain {
                signer: sender,
                chain: msg.chain,
                signature: msg.signature,
            },
        );
        if self.received.len() < self.ctx.system.quorum_size() {
            return Ok(vec![]);
        }
        self.done = true;
        let evidence: Vec<SignedChain> = self.received.values().cloned().collect();
        let out = compute_output_at_depth(index, &by_signer(&evidence), &self.ctx.system, 2, UpperSelection::Strict)?;
        Ok(vec![TurtleAction::ProduceOutput(BftOutput {
            turtle_index: index,
            decided: out.decided,
            upper: out.upper,
            kind: EvidenceKind::OneStep,
            evidence,
        })])
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
