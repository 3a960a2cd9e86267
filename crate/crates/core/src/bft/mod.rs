//! Byzantine-tolerant turtles: inputs and outputs carry signed evidence that
//! any processor can check independently.

pub mod adversary;
mod compose;
mod lowerbound;
mod onestep;
pub mod signature;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{max_agreeing, meet, min_agreeing, Chain};
use crate::quorum::{ProcSet, ProcessorId, QuorumSystem};
use crate::smr::codec::ChainCodec;
use crate::smr::TurtleKind;
use crate::turtle::onestep::compute_output_at_depth;
use crate::turtle::{DiscardReason, TurtleOutput, UpperSelection, ROUND_PROPOSAL, ROUND_SECOND};
use crate::wire::{Reader, WireError, Writer};

pub use compose::{bft_decide_rule, BftSmrEngine};
pub use lowerbound::BftLowerBoundTurtle;
pub use onestep::BftOneStepTurtle;
pub use signature::{chain_statement, Signature, SignatureLedger, SigningKey};

/// Which protocol produced a piece of evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Genesis,
    OneStep,
    LowerBound,
}

impl EvidenceKind {
    fn tag(self) -> u8 {
        match self {
            EvidenceKind::Genesis => 0,
            EvidenceKind::OneStep => 1,
            EvidenceKind::LowerBound => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self, WireError> {
        match t {
            0 => Ok(EvidenceKind::Genesis),
            1 => Ok(EvidenceKind::OneStep),
            2 => Ok(EvidenceKind::LowerBound),
            t => Err(WireError::BadTag(t)),
        }
    }

    /// Evidence kind of the outputs of instance `i`, or genesis for `i = 0`.
    pub fn for_kind(kind: Option<TurtleKind>) -> Self {
        match kind {
            None => EvidenceKind::Genesis,
            Some(TurtleKind::BftOnestep | TurtleKind::Onestep) => EvidenceKind::OneStep,
            Some(TurtleKind::BftLowerbound | TurtleKind::Lowerbound) => EvidenceKind::LowerBound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedChain {
    pub signer: ProcessorId,
    pub chain: Chain,
    pub signature: Signature,
}

impl SignedChain {
    fn encode(&self, codec: &ChainCodec, w: &mut Writer) {
        w.u16(self.signer.0);
        codec.encode(&self.chain, w);
        self.signature.encode(w);
    }

    fn decode(codec: &ChainCodec, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            signer: ProcessorId(r.u16()?),
            chain: codec.decode(r)?,
            signature: Signature::decode(r)?,
        })
    }
}

fn encode_signed_set(set: &[SignedChain], codec: &ChainCodec, w: &mut Writer) {
    w.u16(set.len() as u16);
    for s in set {
        s.encode(codec, w);
    }
}

fn decode_signed_set(codec: &ChainCodec, r: &mut Reader<'_>) -> Result<Vec<SignedChain>, WireError> {
    let count = r.u16()? as usize;
    (0..count).map(|_| SignedChain::decode(codec, r)).collect()
}

/// `⟨i, d, u, e⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BftOutput {
    pub turtle_index: u64,
    pub decided: Chain,
    pub upper: Chain,
    pub kind: EvidenceKind,
    pub evidence: Vec<SignedChain>,
}

impl BftOutput {
    /// The well-known evidence accepted by instance 1, standing for `⟨0, ⊥, ⊥⟩`.
    pub fn genesis() -> Self {
        Self {
            turtle_index: 0,
            decided: Chain::empty(),
            upper: Chain::empty(),
            kind: EvidenceKind::Genesis,
            evidence: Vec::new(),
        }
    }

    pub fn as_turtle_output(&self) -> TurtleOutput {
        TurtleOutput {
            turtle_index: self.turtle_index,
            decided: self.decided.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn encode(&self, codec: &ChainCodec, w: &mut Writer) {
        w.u64(self.turtle_index).u8(self.kind.tag());
        codec.encode(&self.decided, w);
        codec.encode(&self.upper, w);
        encode_signed_set(&self.evidence, codec, w);
    }

    pub fn decode(codec: &ChainCodec, r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            turtle_index: r.u64()?,
            kind: EvidenceKind::from_tag(r.u8()?)?,
            decided: codec.decode(r)?,
            upper: codec.decode(r)?,
            evidence: decode_signed_set(codec, r)?,
        })
    }
}

/// `⟨i, c, e_c⟩`, where `e_c` is an output of instance `i - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BftInput {
    pub turtle_index: u64,
    pub chain: Chain,
    pub evidence: BftOutput,
}

/// Round-1 broadcast: the input and the sender's signature over its chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round1Message {
    pub chain: Chain,
    pub evidence: BftOutput,
    pub signature: Signature,
}

impl Round1Message {
    pub fn encode(&self, codec: &ChainCodec) -> Vec<u8> {
        let mut w = Writer::new();
        codec.encode(&self.chain, &mut w);
        self.evidence.encode(codec, &mut w);
        self.signature.encode(&mut w);
        w.finish()
    }

    pub fn decode(codec: &ChainCodec, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let m = Self {
            chain: codec.decode(&mut r)?,
            evidence: BftOutput::decode(codec, &mut r)?,
            signature: Signature::decode(&mut r)?,
        };
        r.finish()?;
        Ok(m)
    }
}

/// Lower-Bound round-2 broadcast: `x`, its signature, and the signed
/// proposals it was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round2Message {
    pub x: Chain,
    pub signature: Signature,
    pub support: Vec<SignedChain>,
}

impl Round2Message {
    pub fn encode(&self, codec: &ChainCodec) -> Vec<u8> {
        let mut w = Writer::new();
        codec.encode(&self.x, &mut w);
        self.signature.encode(&mut w);
        encode_signed_set(&self.support, codec, &mut w);
        w.finish()
    }

    pub fn decode(codec: &ChainCodec, bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let m = Self {
            x: codec.decode(&mut r)?,
            signature: Signature::decode(&mut r)?,
            support: decode_signed_set(codec, &mut r)?,
        };
        r.finish()?;
        Ok(m)
    }
}

/// Everything a BFT turtle needs besides its input.
#[derive(Debug, Clone)]
pub struct BftContext {
    pub system: QuorumSystem,
    pub key: SigningKey,
    pub codec: ChainCodec,
    /// Evidence kind expected in inputs (that of the previous instance).
    pub prev_kind: EvidenceKind,
}

impl BftContext {
    pub fn ledger(&self) -> &Arc<SignatureLedger> {
        self.key.ledger()
    }
}

pub type Validation = Result<(), DiscardReason>;

/// Signer set of `set`, failing on duplicates or out-of-range ids.
fn signer_quorum(set: &[SignedChain], system: &QuorumSystem) -> Result<ProcSet, DiscardReason> {
    let mut seen = BTreeSet::new();
    for s in set {
        if s.signer.index() >= system.n() || !seen.insert(s.signer) {
            return Err(DiscardReason::NotAQuorum);
        }
    }
    let signers: ProcSet = seen.into_iter().collect();
    match system.is_quorum(signers) {
        Ok(true) => Ok(signers),
        _ => Err(DiscardReason::NotAQuorum),
    }
}

fn verify_set(set: &[SignedChain], instance: u64, round: u8, ledger: &SignatureLedger) -> Validation {
    for s in set {
        if !ledger.verify(s.signer, &chain_statement(instance, round, &s.chain), &s.signature) {
            return Err(DiscardReason::BadSignature);
        }
    }
    Ok(())
}

fn by_signer(set: &[SignedChain]) -> BTreeMap<ProcessorId, Chain> {
    set.iter().map(|s| (s.signer, s.chain.clone())).collect()
}

/// Valid iff the evidence is a quorum of signed proposals from which `d` and
/// `u` recompute exactly.
pub fn validate_bft_onestep_output(out: &BftOutput, system: &QuorumSystem, ledger: &SignatureLedger) -> Validation {
    if out.kind != EvidenceKind::OneStep {
        return Err(DiscardReason::WrongKind);
    }
    signer_quorum(&out.evidence, system)?;
    verify_set(&out.evidence, out.turtle_index, ROUND_PROPOSAL, ledger)?;
    let recomputed = compute_output_at_depth(
        out.turtle_index,
        &by_signer(&out.evidence),
        system,
        2,
        UpperSelection::Strict,
    )
    .map_err(|_| DiscardReason::RecomputeMismatch)?;
    if recomputed.decided != out.decided || recomputed.upper != out.upper {
        return Err(DiscardReason::RecomputeMismatch);
    }
    Ok(())
}

/// Valid iff `x` is signed by `sender` and is the meet of a quorum of signed proposals.
pub fn validate_bft_lowerbound_message2(
    msg: &Round2Message,
    sender: ProcessorId,
    instance: u64,
    system: &QuorumSystem,
    ledger: &SignatureLedger,
) -> Validation {
    if !ledger.verify(sender, &chain_statement(instance, ROUND_SECOND, &msg.x), &msg.signature) {
        return Err(DiscardReason::BadSignature);
    }
    signer_quorum(&msg.support, system)?;
    verify_set(&msg.support, instance, ROUND_PROPOSAL, ledger)?;
    let recomputed = meet(msg.support.iter().map(|s| &s.chain)).map_err(|_| DiscardReason::NotAQuorum)?;
    if recomputed != msg.x {
        return Err(DiscardReason::RecomputeMismatch);
    }
    Ok(())
}

/// Valid iff the evidence is a quorum of signed, pairwise agreeing `x` values
/// whose min and max are `d` and `u`.
pub fn validate_bft_lowerbound_output(out: &BftOutput, system: &QuorumSystem, ledger: &SignatureLedger) -> Validation {
    if out.kind != EvidenceKind::LowerBound {
        return Err(DiscardReason::WrongKind);
    }
    signer_quorum(&out.evidence, system)?;
    verify_set(&out.evidence, out.turtle_index, ROUND_SECOND, ledger)?;
    let chains = || out.evidence.iter().map(|s| &s.chain);
    let (lo, hi) = match (min_agreeing(chains()), max_agreeing(chains())) {
        (Ok(lo), Ok(hi)) => (lo, hi),
        _ => return Err(DiscardReason::NonAgreeingChains),
    };
    if lo != out.decided || hi != out.upper {
        return Err(DiscardReason::RecomputeMismatch);
    }
    Ok(())
}

pub fn validate_genesis(out: &BftOutput) -> Validation {
    if *out == BftOutput::genesis() {
        Ok(())
    } else {
        Err(DiscardReason::RecomputeMismatch)
    }
}

pub fn validate_bft_output(out: &BftOutput, system: &QuorumSystem, ledger: &SignatureLedger) -> Validation {
    match out.kind {
        EvidenceKind::Genesis => validate_genesis(out),
        EvidenceKind::OneStep => validate_bft_onestep_output(out, system, ledger),
        EvidenceKind::LowerBound => validate_bft_lowerbound_output(out, system, ledger),
    }
}

/// Valid iff the evidence is a valid output of the previous instance and the
/// chain extends its upper bound.
pub fn validate_bft_input(
    input: &BftInput,
    prev_kind: EvidenceKind,
    system: &QuorumSystem,
    ledger: &SignatureLedger,
) -> Validation {
    let ev = &input.evidence;
    if ev.turtle_index.checked_add(1) != Some(input.turtle_index) {
        return Err(DiscardReason::StaleEvidence);
    }
    if ev.kind != prev_kind {
        return Err(DiscardReason::WrongKind);
    }
    validate_bft_output(ev, system, ledger)?;
    if !ev.upper.is_prefix_of(&input.chain) {
        return Err(DiscardReason::InputNotExtendingEvidence);
    }
    Ok(())
}

/// Checks a round-1 message from `sender` in `instance`: the signature over
/// the chain, then the input's evidence.
pub fn validate_round1(
    msg: &Round1Message,
    sender: ProcessorId,
    instance: u64,
    prev_kind: EvidenceKind,
    system: &QuorumSystem,
    ledger: &SignatureLedger,
) -> Validation {
    if !ledger.verify(sender, &chain_statement(instance, ROUND_PROPOSAL, &msg.chain), &msg.signature) {
        return Err(DiscardReason::BadSignature);
    }
    let input = BftInput {
        turtle_index: instance,
        chain: msg.chain.clone(),
        evidence: msg.evidence.clone(),
    };
    validate_bft_input(&input, prev_kind, system, ledger)
}

pub(crate) fn sign_chain(key: &SigningKey, instance: u64, round: u8, chain: &Chain) -> SignedChain {
    SignedChain {
        signer: key.id(),
        chain: chain.clone(),
        signature: key.sign(&chain_statement(instance, round, chain)),
    }
}
