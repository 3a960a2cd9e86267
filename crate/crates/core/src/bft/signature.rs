//! Simulation-grade signatures.
//!
//! Signing registers `(signer, digest, nonce)` in a ledger shared by every
//! processor in a run; verification looks the triple up. A processor only
//! ever holds the [`SigningKey`] for its own identity, so it can replay
//! signatures it has seen but never mint new ones for someone else.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::chain::Chain;
use crate::quorum::ProcessorId;
use crate::smr::codec::ChainCodec;
use crate::wire::{Reader, WireError, Writer};

pub type Digest32 = [u8; 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub signer: ProcessorId,
    pub digest: Digest32,
    pub nonce: u64,
}

impl Signature {
    pub fn encode(&self, w: &mut Writer) {
        w.u16(self.signer.0).raw(&self.digest).u64(self.nonce);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            signer: ProcessorId(r.u16()?),
            digest: r.array()?,
            nonce: r.u64()?,
        })
    }
}

pub fn digest(message: &[u8]) -> Digest32 {
    Sha256::digest(message).into()
}

/// The bytes signed when a processor vouches for `chain` in a given instance
/// and round. Binding the instance and round stops a signature from being
/// replayed into a different context.
pub fn chain_statement(instance: u64, round: u8, chain: &Chain) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(b"turtles/chain").u64(instance).u8(round);
    ChainCodec::full().encode(chain, &mut w);
    w.finish()
}

#[derive(Debug, Default)]
struct LedgerState {
    signed: HashSet<(ProcessorId, Digest32, u64)>,
    next_nonce: u64,
}

/// Registry of every signature produced in one run.
#[derive(Debug, Default)]
pub struct SignatureLedger {
    state: Mutex<LedgerState>,
}

impl SignatureLedger {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// The key for `id`. Callers hand each processor only its own key.
    pub fn key_for(self: &Arc<Self>, id: ProcessorId) -> SigningKey {
        SigningKey {
            id,
            ledger: Arc::clone(self),
        }
    }

    pub fn verify(&self, signer: ProcessorId, message: &[u8], sig: &Signature) -> bool {
        if sig.signer != signer || sig.digest != digest(message) {
            return false;
        }
        let state = self.state.lock().expect("signature ledger poisoned");
        state.signed.contains(&(signer, sig.digest, sig.nonce))
    }

    fn register(&self, signer: ProcessorId, digest: Digest32) -> Signature {
        let mut state = self.state.lock().expect("signature ledger poisoned");
        state.next_nonce += 1;
        let nonce = state.next_nonce;
        state.signed.insert((signer, digest, nonce));
        Signature {
            signer,
            digest,
            nonce,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigningKey {
    id: ProcessorId,
    ledger: Arc<SignatureLedger>,
}

impl SigningKey {
    pub fn id(&self) -> ProcessorId {
        self.id
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        self.ledger.register(self.id, digest(message))
    }

    pub fn ledger(&self) -> &Arc<SignatureLedger> {
        &self.ledger
    }
}

pub fn sign(key: &SigningKey, message: &[u8]) -> Signature {
    key.sign(message)
}

pub fn verify(ledger: &SignatureLedger, signer: ProcessorId, message: &[u8], sig: &Signature) -> bool {
    ledger.verify(signer, message, sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;

    #[test]
    fn sign_verify_contract() {
        let ledger = SignatureLedger::new();
        let p = ledger.key_for(ProcessorId(1));
        let sig = sign(&p, b"m");
        assert!(verify(&ledger, ProcessorId(1), b"m", &sig));
        assert!(!verify(&ledger, ProcessorId(1), b"m2", &sig));
        assert!(!verify(&ledger, ProcessorId(2), b"m", &sig));
    }

    #[test]
    fn forged_signature_is_rejected() {
        let ledger = SignatureLedger::new();
        let forged = Signature {
            signer: ProcessorId(0),
            digest: digest(b"m"),
            nonce: 1,
        };
        assert!(!ledger.verify(ProcessorId(0), b"m", &forged));
        // A real signature by someone else cannot be relabelled.
        let q = ledger.key_for(ProcessorId(3)).sign(b"m");
        let relabelled = Signature {
            signer: ProcessorId(0),
            ..q
        };
        assert!(!ledger.verify(ProcessorId(0), b"m", &relabelled));
    }

    #[test]
    fn statements_bind_instance_and_round() {
        let c = chain("ab");
        assert_ne!(chain_statement(1, 1, &c), chain_statement(2, 1, &c));
        assert_ne!(chain_statement(1, 1, &c), chain_statement(1, 2, &c));
        assert_ne!(chain_statement(1, 1, &c), chain_statement(1, 1, &chain("a")));
    }

    #[test]
    fn encoding_round_trips() {
        let ledger = SignatureLedger::new();
        let sig = ledger.key_for(ProcessorId(4)).sign(b"x");
        let mut w = Writer::new();
        sig.encode(&mut w);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(Signature::decode(&mut r).unwrap(), sig);
        r.finish().unwrap();
    }
}
