//! Prefix-omission encoding for chains.
//!
//! A sender omits the prefix it knows every receiver already holds (its last
//! decided chain) and transmits only the suffix plus the omitted length. The
//! receiver fills the gap from its own upper bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Chain, Command};
use crate::wire::{Reader, WireError, Writer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelativeChain {
    pub base_length: usize,
    pub suffix: Vec<Command>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("decided chain {decided} is not a prefix of {chain}")]
    NotAPrefix { decided: Chain, chain: Chain },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded(Chain),
    /// The receiver does not yet know enough of the omitted prefix.
    Deferred { base_length: usize, known: usize },
}

pub fn encode_relative(c: &Chain, decided: &Chain) -> Result<RelativeChain, CodecError> {
    if !decided.is_prefix_of(c) {
        return Err(CodecError::NotAPrefix {
            decided: decided.clone(),
            chain: c.clone(),
        });
    }
    Ok(RelativeChain {
        base_length: decided.len(),
        suffix: c.commands()[decided.len()..].to_vec(),
    })
}

pub fn decode_relative(rc: &RelativeChain, known: &Chain) -> DecodeOutcome {
    if known.len() < rc.base_length {
        return DecodeOutcome::Deferred {
            base_length: rc.base_length,
            known: known.len(),
        };
    }
    DecodeOutcome::Decoded(known.prefix(rc.base_length).extended(rc.suffix.iter().cloned()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecMode {
    #[default]
    Relative,
    Full,
}

/// Per-instance chain codec.
///
/// `reference` is what the sender may omit (the part of a chain shared with
/// its decided prefix); `known` is what the receiver uses to fill omitted
/// prefixes back in.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChainCodec {
    mode: CodecMode,
    reference: Chain,
    known: Chain,
}

impl ChainCodec {
    pub fn full() -> Self {
        Self {
            mode: CodecMode::Full,
            reference: Chain::empty(),
            known: Chain::empty(),
        }
    }

    pub fn new(mode: CodecMode, reference: Chain, known: Chain) -> Self {
        Self {
            mode,
            reference,
            known,
        }
    }

    pub fn mode(&self) -> CodecMode {
        self.mode
    }

    pub fn encode(&self, c: &Chain, w: &mut Writer) {
        let base = match self.mode {
            CodecMode::Full => 0,
            CodecMode::Relative => c.common_prefix_len(&self.reference),
        };
        w.u32(base as u32);
        w.u32((c.len() - base) as u32);
        for cmd in &c.commands()[base..] {
            w.command(cmd);
        }
    }

    pub fn decode(&self, r: &mut Reader<'_>) -> Result<Chain, WireError> {
        let base_length = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut suffix = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            suffix.push(r.command()?);
        }
        match decode_relative(&RelativeChain { base_length, suffix }, &self.known) {
            DecodeOutcome::Decoded(c) => Ok(c),
            DecodeOutcome::Deferred { base_length, known } => {
                Err(WireError::Undecodable { base: base_length, known })
            }
        }
    }

    pub fn encode_to_vec(&self, c: &Chain) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(c, &mut w);
        w.finish()
    }

    pub fn decode_exact(&self, bytes: &[u8]) -> Result<Chain, WireError> {
        let mut r = Reader::new(bytes);
        let c = self.decode(&mut r)?;
        r.finish()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;
    use proptest::prelude::*;

    #[test]
    fn relative_round_trip() {
        let rc = encode_relative(&chain("abc"), &chain("ab")).unwrap();
        assert_eq!(rc.base_length, 2);
        assert_eq!(rc.suffix, chain("c").commands().to_vec());
        assert_eq!(
            decode_relative(&rc, &chain("ab")),
            DecodeOutcome::Decoded(chain("abc"))
        );
    }

    #[test]
    fn empty_decided_sends_everything() {
        let rc = encode_relative(&chain("abc"), &Chain::empty()).unwrap();
        assert_eq!(rc.base_length, 0);
        assert_eq!(rc.suffix.len(), 3);
    }

    #[test]
    fn short_known_defers() {
        let rc = RelativeChain {
            base_length: 2,
            suffix: vec![],
        };
        assert_eq!(
            decode_relative(&rc, &chain("a")),
            DecodeOutcome::Deferred {
                base_length: 2,
                known: 1
            }
        );
    }

    #[test]
    fn encode_requires_prefix() {
        assert!(encode_relative(&chain("ab"), &chain("ac")).is_err());
    }

    #[test]
    fn codec_omits_shared_prefix() {
        let sender = ChainCodec::new(CodecMode::Relative, chain("abx"), Chain::empty());
        let full = ChainCodec::full();
        let c = chain("abcd");
        assert!(sender.encode_to_vec(&c).len() < full.encode_to_vec(&c).len());
        let receiver = ChainCodec::new(CodecMode::Relative, Chain::empty(), chain("abcz"));
        assert_eq!(receiver.decode_exact(&sender.encode_to_vec(&c)).unwrap(), c);
        let lagging = ChainCodec::new(CodecMode::Relative, Chain::empty(), chain("a"));
        assert!(matches!(
            lagging.decode_exact(&sender.encode_to_vec(&c)),
            Err(WireError::Undecodable { base: 2, known: 1 })
        ));
    }

    proptest! {
        #[test]
        fn codec_round_trips_when_receiver_knows_prefix(
            c in "[a-e]{0,12}",
            cut in 0usize..13,
            extra in "[a-e]{0,4}",
        ) {
            let c = chain(&c);
            let decided = c.prefix(cut.min(c.len()));
            let known = decided.extended(chain(&extra).commands().iter().cloned());
            let rc = encode_relative(&c, &decided).unwrap();
            prop_assert_eq!(decode_relative(&rc, &known), DecodeOutcome::Decoded(c.clone()));
            let sender = ChainCodec::new(CodecMode::Relative, decided.clone(), Chain::empty());
            let receiver = ChainCodec::new(CodecMode::Relative, Chain::empty(), c.clone());
            prop_assert_eq!(receiver.decode_exact(&sender.encode_to_vec(&c)).unwrap(), c);
        }
    }
}
