//! Little-endian, length-prefixed byte encoding shared by all protocol messages.

use thiserror::Error;

use crate::chain::{Command, CommandId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("trailing bytes after message")]
    Trailing,
    #[error("invalid tag {0}")]
    BadTag(u8),
    #[error("relative chain omits {base} commands but only {known} are known")]
    Undecodable { base: usize, known: usize },
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn command(&mut self, c: &Command) -> &mut Self {
        self.u16(c.id().issuer).u64(c.id().seq).bytes(c.payload())
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn command(&mut self) -> Result<Command, WireError> {
        let issuer = self.u16()?;
        let seq = self.u64()?;
        let payload = self.bytes()?;
        Ok(Command::new(CommandId::new(issuer, seq), payload.to_vec()))
    }

    /// Errors unless every byte was consumed.
    pub fn finish(self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::Trailing)
        }
    }
}

/// Message envelope carried by the simulated network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub instance: u64,
    pub round_tag: u8,
    pub sender: u16,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.instance)
            .u8(self.round_tag)
            .u16(self.sender)
            .bytes(&self.payload);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let env = Envelope {
            instance: r.u64()?,
            round_tag: r.u8()?,
            sender: r.u16()?,
            payload: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip() {
        let env = Envelope {
            instance: 42,
            round_tag: 2,
            sender: 7,
            payload: vec![1, 2, 3],
        };
        let bytes = env.encode();
        assert_eq!(bytes.len(), 8 + 1 + 2 + 4 + 3);
        assert_eq!(Envelope::decode(&bytes).unwrap(), env);
        assert_eq!(Envelope::decode(&bytes[..5]), Err(WireError::Truncated));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(Envelope::decode(&long), Err(WireError::Trailing));
    }
}
