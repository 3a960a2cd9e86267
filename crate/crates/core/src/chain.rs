//! Chains of commands and their prefix order.
//!
//! A [`Chain`] is an immutable sequence of [`Command`]s. Chains ordered by
//! "is a prefix of" form a meet-semilattice: the meet of a set of chains is
//! their longest common prefix, and the empty chain is the bottom element.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Identity of a command: the issuing processor and its per-issuer sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommandId {
    pub issuer: u16,
    pub seq: u64,
}

impl CommandId {
    pub fn new(issuer: u16, seq: u64) -> Self {
        Self { issuer, seq }
    }
}

impl fmt::Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.issuer, self.seq)
    }
}

impl std::str::FromStr for CommandId {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ChainError::BadCommandId(s.to_owned());
        let (issuer, seq) = s.split_once('.').ok_or_else(bad)?;
        Ok(Self {
            issuer: issuer.parse().map_err(|_| bad())?,
            seq: seq.parse().map_err(|_| bad())?,
        })
    }
}

/// An opaque state-machine command. Equality is on `(id, payload)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Command {
    id: CommandId,
    payload: Arc<[u8]>,
}

impl Command {
    pub fn new(id: CommandId, payload: impl Into<Arc<[u8]>>) -> Self {
        Self {
            id,
            payload: payload.into(),
        }
    }

    /// The command the workload generators issue for `id`. Traces store only
    /// ids, so parsing a trace rebuilds commands through this constructor.
    pub fn canonical(id: CommandId) -> Self {
        let mut payload = Vec::with_capacity(13);
        payload.extend_from_slice(b"op");
        payload.extend_from_slice(&id.issuer.to_be_bytes());
        payload.extend_from_slice(&id.seq.to_be_bytes());
        Self::new(id, payload)
    }

    pub fn id(&self) -> CommandId {
        self.id
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

impl fmt::Debug for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("operation requires a nonempty set of chains")]
    EmptyInput,
    #[error("chains {left} and {right} do not agree")]
    NotAgreeing { left: Chain, right: Chain },
    #[error("malformed command id {0:?}")]
    BadCommandId(String),
}

/// A finite sequence of commands. The empty chain is the bottom element.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Chain {
    commands: Arc<[Command]>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::empty()
    }
}

impl Chain {
    pub fn empty() -> Self {
        Self {
            commands: Arc::from(Vec::new()),
        }
    }

    pub fn new(commands: Vec<Command>) -> Self {
        Self {
            commands: commands.into(),
        }
    }

    /// Builds a chain of canonical commands from ids.
    pub fn from_ids<I: IntoIterator<Item = CommandId>>(ids: I) -> Self {
        Self::new(ids.into_iter().map(Command::canonical).collect())
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn commands(&self) -> &[Command] {
        &self.commands
    }

    pub fn ids(&self) -> impl Iterator<Item = CommandId> + '_ {
        self.commands.iter().map(Command::id)
    }

    /// The first `len` commands (the whole chain if `len` exceeds it).
    pub fn prefix(&self, len: usize) -> Chain {
        if len >= self.len() {
            return self.clone();
        }
        Self::new(self.commands[..len].to_vec())
    }

    /// A new chain with `extra` appended.
    pub fn extended<I: IntoIterator<Item = Command>>(&self, extra: I) -> Chain {
        let mut commands = self.commands.to_vec();
        commands.extend(extra);
        Self::new(commands)
    }

    /// Length of the longest common prefix of `self` and `other`.
    pub fn common_prefix_len(&self, other: &Chain) -> usize {
        if Arc::ptr_eq(&self.commands, &other.commands) {
            return self.len();
        }
        self.commands
            .iter()
            .zip(other.commands.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &Chain) -> bool {
        self.len() <= other.len() && self.common_prefix_len(other) == self.len()
    }

    /// `self ⪯ other` or `other ⪯ self`.
    pub fn agrees_with(&self, other: &Chain) -> bool {
        self.common_prefix_len(other) == self.len().min(other.len())
    }

    /// Longest common prefix of two chains.
    pub fn meet(&self, other: &Chain) -> Chain {
        self.prefix(self.common_prefix_len(other))
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.commands.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", c.id)?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Chain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.ids().map(|id| id.to_string()))
    }
}

impl<'de> Deserialize<'de> for Chain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids: Vec<String> = Vec::deserialize(deserializer)?;
        ids.iter()
            .map(|s| s.parse::<CommandId>())
            .collect::<Result<Vec<_>, _>>()
            .map(Chain::from_ids)
            .map_err(serde::de::Error::custom)
    }
}

/// `c ⪯ c2`.
pub fn is_prefix(c: &Chain, c2: &Chain) -> bool {
    c.is_prefix_of(c2)
}

/// `c ⪯ c2 or c2 ⪯ c`.
pub fn agrees(c: &Chain, c2: &Chain) -> bool {
    c.agrees_with(c2)
}

/// Longest common prefix of a nonempty set of chains.
pub fn meet<'a, I>(chains: I) -> Result<Chain, ChainError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    let mut iter = chains.into_iter();
    let first = iter.next().ok_or(ChainError::EmptyInput)?;
    let len = iter.fold(first.len(), |len, c| {
        len.min(first.prefix(len).common_prefix_len(c))
    });
    Ok(first.prefix(len))
}

// Returns (shortest, longest) after verifying the set is totally ordered.
fn agreeing_extremes<'a, I>(chains: I) -> Result<(Chain, Chain), ChainError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    let chains: Vec<&Chain> = chains.into_iter().collect();
    if chains.is_empty() {
        return Err(ChainError::EmptyInput);
    }
    let longest = chains.iter().max_by_key(|c| c.len()).copied().unwrap();
    let shortest = chains.iter().min_by_key(|c| c.len()).copied().unwrap();
    // Every chain is a prefix of the longest iff the set is totally ordered.
    if let Some(bad) = chains.iter().find(|c| !c.is_prefix_of(longest)) {
        return Err(ChainError::NotAgreeing {
            left: (*bad).clone(),
            right: longest.clone(),
        });
    }
    Ok((shortest.clone(), longest.clone()))
}

/// The ⪯-maximum of a set of pairwise-agreeing chains.
pub fn max_agreeing<'a, I>(chains: I) -> Result<Chain, ChainError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    agreeing_extremes(chains).map(|(_, max)| max)
}

/// The ⪯-minimum of a set of pairwise-agreeing chains.
pub fn min_agreeing<'a, I>(chains: I) -> Result<Chain, ChainError>
where
    I: IntoIterator<Item = &'a Chain>,
{
    agreeing_extremes(chains).map(|(min, _)| min)
}

/// Test helpers: compact chain construction from single-letter commands.
#[cfg(any(test, feature = "testkit"))]
pub mod testkit {
    use super::*;

    /// A command named by a lowercase letter; `'a'` is `0.1`, `'b'` is `0.2`, and so on.
    pub fn cmd(name: char) -> Command {
        Command::canonical(CommandId::new(0, name as u64 - 'a' as u64 + 1))
    }

    /// `chain("abc")` is the chain `[a, b, c]`.
    pub fn chain(names: &str) -> Chain {
        Chain::new(names.chars().map(cmd).collect())
    }
}
