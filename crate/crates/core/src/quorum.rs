//! Quorum systems with a k-intersection guarantee.
//!
//! Only the threshold construction is provided: the quorums of a threshold
//! system over `n` processors tolerating `f` faults are all subsets of size at
//! least `n - f`, and any `k` of them intersect whenever `n > k·f`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest processor count a [`ProcSet`] can hold.
pub const MAX_PROCESSORS: usize = 64;

/// Largest `n` accepted by the brute-force intersection check.
pub const MAX_ENUMERABLE: usize = 12;

/// Dense processor index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessorId(pub u16);

impl ProcessorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl From<usize> for ProcessorId {
    fn from(i: usize) -> Self {
        ProcessorId(i as u16)
    }
}

/// A set of processors as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ProcSet(u64);

impl ProcSet {
    pub const EMPTY: ProcSet = ProcSet(0);

    /// `{0, .., n-1}`.
    pub fn all(n: usize) -> Self {
        if n >= 64 {
            ProcSet(u64::MAX)
        } else {
            ProcSet((1u64 << n) - 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        ProcSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, p: ProcessorId) -> bool {
        p.index() < 64 && self.0 & (1 << p.index()) != 0
    }

    pub fn insert(&mut self, p: ProcessorId) {
        self.0 |= 1 << p.index();
    }

    pub fn remove(&mut self, p: ProcessorId) {
        self.0 &= !(1 << p.index());
    }

    pub fn with(mut self, p: ProcessorId) -> Self {
        self.insert(p);
        self
    }

    pub fn intersection(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & other.0)
    }

    pub fn union(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 | other.0)
    }

    pub fn difference(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ProcSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ProcessorId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros();
            bits &= bits - 1;
            Some(ProcessorId(i as u16))
        })
    }

    /// All subsets of `self` with exactly `size` members, in increasing bit order.
    pub fn subsets_of_size(self, size: usize) -> Vec<ProcSet> {
        fn rec(members: &[ProcessorId], size: usize, acc: ProcSet, out: &mut Vec<ProcSet>) {
            if size == 0 {
                out.push(acc);
                return;
            }
            for (i, &p) in members.iter().enumerate() {
                if members.len() - i < size {
                    break;
                }
                rec(&members[i + 1..], size - 1, acc.with(p), out);
            }
        }
        let members: Vec<ProcessorId> = self.iter().collect();
        let mut out = Vec::new();
        if size <= members.len() {
            rec(&members, size, ProcSet::EMPTY, &mut out);
        }
        out
    }
}

impl FromIterator<ProcessorId> for ProcSet {
    fn from_iter<I: IntoIterator<Item = ProcessorId>>(iter: I) -> Self {
        iter.into_iter().fold(ProcSet::EMPTY, ProcSet::with)
    }
}

impl fmt::Debug for ProcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|p| p.0)).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuorumError {
    #[error("threshold quorums require n > k*f (n={n}, f={f}, k={k})")]
    InsufficientProcessors { n: usize, f: usize, k: usize },
    #[error("intersection degree k must be at least 1")]
    ZeroIntersection,
    #[error("processor count {0} outside 1..={MAX_PROCESSORS}")]
    BadProcessorCount(usize),
    #[error("processor {0} outside 0..{1}")]
    OutOfRange(ProcessorId, usize),
    #[error("n={0} is too large to enumerate (limit {MAX_ENUMERABLE})")]
    TooLargeToEnumerate(usize),
    #[error("correct set of size {size} has no quorum (need {needed})")]
    NoCorrectQuorum { size: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuorumKind {
    Threshold,
}

/// A quorum system over processors `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuorumSystem {
    n: usize,
    f: usize,
    k: usize,
    kind: QuorumKind,
}

impl QuorumSystem {
    /// Threshold system: quorums are all subsets of size `>= n - f`.
    pub fn make_threshold(n: usize, f: usize, k: usize) -> Result<Self, QuorumError> {
        if n == 0 || n > MAX_PROCESSORS {
            return Err(QuorumError::BadProcessorCount(n));
        }
        if k == 0 {
            return Err(QuorumError::ZeroIntersection);
        }
        if n <= k * f {
            return Err(QuorumError::InsufficientProcessors { n, f, k });
        }
        Ok(Self {
            n,
            f,
            k,
            kind: QuorumKind::Threshold,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// The intersection degree this system was built for.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> QuorumKind {
        self.kind
    }

    /// Size of a minimal quorum.
    pub fn quorum_size(&self) -> usize {
        self.n - self.f
    }

    pub fn processors(&self) -> ProcSet {
        ProcSet::all(self.n)
    }

    pub fn is_quorum(&self, set: ProcSet) -> Result<bool, QuorumError> {
        if let Some(p) = set.difference(self.processors()).iter().next() {
            return Err(QuorumError::OutOfRange(p, self.n));
        }
        Ok(match self.kind {
            QuorumKind::Threshold => set.len() >= self.quorum_size(),
        })
    }

    /// Every quorum of minimal size. Larger quorums are supersets of these.
    pub fn minimal_quorums(&self) -> Vec<ProcSet> {
        self.processors().subsets_of_size(self.quorum_size())
    }

    /// Brute force: does every `k`-tuple of minimal quorums share a processor?
    pub fn verify_k_intersection(&self, k: usize) -> Result<bool, QuorumError> {
        if self.n > MAX_ENUMERABLE {
            return Err(QuorumError::TooLargeToEnumerate(self.n));
        }
        if k == 0 {
            return Ok(true);
        }
        let quorums = self.minimal_quorums();
        if quorums.len() < k {
            // Tuples must repeat a quorum; repetition never shrinks an
            // intersection, so the worst tuple covers every quorum.
            let all = quorums
                .iter()
                .fold(self.processors(), |acc, q| acc.intersection(*q));
            return Ok(!all.is_empty());
        }
        // A violating tuple with repeats implies a violating tuple of distinct
        // quorums, so combinations without replacement suffice.
        fn rec(quorums: &[ProcSet], start: usize, remaining: usize, acc: ProcSet) -> bool {
            if acc.is_empty() {
                return false;
            }
            if remaining == 0 {
                return true;
            }
            (start..=quorums.len() - remaining)
                .all(|i| rec(quorums, i + 1, remaining - 1, acc.intersection(quorums[i])))
        }
        Ok(rec(&quorums, 0, k, self.processors()))
    }

    /// Worst-case size of the intersection of `count` quorums.
    pub fn min_intersection_size(&self, count: usize) -> usize {
        self.n.saturating_sub(count * self.f)
    }

    /// The smallest sets of the form `base ∩ Q1 ∩ .. ∩ Q_depth` over quorums
    /// `Q_i`. Any other such intersection is a superset of one of these.
    ///
    /// For a threshold system each `Q_i` excludes at most `f` processors, so
    /// these are exactly the subsets of `base` of size `|base| - depth·f`.
    pub fn extremal_intersections(&self, base: ProcSet, depth: usize) -> Vec<ProcSet> {
        match self.kind {
            QuorumKind::Threshold => {
                let size = base.len().saturating_sub(depth * self.f);
                base.subsets_of_size(size)
            }
        }
    }

    /// Checks a fault assignment leaves an all-correct quorum Q*.
    pub fn correct_set(&self, correct: ProcSet) -> Result<CorrectSet, QuorumError> {
        if let Some(p) = correct.difference(self.processors()).iter().next() {
            return Err(QuorumError::OutOfRange(p, self.n));
        }
        if !self.is_quorum(correct)? {
            return Err(QuorumError::NoCorrectQuorum {
                size: correct.len(),
                needed: self.quorum_size(),
            });
        }
        Ok(CorrectSet { correct })
    }
}

/// The processors that never fail in a run; always contains a quorum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectSet {
    correct: ProcSet,
}

impl CorrectSet {
    pub fn members(&self) -> ProcSet {
        self.correct
    }

    /// A quorum made only of correct processors: the lowest `n - f` of them.
    pub fn q_star(&self, system: &QuorumSystem) -> ProcSet {
        self.correct.iter().take(system.quorum_size()).collect()
    }
}
