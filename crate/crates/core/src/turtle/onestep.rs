//! One-Step tree turtle: one broadcast round, needs 3-intersection.
//!
//! `d` is the meet over the first quorum `Q_p` of proposals received; `u` is
//! the longest of the meets over `Q_p ∩ Q` for quorums `Q`.

use std::collections::BTreeMap;

use crate::chain::{max_agreeing, Chain};
use crate::quorum::{ProcSet, ProcessorId, QuorumSystem};
use crate::smr::codec::ChainCodec;
use crate::wire::Writer;

use super::{
    meet_over, sender_set, DiscardReason, TurtleAction, TurtleError, TurtleInput, TurtleOutput,
    TurtleStateMachine, ROUND_PROPOSAL,
};

/// How `u` is picked from the candidate set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum UpperSelection {
    /// `max` over the candidates; non-agreeing candidates are an invariant error.
    #[default]
    Strict,
    /// Longest candidate, lowest position on ties, without checking agreement.
    /// Only meaningful for showing what goes wrong under too little intersection.
    LongestCandidate,
}

/// Candidate upper bounds: meets over the smallest sets `Q_p ∩ Q1 ∩ .. ∩ Q_depth`.
///
/// `depth` is 1 for the crash-tolerant turtle and 2 for the Byzantine one.
pub fn candidate_set(
    received: &BTreeMap<ProcessorId, Chain>,
    system: &QuorumSystem,
    depth: usize,
) -> Vec<Chain> {
    let qp = sender_set(received);
    system
        .extremal_intersections(qp, depth)
        .into_iter()
        .filter_map(|s| meet_over(received, s))
        .collect()
}

/// Candidate set by literal enumeration of `depth`-tuples of minimal quorums.
pub fn candidate_set_enumerated(
    received: &BTreeMap<ProcessorId, Chain>,
    system: &QuorumSystem,
    depth: usize,
) -> Vec<Chain> {
    let quorums = system.minimal_quorums();
    let mut bases = vec![sender_set(received)];
    for _ in 0..depth {
        let mut next: Vec<ProcSet> = bases
            .iter()
            .flat_map(|b| quorums.iter().map(move |q| b.intersection(*q)))
            .collect();
        next.sort_unstable();
        next.dedup();
        bases = next;
    }
    bases
        .into_iter()
        .filter_map(|s| meet_over(received, s))
        .collect()
}

pub(crate) fn select_upper(
    candidates: &[Chain],
    selection: UpperSelection,
) -> Result<Chain, TurtleError> {
    match selection {
        UpperSelection::Strict => max_agreeing(candidates.iter())
            .map_err(|e| TurtleError::Invariant(format!("candidate upper bounds: {e}"))),
        UpperSelection::LongestCandidate => {
            let mut best: Option<&Chain> = None;
            for c in candidates {
                if best.is_none_or(|b| c.len() > b.len()) {
                    best = Some(c);
                }
            }
            best.cloned()
                .ok_or_else(|| TurtleError::Invariant("empty candidate set".into()))
        }
    }
}

/// Output of a processor whose first quorum of proposals is `received`.
pub fn compute_onestep_output(
    turtle_index: u64,
    received: &BTreeMap<ProcessorId, Chain>,
    system: &QuorumSystem,
    selection: UpperSelection,
) -> Result<TurtleOutput, TurtleError> {
    compute_output_at_depth(turtle_index, received, system, 1, selection)
}

pub(crate) fn compute_output_at_depth(
    turtle_index: u64,
    received: &BTreeMap<ProcessorId, Chain>,
    system: &QuorumSystem,
    depth: usize,
    selection: UpperSelection,
) -> Result<TurtleOutput, TurtleError> {
    let decided = meet_over(received, sender_set(received))
        .ok_or_else(|| TurtleError::Invariant("no proposals received".into()))?;
    let upper = select_upper(&candidate_set(received, system, depth), selection)?;
    TurtleOutput::new(turtle_index, decided, upper)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OneStepTurtle {
    system: QuorumSystem,
    codec: ChainCodec,
    selection: UpperSelection,
    index: Option<u64>,
    received: BTreeMap<ProcessorId, Chain>,
    done: bool,
}

impl OneStepTurtle {
    pub fn new(system: QuorumSystem, codec: ChainCodec) -> Self {
        Self {
            system,
            codec,
            selection: UpperSelection::Strict,
            index: None,
            received: BTreeMap::new(),
            done: false,
        }
    }

    pub fn with_selection(mut self, selection: UpperSelection) -> Self {
        self.selection = selection;
        self
    }

    /// `Q_p`, once fixed.
    pub fn quorum(&self) -> Option<ProcSet> {
        self.done.then(|| sender_set(&self.received))
    }

    pub fn received(&self) -> &BTreeMap<ProcessorId, Chain> {
        &self.received
    }
}

impl TurtleStateMachine for OneStepTurtle {
    type Input = TurtleInput;
    type Output = TurtleOutput;

    fn start(&mut self, input: TurtleInput) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        if self.index.is_some() {
            return Err(TurtleError::AlreadyStarted);
        }
        self.index = Some(input.turtle_index);
        let mut w = Writer::new();
        self.codec.encode(&input.chain, &mut w);
        Ok(vec![TurtleAction::Broadcast {
            round: ROUND_PROPOSAL,
            payload: w.finish(),
        }])
    }

    fn on_message(
        &mut self,
        sender: ProcessorId,
        round: u8,
        payload: &[u8],
    ) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        let index = self.index.ok_or(TurtleError::NotStarted)?;
        if self.done || self.received.contains_key(&sender) {
            return Ok(vec![]);
        }
        if round != ROUND_PROPOSAL {
            return Ok(vec![TurtleAction::Discard {
                sender,
                round,
                reason: DiscardReason::Malformed,
            }]);
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
        self.received.insert(sender, chain);
        if self.received.len() < self.system.quorum_size() {
            return Ok(vec![]);
        }
        self.done = true;
        let out = compute_onestep_output(index, &self.received, &self.system, self.selection)?;
        Ok(vec![TurtleAction::ProduceOutput(out)])
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;
    use crate::chain::{meet, Chain, Command, CommandId};
    use proptest::prelude::*;

    fn sys(n: usize, f: usize, k: usize) -> QuorumSystem {
        QuorumSystem::make_threshold(n, f, k).unwrap()
    }

    fn recv(chains: &[(u16, &str)]) -> BTreeMap<ProcessorId, Chain> {
        chains.iter().map(|(p, c)| (ProcessorId(*p), chain(c))).collect()
    }

    /// Candidates over every quorum, not only minimal ones.
    fn candidate_set_all_quorums(
        received: &BTreeMap<ProcessorId, Chain>,
        system: &QuorumSystem,
    ) -> Vec<Chain> {
        let qp = sender_set(received);
        let all = system.processors();
        (system.quorum_size()..=system.n())
            .flat_map(|size| all.subsets_of_size(size))
            .filter_map(|q| meet_over(received, qp.intersection(q)))
            .collect()
    }

    fn longest(chains: &[Chain]) -> Chain {
        chains.iter().max_by_key(|c| c.len()).unwrap().clone()
    }

    #[test]
    fn worked_example() {
        let s = sys(4, 1, 3);
        let r = recv(&[(0, "a"), (1, "ab"), (2, "abc")]);
        let out = compute_onestep_output(1, &r, &s, UpperSelection::Strict).unwrap();
        assert_eq!(out.decided, chain("a"));
        assert_eq!(out.upper, chain("ab"));
        let mut cands = candidate_set_enumerated(&r, &s, 1);
        cands.sort_by_key(|c| c.len());
        cands.dedup();
        assert_eq!(cands, vec![chain("a"), chain("ab")]);
        assert_eq!(longest(&candidate_set_all_quorums(&r, &s)), chain("ab"));
    }

    #[test]
    fn unanimous_proposals() {
        let s = sys(4, 1, 3);
        let r = recv(&[(0, "ab"), (1, "ab"), (3, "ab")]);
        let out = compute_onestep_output(1, &r, &s, UpperSelection::Strict).unwrap();
        assert_eq!((out.decided, out.upper), (chain("ab"), chain("ab")));
    }

    #[test]
    fn divergent_proposals() {
        let s = sys(4, 1, 3);
        let r = recv(&[(0, "x"), (1, "y"), (2, "z")]);
        let out = compute_onestep_output(1, &r, &s, UpperSelection::Strict).unwrap();
        assert_eq!((out.decided, out.upper), (Chain::empty(), Chain::empty()));
    }

    #[test]
    fn state_machine_lifecycle() {
        let s = sys(4, 1, 3);
        let codec = ChainCodec::full();
        let mut t = OneStepTurtle::new(s, codec.clone());
        assert_eq!(
            t.on_message(ProcessorId(0), 1, &[]),
            Err(TurtleError::NotStarted)
        );
        let acts = t.start(TurtleInput::new(1, chain("a"))).unwrap();
        assert_eq!(
            acts,
            vec![TurtleAction::Broadcast {
                round: 1,
                payload: codec.encode_to_vec(&chain("a"))
            }]
        );
        assert_eq!(
            t.start(TurtleInput::new(1, chain("a"))),
            Err(TurtleError::AlreadyStarted)
        );
        let msg = |c: &str| codec.encode_to_vec(&chain(c));
        assert!(t.on_message(ProcessorId(0), 1, &msg("a")).unwrap().is_empty());
        // A duplicate sender changes nothing.
        assert!(t.on_message(ProcessorId(0), 1, &msg("zz")).unwrap().is_empty());
        assert_eq!(t.received().len(), 1);
        let bad = t.on_message(ProcessorId(3), 1, &[1, 2]).unwrap();
        assert!(matches!(
            bad[..],
            [TurtleAction::Discard {
                reason: DiscardReason::Malformed,
                ..
            }]
        ));
        assert!(t.on_message(ProcessorId(1), 1, &msg("ab")).unwrap().is_empty());
        let acts = t.on_message(ProcessorId(2), 1, &msg("abc")).unwrap();
        let expected = TurtleOutput::new(1, chain("a"), chain("ab")).unwrap();
        assert_eq!(acts, vec![TurtleAction::ProduceOutput(expected)]);
        assert!(t.is_done());
        assert_eq!(t.quorum().unwrap().len(), 3);
        assert!(t.on_message(ProcessorId(3), 1, &msg("a")).unwrap().is_empty());
    }

    #[test]
    fn replay_is_deterministic() {
        let s = sys(4, 1, 3);
        let codec = ChainCodec::full();
        let script = [(2u16, "ab"), (0, "abd"), (3, "ab"), (1, "a")];
        let run = || {
            let mut t = OneStepTurtle::new(s.clone(), codec.clone());
            let mut all = t.start(TurtleInput::new(5, chain("abc"))).unwrap();
            for (p, c) in script {
                all.extend(
                    t.on_message(ProcessorId(p), 1, &codec.encode_to_vec(&chain(c)))
                        .unwrap(),
                );
            }
            all
        };
        assert_eq!(run(), run());
    }

    /// Chains over a tiny alphabet so that prefixes collide often.
    fn small_chain() -> impl Strategy<Value = Chain> {
        prop::collection::vec(0u64..3, 0..5).prop_map(|v| {
            Chain::new(
                v.into_iter()
                    .enumerate()
                    .map(|(i, x)| Command::canonical(CommandId::new(x as u16, i as u64)))
                    .collect(),
            )
        })
    }

    /// Exhaustive at `n <= 6`: every quorum `Q_p` and every assignment of
    /// chains from a fixed universe.
    #[test]
    fn candidate_properties_exhaustive() {
        let universe = [
            Chain::empty(),
            chain("a"),
            chain("ab"),
            chain("ac"),
            chain("abd"),
            chain("b"),
        ];
        for (n, f) in [(4usize, 1usize), (5, 1), (6, 1)] {
            let s = sys(n, f, 3);
            let qp_size = n - f;
            let total = universe.len().pow(qp_size as u32);
            for qp in s.minimal_quorums() {
                for code in 0..total {
                    let mut x = code;
                    let received: BTreeMap<_, _> = qp
                        .iter()
                        .map(|p| {
                            let c = universe[x % universe.len()].clone();
                            x /= universe.len();
                            (p, c)
                        })
                        .collect();
                    check_candidates(&received, &s);
                }
            }
        }
    }

    fn check_candidates(received: &BTreeMap<ProcessorId, Chain>, s: &QuorumSystem) {
        let fast = candidate_set(received, s, 1);
        let literal = candidate_set_enumerated(received, s, 1);
        let d = meet(received.values()).unwrap();
        for x in &literal {
            assert!(d.is_prefix_of(x), "d must prefix every candidate");
            for y in &literal {
                assert!(x.agrees_with(y), "candidates must agree: {x} vs {y}");
            }
        }
        let upper = longest(&literal);
        assert_eq!(longest(&fast), upper);
        assert_eq!(longest(&candidate_set_all_quorums(received, s)), upper);
        let out = compute_onestep_output(1, received, s, UpperSelection::Strict).unwrap();
        assert_eq!(out.upper, upper);
        assert_eq!(out.decided, d);
    }

    proptest! {
        #[test]
        fn candidate_properties_random(
            chains in prop::collection::vec(small_chain(), 9),
            mask in 0u64..(1 << 10),
        ) {
            let s = sys(10, 3, 3);
            let qp: Vec<_> = (0..10u16)
                .filter(|p| mask & (1 << p) == 0)
                .chain(0..10)
                .take(7)
                .collect();
            let received: BTreeMap<_, _> = qp
                .iter()
                .enumerate()
                .map(|(i, p)| (ProcessorId(*p), chains[i % chains.len()].clone()))
                .collect();
            prop_assume!(received.len() == 7);
            let cands = candidate_set(&received, &s, 1);
            let d = meet(received.values()).unwrap();
            for x in &cands {
                prop_assert!(d.is_prefix_of(x));
                for y in &cands {
                    prop_assert!(x.agrees_with(y));
                }
            }
        }
    }
}
