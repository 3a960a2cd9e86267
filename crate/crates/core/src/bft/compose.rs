use crate::chain::Chain;
use crate::smr::{EngineError, ProposalSource};

use super::{BftInput, BftOutput};

/// Decide `d` only when it is longer than everything decided so far.
pub fn bft_decide_rule(longest_decided: &Chain, out: &BftOutput) -> Option<Chain> {
    (out.decided.len() > longest_decided.len()).then(|| out.decided.clone())
}

/// Composition of BFT turtles: each output becomes the evidence of the next input.
#[derive(Debug, Clone)]
pub struct BftSmrEngine<S> {
    current_instance: u64,
    last_output: BftOutput,
    longest_decided: Chain,
    decision_log: Vec<(u64, Chain)>,
    source: S,
}

impl<S: ProposalSource> BftSmrEngine<S> {
    pub fn new(source: S) -> Self {
        Self {
            current_instance: 1,
            last_output: BftOutput::genesis(),
            longest_decided: Chain::empty(),
            decision_log: Vec::new(),
            source,
        }
    }

    pub fn first_input(&mut self) -> BftInput {
        BftInput {
            turtle_index: 1,
            chain: self.source.next_proposal(&Chain::empty()),
            evidence: BftOutput::genesis(),
        }
    }

    pub fn current_instance(&self) -> u64 {
        self.current_instance
    }

    pub fn last_output(&self) -> &BftOutput {
        &self.last_output
    }

    pub fn longest_decided(&self) -> &Chain {
        &self.longest_decided
    }

    pub fn decision_log(&self) -> &[(u64, Chain)] {
        &self.decision_log
    }

    /// Returns the decision, if any, and the next instance's input.
    pub fn on_bft_output(&mut self, out: BftOutput) -> Result<(Option<Chain>, BftInput), EngineError> {
        if out.turtle_index != self.current_instance {
            return Err(EngineError::WrongInstance {
                expected: self.current_instance,
                got: out.turtle_index,
            });
        }
        let proposal = self.source.next_proposal(&out.upper);
        if !out.upper.is_prefix_of(&proposal) {
            return Err(EngineError::ProposalViolatesUpper {
                upper: out.upper,
                proposal,
            });
        }
        let i = out.turtle_index;
        let decision = bft_decide_rule(&self.longest_decided, &out);
        if let Some(d) = &decision {
            self.longest_decided = d.clone();
            self.decision_log.push((i, d.clone()));
        }
        self.current_instance = i + 1;
        self.last_output = out.clone();
        Ok((
            decision,
            BftInput {
                turtle_index: i + 1,
                chain: proposal,
                evidence: out,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bft::EvidenceKind;
    use crate::chain::testkit::chain;

    fn out(i: u64, d: &str, u: &str) -> BftOutput {
        BftOutput {
            turtle_index: i,
            decided: chain(d),
            upper: chain(u),
            kind: EvidenceKind::OneStep,
            evidence: vec![],
        }
    }

    #[test]
    fn decide_only_if_longer() {
        assert_eq!(bft_decide_rule(&chain("ab"), &out(2, "a", "ab")), None);
        assert_eq!(bft_decide_rule(&chain("a"), &out(2, "ab", "ab")), Some(chain("ab")));
        assert_eq!(bft_decide_rule(&chain("ab"), &out(2, "ac", "ac")), None);
    }

    struct Same;

    impl ProposalSource for Same {
        fn next_proposal(&mut self, upper: &Chain) -> Chain {
            upper.clone()
        }
    }

    #[test]
    fn engine_carries_output_as_evidence() {
        let mut e = BftSmrEngine::new(Same);
        assert_eq!(e.first_input().evidence, BftOutput::genesis());
        let (d, next) = e.on_bft_output(out(1, "ab", "abc")).unwrap();
        assert_eq!(d, Some(chain("ab")));
        assert_eq!(next.turtle_index, 2);
        assert_eq!(next.chain, chain("abc"));
        assert_eq!(next.evidence, out(1, "ab", "abc"));
        let (d, _) = e.on_bft_output(out(2, "a", "abc")).unwrap();
        assert_eq!(d, None);
        assert_eq!(e.decision_log(), &[(1, chain("ab"))]);
        assert!(e.on_bft_output(out(5, "a", "a")).is_err());
    }
}
