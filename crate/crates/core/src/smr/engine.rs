use thiserror::Error;

use crate::chain::{Chain, Command, CommandId};
use crate::quorum::ProcessorId;
use crate::turtle::{TurtleInput, TurtleOutput};

pub const DEFAULT_BATCH_MAX: usize = 8;

pub trait ProposalSource {
    /// A chain extending `upper`.
    fn next_proposal(&mut self, upper: &Chain) -> Chain;
}

/// Proposes the processor's own not-yet-included commands, at most
/// `batch_max` per instance.
///
/// The processor issues an unbounded stream of commands `me.1, me.2, ..`;
/// everything after the highest one already in `upper` is pending.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueueSource {
    me: ProcessorId,
    batch_max: usize,
}

impl QueueSource {
    pub fn new(me: ProcessorId, batch_max: usize) -> Self {
        Self { me, batch_max }
    }
}

impl ProposalSource for QueueSource {
    fn next_proposal(&mut self, upper: &Chain) -> Chain {
        let included = upper
            .ids()
            .filter(|id| id.issuer == self.me.0)
            .map(|id| id.seq)
            .max()
            .unwrap_or(0);
        upper.extended(
            (1..=self.batch_max as u64)
                .map(|k| Command::canonical(CommandId::new(self.me.0, included + k))),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("output for instance {got} while running instance {expected}")]
    WrongInstance { expected: u64, got: u64 },
    #[error("proposal {proposal} does not extend required prefix {upper}")]
    ProposalViolatesUpper { upper: Chain, proposal: Chain },
}

/// Per-processor composition state: decide `d`, then propose an extension of `u`.
#[derive(Debug, Clone)]
pub struct SmrEngine<S> {
    current_instance: u64,
    last_output: TurtleOutput,
    decision_log: Vec<(u64, Chain)>,
    source: S,
}

impl<S: ProposalSource> SmrEngine<S> {
    pub fn new(source: S) -> Self {
        Self {
            current_instance: 1,
            last_output: TurtleOutput::initial(),
            decision_log: Vec::new(),
            source,
        }
    }

    /// Input for instance 1, built from the initial output `⟨0, ⊥, ⊥⟩`.
    pub fn first_input(&mut self) -> TurtleInput {
        TurtleInput::new(1, self.source.next_proposal(&Chain::empty()))
    }

    pub fn current_instance(&self) -> u64 {
        self.current_instance
    }

    pub fn last_output(&self) -> &TurtleOutput {
        &self.last_output
    }

    pub fn decision_log(&self) -> &[(u64, Chain)] {
        &self.decision_log
    }

    /// Records the decision and builds the next instance's input.
    pub fn on_turtle_output(&mut self, out: TurtleOutput) -> Result<(Chain, TurtleInput), EngineError> {
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
        let decided = out.decided.clone();
        self.decision_log.push((i, decided.clone()));
        self.last_output = out;
        self.current_instance = i + 1;
        Ok((decided, TurtleInput::new(i + 1, proposal)))
    }
}
