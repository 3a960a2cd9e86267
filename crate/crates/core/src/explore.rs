//! Exhaustive exploration of single turtle instances at small scale.
//!
//! [`explore`] enumerates every delivery order of one instance's messages,
//! together with every placement of up to `max_crashes` crashes, and checks
//! the turtle properties in every reachable state. States are deduplicated,
//! so the search covers all schedules while visiting each state once.
//!
//! [`message_pool_agreement`] enumerates adversarial pools of signed
//! Lower-Bound round-2 messages and checks that all valid ones agree.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::bft::{validate_bft_lowerbound_message2, Round2Message, SignatureLedger, SignedChain};
use crate::chain::{agrees, meet, Chain};
use crate::quorum::{ProcSet, ProcessorId, QuorumSystem};
use crate::smr::codec::ChainCodec;
use crate::turtle::lowerbound::LowerBoundTurtle;
use crate::turtle::onestep::{OneStepTurtle, UpperSelection};
use crate::turtle::{
    self, Lifecycle, TurtleAction, TurtleError, TurtleInput, TurtleOutput, TurtleStateMachine, UnanimityMode,
    ROUND_PROPOSAL, ROUND_SECOND,
};

/// Instance index used for explored instances.
const INSTANCE: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurtleChoice {
    OneStep(UpperSelection),
    LowerBound,
}

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub system: QuorumSystem,
    pub turtle: TurtleChoice,
    /// One input chain per processor.
    pub inputs: Vec<Chain>,
    pub max_crashes: usize,
    /// Stop after visiting this many distinct states.
    pub state_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Step {
    Deliver { from: u16, to: u16, round: u8 },
    Crash(u16),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Deliver { from, to, round } => write!(f, "deliver r{round} p{from}→p{to}"),
            Step::Crash(p) => write!(f, "crash p{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `agreement`, `unanimity`, `validity`, `termination`, or `internal-invariant`.
    pub property: &'static str,
    pub detail: String,
    /// The schedule from the initial state that reaches the violation.
    pub schedule: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreReport {
    pub states: usize,
    /// States with nothing left to deliver from live senders.
    pub quiescent: usize,
    /// False if the state limit stopped the search early.
    pub complete: bool,
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Machine {
    One(OneStepTurtle),
    Low(LowerBoundTurtle),
    /// Finished or crashed; further deliveries cannot matter.
    Halted,
}

impl Machine {
    fn on_message(&mut self, from: ProcessorId, round: u8, payload: &[u8]) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        match self {
            Machine::One(m) => m.on_message(from, round, payload),
            Machine::Low(m) => m.on_message(from, round, payload),
            Machine::Halted => Ok(vec![]),
        }
    }

    fn start(&mut self, input: TurtleInput) -> Result<Vec<TurtleAction<TurtleOutput>>, TurtleError> {
        match self {
            Machine::One(m) => m.start(input),
            Machine::Low(m) => m.start(input),
            Machine::Halted => Err(TurtleError::AlreadyStarted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Msg {
    from: u16,
    to: u16,
    round: u8,
    payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    machines: Vec<Machine>,
    in_flight: BTreeSet<Msg>,
    crashed: ProcSet,
    outputs: Vec<Option<TurtleOutput>>,
}

struct Explorer<'a> {
    cfg: &'a ExploreConfig,
    inputs: Vec<TurtleInput>,
    seen: HashSet<State>,
    quiescent: usize,
    complete: bool,
    path: Vec<Step>,
    mode: UnanimityMode,
}

type Found = Result<(), (&'static str, String)>;

impl Explorer<'_> {
    fn apply(&self, state: &mut State, p: u16, actions: Vec<TurtleAction<TurtleOutput>>) -> Found {
        let n = self.cfg.system.n() as u16;
        for a in actions {
            match a {
                TurtleAction::Broadcast { round, payload } => {
                    for to in 0..n {
                        if state.machines[to as usize] != Machine::Halted {
                            state.in_flight.insert(Msg {
                                from: p,
                                to,
                                round,
                                payload: payload.clone(),
                            });
                        }
                    }
                }
                TurtleAction::ProduceOutput(o) => {
                    state.outputs[p as usize] = Some(o);
                    state.machines[p as usize] = Machine::Halted;
                    state.in_flight.retain(|m| m.to != p);
                    self.check_outputs(state)?;
                }
                TurtleAction::Discard { .. } => {}
            }
        }
        Ok(())
    }

    fn check_outputs(&self, state: &State) -> Found {
        let outs: Vec<(usize, TurtleOutput)> = state
            .outputs
            .iter()
            .enumerate()
            .filter_map(|(p, o)| o.clone().map(|o| (p, o)))
            .collect();
        let values: Vec<TurtleOutput> = outs.iter().map(|(_, o)| o.clone()).collect();
        let show = |i: usize| format!("p{} ⟨{}, {}⟩", outs[i].0, outs[i].1.decided, outs[i].1.upper);
        if let Ok(Some((a, b))) = turtle::agreement_violation(&values) {
            return Err(("agreement", format!("{} and {}", show(a), show(b))));
        }
        if let Some(a) = turtle::unanimity_violation(&self.inputs, &values, self.mode) {
            return Err(("unanimity", show(a)));
        }
        if let Some(a) = turtle::validity_violation(&self.inputs, &values) {
            return Err(("validity", show(a)));
        }
        Ok(())
    }

    fn check_termination(&self, state: &State) -> Found {
        let records: Vec<Lifecycle> = (0..self.cfg.system.n())
            .map(|p| Lifecycle {
                proc: ProcessorId(p as u16),
                correct: !state.crashed.contains(ProcessorId(p as u16)),
                started: true,
                output: state.outputs[p].is_some(),
            })
            .collect();
        match turtle::termination_violation(&records) {
            None => Ok(()),
            Some(p) => Err(("termination", format!("p{} is stuck with nothing left to receive", p.0))),
        }
    }

    fn successors(&self, state: &State) -> Vec<(Step, Result<State, (&'static str, String)>)> {
        let mut out = vec![];
        for m in &state.in_flight {
            let mut next = state.clone();
            next.in_flight.remove(m);
            let step = Step::Deliver {
                from: m.from,
                to: m.to,
                round: m.round,
            };
            let to = m.to as usize;
            let result = next.machines[to]
                .on_message(ProcessorId(m.from), m.round, &m.payload)
                .map_err(|e| ("internal-invariant", format!("p{to}: {e}")))
                .and_then(|actions| self.apply(&mut next, m.to, actions));
            out.push((step, result.map(|_| next)));
        }
        if state.crashed.len() < self.cfg.max_crashes {
            for p in 0..self.cfg.system.n() as u16 {
                if state.crashed.contains(ProcessorId(p)) {
                    continue;
                }
                let mut next = state.clone();
                next.crashed.insert(ProcessorId(p));
                next.machines[p as usize] = Machine::Halted;
                next.in_flight.retain(|m| m.to != p);
                out.push((Step::Crash(p), Ok(next)));
            }
        }
        out
    }

    fn visit(&mut self, state: State) -> Option<Violation> {
        if !self.seen.insert(state.clone()) {
            return None;
        }
        if self.seen.len() >= self.cfg.state_limit {
            self.complete = false;
            return None;
        }
        if state.in_flight.iter().all(|m| state.crashed.contains(ProcessorId(m.from))) {
            self.quiescent += 1;
            if let Err((property, detail)) = self.check_termination(&state) {
                return Some(self.violation(property, detail));
            }
        }
        for (step, next) in self.successors(&state) {
            self.path.push(step);
            let found = match next {
                Err((property, detail)) => Some(self.violation(property, detail)),
                Ok(next) => self.visit(next),
            };
            if found.is_some() {
                return found;
            }
            self.path.pop();
            if !self.complete {
                return None;
            }
        }
        None
    }

    fn violation(&self, property: &'static str, detail: String) -> Violation {
        Violation {
            property,
            detail,
            schedule: self.path.clone(),
        }
    }
}

/// Searches every schedule of one instance for a property violation.
pub fn explore(cfg: &ExploreConfig) -> ExploreReport {
    let n = cfg.system.n();
    assert_eq!(cfg.inputs.len(), n, "one input per processor");
    let inputs: Vec<TurtleInput> = cfg.inputs.iter().map(|c| TurtleInput::new(INSTANCE, c.clone())).collect();
    let mut ex = Explorer {
        cfg,
        inputs: inputs.clone(),
        seen: HashSet::new(),
        quiescent: 0,
        complete: true,
        path: vec![],
        mode: UnanimityMode::Crash,
    };
    let mut state = State {
        machines: (0..n)
            .map(|_| match cfg.turtle {
                TurtleChoice::OneStep(sel) => {
                    Machine::One(OneStepTurtle::new(cfg.system.clone(), ChainCodec::full()).with_selection(sel))
                }
                TurtleChoice::LowerBound => Machine::Low(LowerBoundTurtle::new(cfg.system.clone(), ChainCodec::full())),
            })
            .collect(),
        in_flight: BTreeSet::new(),
        crashed: ProcSet::EMPTY,
        outputs: vec![None; n],
    };
    for (p, input) in inputs.into_iter().enumerate() {
        let actions = state.machines[p].start(input).expect("fresh turtles start");
        if let Err((property, detail)) = ex.apply(&mut state, p as u16, actions) {
            return ExploreReport {
                states: 0,
                quiescent: 0,
                complete: true,
                violation: Some(ex.violation(property, detail)),
            };
        }
    }
    let violation = ex.visit(state);
    ExploreReport {
        states: ex.seen.len(),
        quiescent: ex.quiescent,
        complete: ex.complete && violation.is_none(),
        violation,
    }
}

/// Sum over several input vectors; stops at the first violation.
pub fn explore_inputs(base: &ExploreConfig, input_sets: &[Vec<Chain>]) -> (ExploreReport, Option<Vec<Chain>>) {
    let mut total = ExploreReport {
        states: 0,
        quiescent: 0,
        complete: true,
        violation: None,
    };
    for inputs in input_sets {
        let r = explore(&ExploreConfig {
            inputs: inputs.clone(),
            ..base.clone()
        });
        total.states += r.states;
        total.quiescent += r.quiescent;
        total.complete &= r.complete;
        if r.violation.is_some() {
            total.violation = r.violation;
            return (total, Some(inputs.clone()));
        }
    }
    (total, None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolReport {
    pub pools: usize,
    /// Valid round-2 messages across all pools.
    pub accepted: usize,
    /// Forged messages the validator rejected.
    pub rejected: usize,
    /// A pool with two valid round-2 values that do not agree.
    pub violation: Option<(Chain, Chain)>,
}

/// For every assignment of `universe` chains to the correct processors and
/// every choice of `f` Byzantine processors, builds all round-2 messages any
/// processor could send: every quorum, with Byzantine supporters signing
/// whatever chain from `universe` suits them. Also offers each message with
/// `x` extended by a forged command. Every message the validator accepts
/// must agree with every other accepted one from the same pool.
pub fn message_pool_agreement(system: &QuorumSystem, universe: &[Chain]) -> PoolReport {
    let n = system.n();
    let f = system.f();
    let mut report = PoolReport {
        pools: 0,
        accepted: 0,
        rejected: 0,
        violation: None,
    };
    let all = system.processors();
    let quorums: Vec<ProcSet> = (system.quorum_size()..=n).flat_map(|s| all.subsets_of_size(s)).collect();
    let forged = crate::chain::Command::canonical(crate::chain::CommandId::new(u16::MAX, u64::MAX));
    for byzantine in all.subsets_of_size(f) {
        let correct: Vec<ProcessorId> = all.difference(byzantine).iter().collect();
        let mut assignment = vec![0usize; correct.len()];
        loop {
            report.pools += 1;
            let ledger = SignatureLedger::new();
            let keys: Vec<_> = (0..n).map(|p| ledger.key_for(ProcessorId(p as u16))).collect();
            let sign1 = |p: ProcessorId, c: &Chain| SignedChain {
                signer: p,
                chain: c.clone(),
                signature: keys[p.index()].sign(&crate::bft::chain_statement(INSTANCE, ROUND_PROPOSAL, c)),
            };
            let correct_signed: Vec<SignedChain> = correct
                .iter()
                .zip(&assignment)
                .map(|(&p, &a)| sign1(p, &universe[a]))
                .collect();
            let byz_signed: Vec<Vec<SignedChain>> = byzantine
                .iter()
                .map(|p| universe.iter().map(|c| sign1(p, c)).collect())
                .collect();
            let mut accepted: Vec<Chain> = vec![];
            for q in &quorums {
                let fixed: Vec<SignedChain> = correct_signed.iter().filter(|s| q.contains(s.signer)).cloned().collect();
                let choosers: Vec<&Vec<SignedChain>> = byzantine
                    .iter()
                    .zip(&byz_signed)
                    .filter(|(p, _)| q.contains(*p))
                    .map(|(_, v)| v)
                    .collect();
                let mut pick = vec![0usize; choosers.len()];
                loop {
                    let mut support = fixed.clone();
                    support.extend(choosers.iter().zip(&pick).map(|(v, &i)| v[i].clone()));
                    let x = meet(support.iter().map(|s| &s.chain)).expect("quorums are non-empty");
                    let sender = ProcessorId(0);
                    for candidate in [x.clone(), x.extended([forged.clone()])] {
                        let msg = Round2Message {
                            signature: keys[0].sign(&crate::bft::chain_statement(INSTANCE, ROUND_SECOND, &candidate)),
                            x: candidate.clone(),
                            support: support.clone(),
                        };
                        match validate_bft_lowerbound_message2(&msg, sender, INSTANCE, system, &ledger) {
                            Ok(()) => {
                                report.accepted += 1;
                                if let Some(other) = accepted.iter().find(|o| !agrees(o, &candidate)) {
                                    report.violation = Some((other.clone(), candidate));
                                    return report;
                                }
                                accepted.push(candidate);
                            }
                            Err(_) => report.rejected += 1,
                        }
                    }
                    if !advance(&mut pick, universe.len()) {
                        break;
                    }
                }
            }
            if !advance(&mut assignment, universe.len()) {
                break;
            }
        }
    }
    report
}

/// Next tuple in lexicographic order over `0..base`; false once wrapped.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// All assignments of `universe` chains to `n` processors.
pub fn all_input_vectors(universe: &[Chain], n: usize) -> Vec<Vec<Chain>> {
    let mut out = vec![];
    let mut digits = vec![0usize; n];
    loop {
        out.push(digits.iter().map(|&i| universe[i].clone()).collect());
        if !advance(&mut digits, universe.len()) {
            return out;
        }
    }
}
