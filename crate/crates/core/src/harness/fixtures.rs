//! Hand-built traces that each violate at least one checked property, so
//! every checker is shown to be able to fail.

use crate::chain::{Chain, CommandId};
use crate::quorum::ProcessorId;
use crate::trace::{payload_digest, EventKind, Trace, TraceEvent};

use super::check::{check_trace, CheckReport, SpecFamily};
use super::config::ScenarioConfig;

pub struct Fixture {
    pub name: String,
    /// Properties the trace must fail.
    pub fails: Vec<String>,
    pub trace: Trace,
}

impl Fixture {
    pub fn check(&self) -> CheckReport {
        let families = [SpecFamily::Smr, SpecFamily::Turtle, SpecFamily::Bft];
        check_trace(&self.trace, Some(&families)).expect("fixtures carry a header")
    }
}

/// Chain of commands issued by processor 0 with the given sequence numbers.
pub fn chain(seqs: &[u64]) -> Chain {
    Chain::from_ids(seqs.iter().map(|&s| CommandId::new(0, s)))
}

const CRASH: &str = r#"{"n": 2, "f": 0, "k": 3, "turtle_schedule": [{"kind": "onestep"}], "instances": 1}"#;
const BFT: &str = r#"{"n": 6, "f": 1, "k": 5, "turtle_schedule": [{"kind": "bft_onestep"}], "instances": 1,
    "faults": {"roles": {"5": "byzantine:equivocate"}}}"#;

struct Builder {
    trace: Trace,
    t: u64,
}

impl Builder {
    fn new(config: &str) -> Self {
        Self::with(config, |_| {})
    }

    fn with(config: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> Self {
        let mut cfg = ScenarioConfig::parse(config).expect("fixture configs parse");
        edit(&mut cfg);
        let mut trace = Trace::new();
        trace.push(super::run::scenario_header(&cfg));
        Self { trace, t: 0 }
    }

    fn push(&mut self, ev: TraceEvent) -> &mut Self {
        self.t += 1;
        self.trace.push(ev.at(self.t));
        self
    }

    fn propose(&mut self, p: u16, i: u64, c: &[u64]) -> &mut Self {
        self.push(TraceEvent::new(EventKind::Propose).proc(ProcessorId(p)).instance(i).chain(chain(c)))
    }

    fn output(&mut self, p: u16, i: u64, d: &[u64], u: &[u64]) -> &mut Self {
        self.push(
            TraceEvent::new(EventKind::Output)
                .proc(ProcessorId(p))
                .instance(i)
                .chain(chain(d))
                .upper(chain(u)),
        )
    }

    fn decide(&mut self, p: u16, i: u64, c: &[u64]) -> &mut Self {
        self.push(TraceEvent::new(EventKind::Decide).proc(ProcessorId(p)).instance(i).chain(chain(c)))
    }

    fn message(&mut self, kind: EventKind, from: u16, to: u16, msg: u64, bytes: &[u8]) -> &mut Self {
        let (p, q) = match kind {
            EventKind::Send => (from, to),
            _ => (to, from),
        };
        let mut ev = TraceEvent::new(kind).proc(ProcessorId(p)).peer(ProcessorId(q));
        ev.msg = Some(msg);
        if kind != EventKind::Drop {
            ev.payload_digest = Some(payload_digest(bytes));
        }
        self.push(ev)
    }

    fn crash(&mut self, p: u16) -> &mut Self {
        self.push(TraceEvent::new(EventKind::Crash).proc(ProcessorId(p)))
    }

    fn finish(&mut self, truncated: bool, fatal: Option<&str>) -> Trace {
        let mut end = TraceEvent::new(EventKind::End);
        end.truncated = Some(truncated);
        end.fatal = fatal.map(str::to_string);
        self.push(end);
        std::mem::take(&mut self.trace)
    }

    fn done(&mut self) -> Trace {
        self.finish(false, None)
    }
}

/// Settings shared by the crash-tolerant and Byzantine-tolerant variants.
struct Mode {
    config: &'static str,
    prefix: &'static str,
    /// Correct processors in the configuration.
    correct: &'static [u16],
}

const CRASH_MODE: Mode = Mode {
    config: CRASH,
    prefix: "",
    correct: &[0, 1],
};

const BFT_MODE: Mode = Mode {
    config: BFT,
    prefix: "bft_",
    correct: &[0, 1, 2, 3, 4],
};

fn fixture(name: &str, fails: Vec<String>, trace: Trace) -> Fixture {
    Fixture {
        name: name.to_string(),
        fails,
        trace,
    }
}

fn replication_fixtures(m: &Mode) -> Vec<Fixture> {
    let smr = |p: &str| format!("{}smr_{p}", m.prefix);
    let turtle = |p: &str| format!("{}turtle_{p}", m.prefix);
    let all = m.correct;
    let mut out = vec![];

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]).propose(1, 1, &[2]);
    b.decide(0, 1, &[1]).decide(1, 1, &[2]);
    out.push(fixture("divergent_decisions", vec![smr("agreement")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]).decide(0, 1, &[1, 2]);
    out.push(fixture("decision_without_proposal", vec![smr("validity")], b.done()));

    let mut b = Builder::with(m.config, |c| c.instances = 2);
    for i in 1..=2 {
        for &p in all {
            b.propose(p, i, &[1]).output(p, i, &[], &[1]);
        }
    }
    b.decide(0, 1, &[1]);
    out.push(fixture("decision_never_relayed", vec![smr("relay")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1, 2]).decide(0, 1, &[1, 2]).decide(0, 2, &[1]);
    out.push(fixture("shrinking_decision", vec![smr("monotonicity")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]).output(0, 1, &[1], &[1]).propose(1, 2, &[2]);
    out.push(fixture("later_input_drops_decision", vec![smr("input_extends_decisions")], b.done()));

    let mut b = Builder::with(m.config, |c| c.instances = 2);
    for &p in all {
        b.propose(p, 1, &[]).output(p, 1, &[], &[]);
    }
    out.push(fixture("missing_output", vec![smr("all_outputs")], b.done()));

    // Leader wrapper under partial synchrony, long past GST, with no
    // decisions and no adoptions at all.
    let mut b = Builder::with(m.config, |c| {
        c.instances = 200;
        c.leader.enabled = true;
        c.leader.initial_timer = 10;
        c.sync = crate::netsim::SyncMode::PartialSync { gst: 0, delta: 1 };
    });
    for i in 1..=200 {
        for &p in all {
            b.propose(p, i, &[]).output(p, i, &[], &[]);
        }
    }
    out.push(fixture("stalled_under_leader", vec![smr("progress"), smr("leader_adoption")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]);
    out.push(fixture("instance_never_finishes", vec![turtle("termination")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]).propose(1, 1, &[2]);
    b.output(0, 1, &[1], &[1]).output(1, 1, &[], &[2]);
    out.push(fixture("turtle_outputs_disagree", vec![turtle("agreement")], b.done()));

    // Everyone proposes [1, 2]. The crash mode needs d ⪰ [1, 2]; the
    // Byzantine mode only needs u ⪰ [1, 2].
    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1, 2]).propose(1, 1, &[1, 2]);
    if m.prefix.is_empty() {
        b.output(0, 1, &[1], &[1, 2]);
    } else {
        b.output(0, 1, &[1], &[1]);
    }
    out.push(fixture("unanimous_input_lost", vec![turtle("unanimity")], b.done()));

    let mut b = Builder::new(m.config);
    b.propose(0, 1, &[1]).output(0, 1, &[], &[1, 2]);
    out.push(fixture("upper_bound_without_input", vec![turtle("validity")], b.done()));

    for f in &mut out {
        f.name = format!("{}{}", m.prefix, f.name);
    }
    out
}

/// Every fixture, crash-tolerant and Byzantine-tolerant.
pub fn all() -> Vec<Fixture> {
    let mut out = vec![];

    let mut b = Builder::new(CRASH);
    out.push(fixture("internal_error", vec!["run_internal_invariants".to_string()], b.finish(false, Some("p0: decided chain is not a prefix of the upper bound"))));

    let mut b = Builder::new(CRASH);
    b.message(EventKind::Deliver, 0, 1, 0, b"hello");
    out.push(fixture("delivery_without_send", vec!["net_no_forgery".to_string()], b.done()));

    let mut b = Builder::new(CRASH);
    b.message(EventKind::Send, 0, 1, 0, b"hello").message(EventKind::Deliver, 0, 1, 0, b"jello");
    out.push(fixture("garbled_delivery", vec!["net_no_forgery".to_string()], b.done()));

    let mut b = Builder::new(CRASH);
    b.crash(0).propose(0, 1, &[1]);
    out.push(fixture("activity_after_crash", vec!["net_crash_silence".to_string()], b.done()));

    let mut b = Builder::new(CRASH);
    b.message(EventKind::Send, 0, 1, 0, b"hello");
    out.push(fixture("lost_message", vec!["net_reliability".to_string()], b.done()));

    out.extend(replication_fixtures(&CRASH_MODE));
    out.extend(replication_fixtures(&BFT_MODE));
    out
}

/// A Byzantine processor's divergent decisions do not count against the run.
pub fn byzantine_divergence_is_ignored() -> Trace {
    let mut b = Builder::new(BFT);
    b.propose(0, 1, &[1]).propose(5, 1, &[2]);
    b.decide(0, 1, &[1]).decide(5, 1, &[2]);
    b.done()
}
