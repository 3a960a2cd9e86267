//! The property-check pipeline: a pure function from a trace to a report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Chain;
use crate::leader::{first_instance_with_timer_above, leader_for};
use crate::netsim::SyncMode;
use crate::quorum::{ProcSet, ProcessorId};
use crate::smr::check::{
    agreement_violation, input_extension_violation, missing_output, monotonicity_violation, progress_stalls,
    relay_violation, validity_violation, Decision, OutputRecord, Proposal,
};
use crate::trace::{EventKind, Trace, TraceEvent};
use crate::turtle::{self, Lifecycle, TurtleInput, TurtleOutput, UnanimityMode};

use super::config::ScenarioConfig;

/// Groups of properties a check can cover. Network properties are always checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecFamily {
    /// Replication properties plus the composition invariants, all processors.
    Smr,
    /// Per-instance turtle properties, all processors.
    Turtle,
    /// Replication and turtle properties over correct processors, for
    /// Byzantine-tolerant runs.
    Bft,
}

impl SpecFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            SpecFamily::Smr => "smr",
            SpecFamily::Turtle => "turtle",
            SpecFamily::Bft => "bft",
        }
    }

    /// Families that apply to a run with this configuration.
    pub fn defaults_for(cfg: &ScenarioConfig) -> Vec<SpecFamily> {
        if cfg.is_bft() {
            vec![SpecFamily::Bft]
        } else {
            vec![SpecFamily::Smr, SpecFamily::Turtle]
        }
    }
}

impl fmt::Display for SpecFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpecFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "smr" => Ok(SpecFamily::Smr),
            "turtle" => Ok(SpecFamily::Turtle),
            "bft" => Ok(SpecFamily::Bft),
            _ => Err(format!("unknown spec family `{s}` (expected smr, turtle, or bft)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub status: Status,
    /// Whether a failure counts against the run. Properties that are only
    /// reported for information are not gating.
    pub gating: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    /// Sequence numbers of the events that witness a failure.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counterexample: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub events: usize,
    pub messages: usize,
    pub instances: u64,
    pub proposals: usize,
    pub outputs: usize,
    pub decisions: usize,
    pub discards: usize,
    pub adoptions: usize,
    pub progress_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub families: Vec<SpecFamily>,
    pub model_violating: bool,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
    pub properties: Vec<PropertyResult>,
    pub counts: Counts,
}

impl CheckReport {
    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// Gating properties that failed, regardless of the model flag.
    pub fn violations(&self) -> impl Iterator<Item = &PropertyResult> {
        self.properties
            .iter()
            .filter(|p| p.gating && p.status == Status::Fail)
    }

    /// A trace passes unless a gating property fails on a model-conforming run.
    pub fn passed(&self) -> bool {
        self.model_violating || self.violations().next().is_none()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// One line per property.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for p in &self.properties {
            let status = match p.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skip",
            };
            let info = if p.gating { "" } else { " (informational)" };
            s.push_str(&format!("{status:4} {}{info}", p.name));
            if !p.detail.is_empty() {
                s.push_str(&format!(": {}", p.detail));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("trace has no scenario header")]
    MissingHeader,
    #[error("scenario header: {0}")]
    BadHeader(String),
}

/// Protocol-level facts extracted from a trace.
struct View<'a> {
    cfg: ScenarioConfig,
    events: &'a [TraceEvent],
    truncated: bool,
    fatal: Option<String>,
    model_violating: bool,
    crashed: ProcSet,
    byzantine: ProcSet,
    correct: ProcSet,
    proposals: Vec<Proposal>,
    outputs: Vec<OutputRecord>,
    decisions: Vec<Decision>,
    adopts: BTreeMap<u64, ProcSet>,
    discards: usize,
}

impl<'a> View<'a> {
    fn new(trace: &'a Trace) -> Result<Self, CheckError> {
        let header = trace.header().ok_or(CheckError::MissingHeader)?;
        let config = header.config.clone().ok_or(CheckError::MissingHeader)?;
        let cfg: ScenarioConfig = serde_json::from_value(config).map_err(|e| CheckError::BadHeader(e.to_string()))?;
        let end = trace.end();
        let mut v = View {
            truncated: end.and_then(|e| e.truncated).unwrap_or(false),
            fatal: end.and_then(|e| e.fatal.clone()),
            model_violating: header.model_violating.unwrap_or(false) || cfg.exceeds_fault_bound(),
            byzantine: cfg.byzantine(),
            cfg,
            events: &trace.events,
            crashed: ProcSet::EMPTY,
            correct: ProcSet::EMPTY,
            proposals: vec![],
            outputs: vec![],
            decisions: vec![],
            adopts: BTreeMap::new(),
            discards: 0,
        };
        for e in &trace.events {
            let (Some(p), inst) = (e.processor(), e.instance) else { continue };
            let chain = || e.chain.clone().unwrap_or_default();
            match (e.kind, inst) {
                (EventKind::Crash, _) => v.crashed.insert(p),
                (EventKind::Propose, Some(i)) => v.proposals.push(Proposal {
                    proc: p,
                    instance: i,
                    chain: chain(),
                    seq: e.seq,
                }),
                (EventKind::Output, Some(i)) => v.outputs.push(OutputRecord {
                    proc: p,
                    instance: i,
                    decided: chain(),
                    upper: e.upper.clone().unwrap_or_default(),
                    seq: e.seq,
                }),
                (EventKind::Decide, Some(i)) => v.decisions.push(Decision {
                    proc: p,
                    instance: i,
                    chain: chain(),
                    seq: e.seq,
                }),
                (EventKind::Adopt, Some(i)) => v.adopts.entry(i).or_default().insert(p),
                (EventKind::Discard, _) => v.discards += 1,
                _ => {}
            }
        }
        v.correct = ProcSet::all(v.cfg.n).difference(v.crashed).difference(v.byzantine);
        Ok(v)
    }

    fn counts(&self) -> Counts {
        Counts {
            events: self.events.len(),
            messages: self.events.iter().filter(|e| e.kind == EventKind::Send).count(),
            instances: self.outputs.iter().map(|o| o.instance).max().unwrap_or(0),
            proposals: self.proposals.len(),
            outputs: self.outputs.len(),
            decisions: self.decisions.len(),
            discards: self.discards,
            adoptions: self.adopts.values().map(|s| s.len()).sum(),
            progress_windows: 0,
        }
    }

    /// Last instance completed by each member of `set`.
    fn completed(&self, set: ProcSet) -> BTreeMap<ProcessorId, u64> {
        let mut m: BTreeMap<ProcessorId, u64> = set.iter().map(|p| (p, 0)).collect();
        for o in &self.outputs {
            if let Some(e) = m.get_mut(&o.proc) {
                *e = (*e).max(o.instance);
            }
        }
        m
    }
}

struct Results<'r> {
    list: &'r mut Vec<PropertyResult>,
    prefix: &'static str,
    gating: bool,
}

impl Results<'_> {
    fn push(&mut self, name: &str, outcome: Outcome) {
        self.push_with(name, outcome, self.gating);
    }

    fn push_with(&mut self, name: &str, outcome: Outcome, gating: bool) {
        let (status, detail, counterexample) = match outcome {
            Outcome::Pass(d) => (Status::Pass, d, vec![]),
            Outcome::Fail(d, c) => (Status::Fail, d, c),
            Outcome::Skipped(d) => (Status::Skipped, d, vec![]),
        };
        self.list.push(PropertyResult {
            name: format!("{}{name}", self.prefix),
            status,
            gating,
            detail,
            counterexample,
        });
    }
}

enum Outcome {
    Pass(String),
    Fail(String, Vec<u64>),
    Skipped(String),
}

fn pass() -> Outcome {
    Outcome::Pass(String::new())
}

const TRUNCATED: &str = "trace truncated before quiescence";

/// Runs the given families (or the defaults for the trace's scenario).
pub fn check_trace(trace: &Trace, families: Option<&[SpecFamily]>) -> Result<CheckReport, CheckError> {
    let view = View::new(trace)?;
    let families: Vec<SpecFamily> = match families {
        Some(f) if !f.is_empty() => f.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        _ => SpecFamily::defaults_for(&view.cfg),
    };
    let mut list = vec![];
    let mut counts = view.counts();
    {
        let mut r = Results {
            list: &mut list,
            prefix: "",
            gating: true,
        };
        r.push(
            "run_internal_invariants",
            match &view.fatal {
                None => pass(),
                Some(f) => Outcome::Fail(f.clone(), trace.end().map(|e| vec![e.seq]).unwrap_or_default()),
            },
        );
        check_network(&view, &mut r);
    }
    for family in &families {
        match family {
            SpecFamily::Smr => {
                let mut r = Results {
                    list: &mut list,
                    prefix: "smr_",
                    gating: true,
                };
                counts.progress_windows += check_smr(&view, ProcSet::all(view.cfg.n), &mut r, false);
            }
            SpecFamily::Turtle => {
                let mut r = Results {
                    list: &mut list,
                    prefix: "turtle_",
                    gating: true,
                };
                check_turtles(&view, ProcSet::all(view.cfg.n), UnanimityMode::Crash, &mut r);
            }
            SpecFamily::Bft => {
                let honest = ProcSet::all(view.cfg.n).difference(view.byzantine);
                let mut r = Results {
                    list: &mut list,
                    prefix: "bft_smr_",
                    gating: true,
                };
                counts.progress_windows += check_smr(&view, honest.difference(view.crashed), &mut r, true);
                let mut r = Results {
                    list: &mut list,
                    prefix: "bft_turtle_",
                    gating: true,
                };
                check_turtles(&view, honest.difference(view.crashed), UnanimityMode::Bft, &mut r);
            }
        }
    }
    Ok(CheckReport {
        families,
        model_violating: view.model_violating,
        truncated: view.truncated,
        fatal: view.fatal.clone(),
        properties: list,
        counts,
    })
}

fn check_network(v: &View<'_>, r: &mut Results<'_>) {
    struct SendRec {
        from: u16,
        to: u16,
        digest: Option<String>,
        seq: u64,
        arrived: Option<u64>,
    }
    let mut sends: HashMap<u64, SendRec> = HashMap::new();
    let mut crash_seq: BTreeMap<u16, u64> = BTreeMap::new();
    let mut forgery: Option<(String, Vec<u64>)> = None;
    let mut silence: Option<(String, Vec<u64>)> = None;
    for e in v.events {
        if let Some(p) = e.proc {
            if let Some(&c) = crash_seq.get(&p) {
                if e.kind != EventKind::Drop && silence.is_none() {
                    silence = Some((format!("p{p} has a {} event after crashing", e.kind.as_str()), vec![c, e.seq]));
                }
            }
        }
        match e.kind {
            EventKind::Crash => {
                if let Some(p) = e.proc {
                    crash_seq.entry(p).or_insert(e.seq);
                }
            }
            EventKind::Send => {
                if let (Some(m), Some(from), Some(to)) = (e.msg, e.proc, e.peer) {
                    sends.insert(
                        m,
                        SendRec {
                            from,
                            to,
                            digest: e.payload_digest.clone(),
                            seq: e.seq,
                            arrived: None,
                        },
                    );
                }
            }
            EventKind::Deliver | EventKind::Drop => {
                let bad = |why: &str, seqs: Vec<u64>| Some((why.to_string(), seqs));
                let Some(m) = e.msg else { continue };
                let found = match sends.get_mut(&m) {
                    None => bad(&format!("message {m} arrives without a send"), vec![e.seq]),
                    Some(s) if Some(s.from) != e.peer || Some(s.to) != e.proc => {
                        bad(&format!("message {m} arrives at the wrong endpoints"), vec![s.seq, e.seq])
                    }
                    Some(s) if e.kind == EventKind::Deliver && s.digest != e.payload_digest => {
                        bad(&format!("message {m} arrives with altered bytes"), vec![s.seq, e.seq])
                    }
                    Some(s) if s.arrived.is_some() => {
                        bad(&format!("message {m} arrives twice"), vec![s.seq, e.seq])
                    }
                    Some(s) => {
                        s.arrived = Some(e.seq);
                        if e.kind == EventKind::Drop && !e.proc.is_some_and(|p| crash_seq.contains_key(&p)) {
                            bad(&format!("message {m} dropped at a live processor"), vec![s.seq, e.seq])
                        } else {
                            None
                        }
                    }
                };
                if forgery.is_none() {
                    forgery = found;
                }
            }
            _ => {}
        }
    }
    let outcome = |f: Option<(String, Vec<u64>)>| match f {
        None => pass(),
        Some((d, c)) => Outcome::Fail(d, c),
    };
    r.push("net_no_forgery", outcome(forgery));
    r.push("net_crash_silence", outcome(silence));
    let reliability = if v.truncated {
        Outcome::Skipped(TRUNCATED.into())
    } else {
        let mut lost: Vec<_> = sends.iter().filter(|(_, s)| s.arrived.is_none()).collect();
        lost.sort_by_key(|(m, _)| **m);
        match lost.first() {
            None => pass(),
            Some((m, s)) => Outcome::Fail(
                format!("{} messages never arrived (first: message {m})", lost.len()),
                vec![s.seq],
            ),
        }
    };
    r.push("net_reliability", reliability);
}

/// Replication properties. Decisions and outputs are taken from `subjects`;
/// proposals from everyone. Returns the number of progress windows checked.
fn check_smr(v: &View<'_>, subjects: ProcSet, r: &mut Results<'_>, bft: bool) -> usize {
    let decisions: Vec<Decision> = v.decisions.iter().filter(|d| subjects.contains(d.proc)).cloned().collect();
    let outputs: Vec<OutputRecord> = v.outputs.iter().filter(|o| subjects.contains(o.proc)).cloned().collect();
    let correct = v.correct;

    r.push(
        "agreement",
        match agreement_violation(&decisions) {
            None => pass(),
            Some((a, b)) => Outcome::Fail(
                format!(
                    "p{} decides {} and p{} decides {}",
                    decisions[a].proc.0, decisions[a].chain, decisions[b].proc.0, decisions[b].chain
                ),
                vec![decisions[a].seq, decisions[b].seq],
            ),
        },
    );
    r.push(
        "validity",
        match validity_violation(&decisions, &v.proposals) {
            None => pass(),
            Some(a) => Outcome::Fail(
                format!("p{} decides {}, which no proposal extends", decisions[a].proc.0, decisions[a].chain),
                vec![decisions[a].seq],
            ),
        },
    );
    let relay = if v.truncated {
        Outcome::Skipped(TRUNCATED.into())
    } else {
        let horizon = v.completed(correct).values().copied().min().unwrap_or(0);
        match relay_violation(&decisions, correct, horizon) {
            None => Outcome::Pass(format!("checked through instance {horizon}")),
            Some((a, q)) => Outcome::Fail(
                format!(
                    "p{} decides {} in instance {}, but p{} never decides it or an extension",
                    decisions[a].proc.0, decisions[a].chain, decisions[a].instance, q.0
                ),
                vec![decisions[a].seq],
            ),
        }
    };
    // Relay is not among the guarantees of the Byzantine-tolerant composition.
    r.push_with("relay", relay, !bft);
    r.push(
        "monotonicity",
        match monotonicity_violation(&decisions) {
            None => pass(),
            Some((a, b)) => Outcome::Fail(
                format!(
                    "p{} decides {} and later {}",
                    decisions[a].proc.0, decisions[a].chain, decisions[b].chain
                ),
                vec![decisions[a].seq, decisions[b].seq],
            ),
        },
    );
    let windows = check_progress(v, &decisions, r, bft);
    r.push(
        "input_extends_decisions",
        match input_extension_violation(&outputs, &v.proposals) {
            None => pass(),
            Some((a, b)) => Outcome::Fail(
                format!(
                    "p{} outputs d = {} in instance {}, but p{} proposes {} in instance {}",
                    outputs[a].proc.0,
                    outputs[a].decided,
                    outputs[a].instance,
                    v.proposals[b].proc.0,
                    v.proposals[b].chain,
                    v.proposals[b].instance
                ),
                vec![outputs[a].seq, v.proposals[b].seq],
            ),
        },
    );
    let all_outputs = if v.truncated {
        Outcome::Skipped(TRUNCATED.into())
    } else {
        match missing_output(&outputs, correct, v.cfg.instances) {
            None => pass(),
            Some((p, i)) => Outcome::Fail(format!("p{} has no output for instance {i}", p.0), vec![]),
        }
    };
    r.push("all_outputs", all_outputs);
    windows
}

/// Growth of decisions under the leader wrapper, checked in windows of
/// `4·n` instances once timers exceed `Δ·2^n` and GST has passed.
fn check_progress(v: &View<'_>, decisions: &[Decision], r: &mut Results<'_>, bft: bool) -> usize {
    let SyncMode::PartialSync { gst, delta } = v.cfg.sync else {
        let why = "needs the leader wrapper under partial synchrony";
        r.push("progress", Outcome::Skipped(why.into()));
        r.push("leader_adoption", Outcome::Skipped(why.into()));
        return 0;
    };
    if !v.cfg.leader.enabled {
        let why = "needs the leader wrapper under partial synchrony";
        r.push("progress", Outcome::Skipped(why.into()));
        r.push("leader_adoption", Outcome::Skipped(why.into()));
        return 0;
    }
    if v.truncated {
        r.push("progress", Outcome::Skipped(TRUNCATED.into()));
        r.push("leader_adoption", Outcome::Skipped(TRUNCATED.into()));
        return 0;
    }
    let n = v.cfg.n;
    let bound = delta.saturating_mul(1u64.checked_shl(n as u32).unwrap_or(u64::MAX));
    let timers_large = first_instance_with_timer_above(v.cfg.leader.initial_timer, bound);
    let at_gst = v
        .events
        .iter()
        .filter(|e| e.t <= gst && matches!(e.kind, EventKind::Propose | EventKind::Output))
        .filter_map(|e| e.instance)
        .max()
        .unwrap_or(0);
    if timers_large == u64::MAX {
        let why = format!("timers never exceed Δ·2^n = {bound}");
        r.push("progress", Outcome::Skipped(why.clone()));
        r.push("leader_adoption", Outcome::Skipped(why));
        return 0;
    }
    let start = timers_large.max(at_gst + 1);
    let window = 4 * n as u64;
    let completed = v.completed(v.correct);
    let (stalls, checked) = progress_stalls(decisions, v.correct, start, window, &completed);
    let progress = match (stalls.first(), checked) {
        (_, 0) => Outcome::Skipped(format!("no complete window of {window} instances from instance {start}")),
        (None, _) => Outcome::Pass(format!(
            "{} windows of {window} instances from instance {start}, every correct processor",
            checked / v.correct.len().max(1)
        )),
        (Some(s), _) => Outcome::Fail(
            format!(
                "{} of {checked} windows stall; first: p{} over instances {}..={}",
                stalls.len(),
                s.proc.0,
                s.first,
                s.last
            ),
            vec![],
        ),
    };
    // Only the crash-tolerant composition comes with a progress guarantee.
    r.push_with("progress", progress, !bft);

    let last = completed.values().copied().min().unwrap_or(0);
    let mut missing = vec![];
    let mut windows = 0;
    let mut first = start;
    while first + window - 1 <= last {
        windows += 1;
        let unanimous = (first..first + window).any(|i| {
            let leader = leader_for(i, n);
            let adopted = v.adopts.get(&i).copied().unwrap_or(ProcSet::EMPTY);
            v.correct.contains(leader) && v.correct.difference(adopted).iter().all(|p| p == leader)
        });
        if !unanimous {
            missing.push(first);
        }
        first += window;
    }
    let adoption = match (missing.first(), windows) {
        (_, 0) => Outcome::Skipped(format!("no complete window of {window} instances from instance {start}")),
        (None, _) => Outcome::Pass(format!("{windows} windows")),
        (Some(f), _) => Outcome::Fail(
            format!("no instance in {f}..{} where every correct processor adopted the leader's chain", f + window),
            vec![],
        ),
    };
    r.push_with("leader_adoption", adoption, !bft);
    checked
}

/// Per-instance turtle properties. Outputs are taken from `subjects`;
/// inputs from every recorded proposal.
fn check_turtles(v: &View<'_>, subjects: ProcSet, mode: UnanimityMode, r: &mut Results<'_>) {
    let mut inputs: BTreeMap<u64, Vec<(&Proposal, TurtleInput)>> = BTreeMap::new();
    for p in &v.proposals {
        inputs
            .entry(p.instance)
            .or_default()
            .push((p, TurtleInput::new(p.instance, p.chain.clone())));
    }
    let mut outputs: BTreeMap<u64, Vec<(&OutputRecord, TurtleOutput)>> = BTreeMap::new();
    for o in v.outputs.iter().filter(|o| subjects.contains(o.proc)) {
        outputs.entry(o.instance).or_default().push((
            o,
            TurtleOutput {
                turtle_index: o.instance,
                decided: o.decided.clone(),
                upper: o.upper.clone(),
            },
        ));
    }
    let instances: BTreeSet<u64> = inputs.keys().chain(outputs.keys()).copied().collect();
    let mut agreement = None;
    let mut unanimity = None;
    let mut validity = None;
    let mut termination = None;
    let none_in = vec![];
    let none_out = vec![];
    for &i in &instances {
        let ins = inputs.get(&i).unwrap_or(&none_in);
        let outs = outputs.get(&i).unwrap_or(&none_out);
        let out_values: Vec<TurtleOutput> = outs.iter().map(|(_, o)| o.clone()).collect();
        let in_values: Vec<TurtleInput> = ins.iter().map(|(_, c)| c.clone()).collect();
        if agreement.is_none() {
            if let Ok(Some((a, b))) = turtle::agreement_violation(&out_values) {
                agreement = Some(Outcome::Fail(
                    format!(
                        "instance {i}: p{} outputs d = {} but p{} outputs u = {}",
                        outs[a].0.proc.0, outs[a].0.decided, outs[b].0.proc.0, outs[b].0.upper
                    ),
                    vec![outs[a].0.seq, outs[b].0.seq],
                ));
            }
        }
        if unanimity.is_none() {
            if let Some(a) = turtle::unanimity_violation(&in_values, &out_values, mode) {
                let w = crate::chain::meet(in_values.iter().map(|c| &c.chain)).unwrap_or_default();
                unanimity = Some(Outcome::Fail(
                    format!(
                        "instance {i}: every input extends {w}, but p{} outputs ⟨{}, {}⟩",
                        outs[a].0.proc.0, outs[a].0.decided, outs[a].0.upper
                    ),
                    vec![outs[a].0.seq],
                ));
            }
        }
        if validity.is_none() {
            if let Some(a) = turtle::validity_violation(&in_values, &out_values) {
                validity = Some(Outcome::Fail(
                    format!(
                        "instance {i}: p{} outputs u = {}, which no input extends",
                        outs[a].0.proc.0, outs[a].0.upper
                    ),
                    vec![outs[a].0.seq],
                ));
            }
        }
        if termination.is_none() && !v.truncated {
            let records: Vec<Lifecycle> = subjects
                .iter()
                .map(|p| Lifecycle {
                    proc: p,
                    correct: v.correct.contains(p),
                    started: ins.iter().any(|(q, _)| q.proc == p),
                    output: outs.iter().any(|(o, _)| o.proc == p),
                })
                .collect();
            if let Some(p) = turtle::termination_violation(&records) {
                let seq = ins.iter().find(|(q, _)| q.proc == p).map(|(q, _)| q.seq);
                termination = Some(Outcome::Fail(
                    format!("instance {i}: p{} started but never produced an output", p.0),
                    seq.into_iter().collect(),
                ));
            }
        }
    }
    let summary = || Outcome::Pass(format!("{} instances", instances.len()));
    r.push("termination", if v.truncated { Outcome::Skipped(TRUNCATED.into()) } else { termination.unwrap_or_else(summary) });
    r.push("agreement", agreement.unwrap_or_else(summary));
    r.push("unanimity", unanimity.unwrap_or_else(summary));
    r.push("validity", validity.unwrap_or_else(summary));
}

/// Longest chain decided by each processor.
pub fn longest_decisions(trace: &Trace) -> BTreeMap<u16, Chain> {
    let mut m: BTreeMap<u16, Chain> = BTreeMap::new();
    for e in trace.of_kind(EventKind::Decide) {
        if let (Some(p), Some(c)) = (e.proc, &e.chain) {
            let entry = m.entry(p).or_default();
            if c.len() > entry.len() {
                *entry = c.clone();
            }
        }
    }
    m
}

/// Each processor's decisions in order, as `(instance, chain)`.
pub fn decision_logs(trace: &Trace) -> BTreeMap<u16, Vec<(u64, Chain)>> {
    let mut m: BTreeMap<u16, Vec<(u64, Chain)>> = BTreeMap::new();
    for e in trace.of_kind(EventKind::Decide) {
        if let (Some(p), Some(i), Some(c)) = (e.proc, e.instance, &e.chain) {
            m.entry(p).or_default().push((i, c.clone()));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::run_scenario;

    fn run_and_check(json: &str) -> CheckReport {
        let cfg = ScenarioConfig::from_json(json).unwrap();
        let out = run_scenario(&cfg).unwrap();
        check_trace(&out.trace, None).unwrap()
    }

    fn assert_clean(report: &CheckReport) {
        assert!(report.passed(), "{}", report.summary());
        assert!(!report.truncated);
    }

    #[test]
    fn crash_runs_pass() {
        for kind in ["onestep", "lowerbound"] {
            for seed in 0..5 {
                let r = run_and_check(&format!(
                    r#"{{"n": 4, "f": 1, "k": 3, "turtle_schedule": [{{"kind": "{kind}"}}], "instances": 8,
                       "faults": {{"crashes": {{"2": 40}}}}, "seed": {seed}}}"#
                ));
                assert_clean(&r);
                assert!(r.counts.outputs > 0);
            }
        }
    }

    #[test]
    fn leader_runs_make_progress() {
        let r = run_and_check(
            r#"{"n": 4, "f": 1, "k": 3, "turtle_schedule": [{"kind": "onestep"}], "instances": 40,
               "sync": {"mode": "partial_sync", "gst": 100, "delta": 5},
               "leader": {"enabled": true, "initial_timer": 10}, "seed": 7}"#,
        );
        assert_clean(&r);
        eprintln!("{}", r.summary());
        assert_eq!(r.property("smr_progress").unwrap().status, Status::Pass);
        assert_eq!(r.property("smr_leader_adoption").unwrap().status, Status::Pass);
    }

    #[test]
    fn byzantine_runs_pass() {
        for strategy in ["equivocate", "silent", "garbage-signatures", "stale-evidence", "cycle"] {
            for seed in 0..3 {
                let r = run_and_check(&format!(
                    r#"{{"n": 6, "f": 1, "k": 5, "turtle_schedule": [{{"kind": "bft_onestep"}}], "instances": 6,
                       "faults": {{"roles": {{"3": "byzantine:{strategy}"}}}}, "seed": {seed},
                       "leader": {{"enabled": true, "initial_timer": 10}}}}"#
                ));
                assert_clean(&r);
            }
        }
    }

    #[test]
    fn missing_header_is_an_error() {
        assert_eq!(check_trace(&Trace::new(), None).unwrap_err(), CheckError::MissingHeader);
    }
}
