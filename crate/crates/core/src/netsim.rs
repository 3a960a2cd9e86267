//! Deterministic discrete-event network simulator.
//!
//! Events are processed in `(time, sequence)` order, where the sequence
//! number is assigned when an event is scheduled. All randomness comes from
//! one seeded generator, so a `(configuration, seed)` pair fixes the run.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use crate::quorum::ProcessorId;
use crate::trace::{payload_digest, EventKind, Trace, TraceEvent};

/// Largest delay an asynchronous message can draw. Keeps every delay finite.
pub const MAX_ASYNC_DELAY: u64 = 100_000;

pub const DEFAULT_EVENT_BUDGET: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AsyncPreset {
    /// Heavy-tailed delays: most messages are quick, a few are very slow.
    #[default]
    Default,
    /// Wide uniform spread plus a heavier tail; reorders aggressively.
    ReorderHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyncMode {
    Async {
        #[serde(default)]
        preset: AsyncPreset,
    },
    /// Before `gst` delays are arbitrary but every message sent at `t` arrives
    /// by `max(t, gst) + delta`; afterwards delays lie in `[1, delta]`.
    PartialSync { gst: u64, delta: u64 },
}

impl Default for SyncMode {
    fn default() -> Self {
        SyncMode::Async {
            preset: AsyncPreset::Default,
        }
    }
}

/// Delay of a message sent at `now` to another processor.
pub fn deliver_policy(now: u64, mode: &SyncMode, rng: &mut impl Rng) -> u64 {
    match *mode {
        SyncMode::Async { preset } => {
            let raw: f64 = match preset {
                AsyncPreset::Default => Pareto::new(1.0, 1.2).expect("valid parameters").sample(rng),
                AsyncPreset::ReorderHeavy => {
                    let spread = rng.random_range(1.0..60.0);
                    let tail: f64 = Pareto::new(1.0, 0.9).expect("valid parameters").sample(rng);
                    spread + if rng.random_bool(0.1) { tail * 20.0 } else { 0.0 }
                }
            };
            (raw.ceil() as u64).clamp(1, MAX_ASYNC_DELAY)
        }
        SyncMode::PartialSync { gst, delta } => {
            let delta = delta.max(1);
            let latest = now.max(gst).saturating_add(delta);
            let span = (latest - now).max(1);
            if now >= gst {
                rng.random_range(1..=delta.min(span))
            } else {
                rng.random_range(1..=span)
            }
        }
    }
}

/// Faults injected by the simulator itself. Byzantine behaviour is supplied
/// by the caller as a different [`Node`] implementation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub crashes: BTreeMap<ProcessorId, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub sync: SyncMode,
    pub faults: FaultPlan,
    pub seed: u64,
    pub event_budget: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Label {
    pub instance: Option<u64>,
    pub round: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    All,
    To(ProcessorId),
}

/// What a node may do while handling one event.
#[derive(Debug)]
pub struct Context {
    me: ProcessorId,
    n: usize,
    now: u64,
    sends: Vec<(Dest, Vec<u8>, Label)>,
    timers: Vec<(u64, u64)>,
    events: Vec<TraceEvent>,
    fatal: Option<String>,
}

impl Context {
    /// A context whose effects the caller inspects instead of the simulator.
    pub(crate) fn new(me: ProcessorId, n: usize, now: u64) -> Self {
        Self {
            me,
            n,
            now,
            sends: vec![],
            timers: vec![],
            events: vec![],
            fatal: None,
        }
    }

    pub fn me(&self) -> ProcessorId {
        self.me
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn send(&mut self, to: ProcessorId, bytes: Vec<u8>, label: Label) {
        self.sends.push((Dest::To(to), bytes, label));
    }

    /// Sends to every processor, including this one.
    pub fn broadcast(&mut self, bytes: Vec<u8>, label: Label) {
        self.sends.push((Dest::All, bytes, label));
    }

    /// Fires [`Node::on_timer`] with `id` after `delay`.
    pub fn set_timer(&mut self, delay: u64, id: u64) {
        self.timers.push((delay, id));
    }

    /// Adds a protocol event to the trace, attributed to this processor.
    pub fn record(&mut self, ev: TraceEvent) {
        self.events.push(ev.proc(self.me));
    }

    pub(crate) fn into_effects(self) -> Effects {
        Effects {
            sends: self.sends,
            timers: self.timers,
        }
    }

    /// Stops the run: an internal invariant of this node broke.
    pub fn fail(&mut self, message: impl Into<String>) {
        self.fatal.get_or_insert_with(|| message.into());
    }
}

/// Messages and timers a node asked for while handling one event.
#[derive(Debug, Default)]
pub(crate) struct Effects {
    pub sends: Vec<(Dest, Vec<u8>, Label)>,
    pub timers: Vec<(u64, u64)>,
}

pub trait Node {
    fn on_start(&mut self, ctx: &mut Context);
    fn on_message(&mut self, from: ProcessorId, bytes: &[u8], ctx: &mut Context);
    fn on_timer(&mut self, id: u64, ctx: &mut Context);
}

#[derive(Debug)]
enum SimEventKind {
    Start(ProcessorId),
    Deliver {
        from: ProcessorId,
        to: ProcessorId,
        msg: u64,
        digest: Arc<str>,
        bytes: Arc<[u8]>,
    },
    TimerFire {
        proc: ProcessorId,
        id: u64,
    },
    Crash(ProcessorId),
    Gst,
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    seq: u64,
    kind: SimEventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub trace: Trace,
    pub truncated: bool,
    pub fatal: Option<String>,
    pub events_processed: u64,
}

pub struct Simulation {
    config: SimConfig,
    nodes: Vec<Box<dyn Node>>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    next_msg: u64,
    crashed: Vec<bool>,
    rng: ChaCha8Rng,
    trace: Trace,
}

impl Simulation {
    /// `nodes[p]` runs processor `p`. `header` events open the trace.
    pub fn new(config: SimConfig, nodes: Vec<Box<dyn Node>>, header: Vec<TraceEvent>) -> Self {
        assert_eq!(nodes.len(), config.n, "one node per processor");
        let mut trace = Trace::new();
        for ev in header {
            trace.push(ev);
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let crashed = vec![false; config.n];
        Self {
            config,
            nodes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            next_msg: 0,
            crashed,
            rng,
            trace,
        }
    }

    fn schedule(&mut self, time: u64, kind: SimEventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, kind }));
    }

    pub fn run(mut self) -> SimOutcome {
        // Crashes go first so that a crash at time 0 precedes the processor's start.
        let crashes: Vec<_> = self.config.faults.crashes.iter().map(|(p, t)| (*p, *t)).collect();
        for (p, t) in crashes {
            self.schedule(t, SimEventKind::Crash(p));
        }
        if let SyncMode::PartialSync { gst, .. } = self.config.sync {
            self.schedule(gst, SimEventKind::Gst);
        }
        for p in 0..self.config.n {
            self.schedule(0, SimEventKind::Start(ProcessorId(p as u16)));
        }

        let mut processed = 0u64;
        let mut truncated = false;
        let mut fatal = None;
        let mut now = 0;
        while let Some(Reverse(ev)) = self.queue.pop() {
            if processed >= self.config.event_budget {
                truncated = true;
                break;
            }
            processed += 1;
            now = ev.time;
            if let Some(msg) = self.step(ev) {
                fatal = Some(msg);
                break;
            }
        }
        let mut end = TraceEvent::new(EventKind::End).at(now);
        end.truncated = Some(truncated);
        end.fatal = fatal.clone();
        self.trace.push(end);
        SimOutcome {
            trace: self.trace,
            truncated,
            fatal,
            events_processed: processed,
        }
    }

    fn step(&mut self, ev: Scheduled) -> Option<String> {
        let now = ev.time;
        let (p, action): (ProcessorId, Box<dyn FnOnce(&mut dyn Node, &mut Context)>) = match ev.kind {
            SimEventKind::Crash(p) => {
                if !self.crashed[p.index()] {
                    self.crashed[p.index()] = true;
                    self.trace.push(TraceEvent::new(EventKind::Crash).at(now).proc(p));
                }
                return None;
            }
            SimEventKind::Gst => {
                self.trace.push(TraceEvent::new(EventKind::Gst).at(now));
                return None;
            }
            SimEventKind::Start(p) => (p, Box::new(|n: &mut dyn Node, ctx: &mut Context| n.on_start(ctx))),
            SimEventKind::TimerFire { proc, id } => (
                proc,
                Box::new(move |n: &mut dyn Node, ctx: &mut Context| n.on_timer(id, ctx)),
            ),
            SimEventKind::Deliver {
                from,
                to,
                msg,
                digest,
                bytes,
            } => {
                if self.crashed[to.index()] {
                    let mut d = TraceEvent::new(EventKind::Drop).at(now).proc(to).peer(from);
                    d.msg = Some(msg);
                    self.trace.push(d);
                    return None;
                }
                let mut d = TraceEvent::new(EventKind::Deliver).at(now).proc(to).peer(from);
                d.msg = Some(msg);
                d.payload_digest = Some(digest.to_string());
                self.trace.push(d);
                (
                    to,
                    Box::new(move |n: &mut dyn Node, ctx: &mut Context| n.on_message(from, &bytes, ctx)),
                )
            }
        };
        if self.crashed[p.index()] {
            return None;
        }
        let mut ctx = Context::new(p, self.config.n, now);
        action(self.nodes[p.index()].as_mut(), &mut ctx);
        self.apply(ctx)
    }

    fn apply(&mut self, ctx: Context) -> Option<String> {
        let now = ctx.now;
        let me = ctx.me;
        for ev in ctx.events {
            self.trace.push(ev.at(now));
        }
        for (delay, id) in ctx.timers {
            self.schedule(now.saturating_add(delay), SimEventKind::TimerFire { proc: me, id });
        }
        for (dest, bytes, label) in ctx.sends {
            let bytes: Arc<[u8]> = bytes.into();
            let digest: Arc<str> = payload_digest(&bytes).into();
            let targets: Vec<ProcessorId> = match dest {
                Dest::All => (0..self.config.n).map(|q| ProcessorId(q as u16)).collect(),
                Dest::To(q) => vec![q],
            };
            for to in targets {
                let msg = self.next_msg;
                self.next_msg += 1;
                let mut s = TraceEvent::new(EventKind::Send).at(now).proc(me).peer(to);
                s.msg = Some(msg);
                s.instance = label.instance;
                s.round = label.round;
                s.payload_digest = Some(digest.to_string());
                self.trace.push(s);
                let delay = if to == me {
                    0
                } else {
                    deliver_policy(now, &self.config.sync, &mut self.rng)
                };
                self.schedule(
                    now.saturating_add(delay),
                    SimEventKind::Deliver {
                        from: me,
                        to,
                        msg,
                        digest: Arc::clone(&digest),
                        bytes: Arc::clone(&bytes),
                    },
                );
            }
        }
        ctx.fatal
    }
}
