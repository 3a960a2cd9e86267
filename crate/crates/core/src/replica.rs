//! One simulated processor: the composition engine, the optional leader
//! phase, and the turtle of the current instance.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::bft::{
    BftContext, BftInput, BftLowerBoundTurtle, BftOneStepTurtle, BftOutput, BftSmrEngine, EvidenceKind,
    SignatureLedger, SigningKey,
};
use crate::chain::Chain;
use crate::leader::{
    leader_for, on_leader_message_or_timeout, timer_length, LeaderConfig, LeaderEvent, LeaderOutcome,
    LeaderPhaseState, ROUND_LEADER,
};
use crate::netsim::{Context, Label, Node};
use crate::quorum::{ProcessorId, QuorumSystem};
use crate::smr::codec::{ChainCodec, CodecMode};
use crate::smr::{QueueSource, SmrEngine, TurtleKind, TurtleSchedule};
use crate::trace::{EventKind, TraceEvent};
use crate::turtle::lowerbound::LowerBoundTurtle;
use crate::turtle::onestep::{OneStepTurtle, UpperSelection};
use crate::turtle::{DiscardReason, TurtleAction, TurtleInput, TurtleOutput, TurtleStateMachine};
use crate::wire::Envelope;

/// Parameters shared by every replica of a run.
#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub system: QuorumSystem,
    pub schedule: TurtleSchedule,
    pub leader: LeaderConfig,
    pub codec: CodecMode,
    /// Instances to run; the replica stops after completing the last one.
    pub instances: u64,
    pub batch_max: usize,
    pub selection: UpperSelection,
}

impl ReplicaConfig {
    pub fn is_bft(&self) -> bool {
        self.schedule.kinds().any(TurtleKind::is_bft)
    }
}

enum Engine {
    Crash(SmrEngine<QueueSource>),
    Bft {
        engine: BftSmrEngine<QueueSource>,
        key: SigningKey,
    },
}

type CrashTurtle = Box<dyn TurtleStateMachine<Input = TurtleInput, Output = TurtleOutput>>;
type BftTurtle = Box<dyn TurtleStateMachine<Input = BftInput, Output = BftOutput>>;

enum Active {
    Crash(CrashTurtle),
    Bft(BftTurtle),
}

enum Phase {
    Idle,
    Waiting(LeaderPhaseState),
    Running(Active),
    Finished,
}

type Inbound = (ProcessorId, u64, u8, Vec<u8>);

pub struct Replica {
    me: ProcessorId,
    cfg: Arc<ReplicaConfig>,
    engine: Engine,
    instance: u64,
    phase: Phase,
    codec: ChainCodec,
    /// Messages for instances (or phases) this replica has not reached yet.
    buffer: BTreeMap<u64, Vec<Inbound>>,
    replay: VecDeque<Inbound>,
}

impl Replica {
    /// `ledger` is required for Byzantine-tolerant schedules.
    pub fn new(me: ProcessorId, cfg: Arc<ReplicaConfig>, ledger: Option<&Arc<SignatureLedger>>) -> Self {
        let source = QueueSource::new(me, cfg.batch_max);
        let engine = if cfg.is_bft() {
            let ledger = ledger.expect("Byzantine-tolerant schedules need a signature ledger");
            Engine::Bft {
                engine: BftSmrEngine::new(source),
                key: ledger.key_for(me),
            }
        } else {
            Engine::Crash(SmrEngine::new(source))
        };
        Self {
            me,
            cfg,
            engine,
            instance: 0,
            phase: Phase::Idle,
            codec: ChainCodec::full(),
            buffer: BTreeMap::new(),
            replay: VecDeque::new(),
        }
    }

    pub fn id(&self) -> ProcessorId {
        self.me
    }

    /// The instance being run, or one past the last when finished.
    pub fn instance(&self) -> u64 {
        self.instance
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished)
    }

    pub fn decision_log(&self) -> &[(u64, Chain)] {
        match &self.engine {
            Engine::Crash(e) => e.decision_log(),
            Engine::Bft { engine, .. } => engine.decision_log(),
        }
    }

    /// Output of the last completed instance (genesis before the first).
    pub fn last_bft_output(&self) -> Option<&BftOutput> {
        match &self.engine {
            Engine::Bft { engine, .. } => Some(engine.last_output()),
            Engine::Crash(_) => None,
        }
    }

    fn last_upper(&self) -> &Chain {
        match &self.engine {
            Engine::Crash(e) => &e.last_output().upper,
            Engine::Bft { engine, .. } => &engine.last_output().upper,
        }
    }

    fn codec_for_current(&self) -> ChainCodec {
        let (reference, known) = match &self.engine {
            Engine::Crash(e) => (e.last_output().decided.clone(), e.last_output().upper.clone()),
            Engine::Bft { engine, .. } => (engine.longest_decided().clone(), engine.last_output().upper.clone()),
        };
        ChainCodec::new(self.cfg.codec, reference, known)
    }

    fn label(&self, round: u8) -> Label {
        Label {
            instance: Some(self.instance),
            round: Some(round),
        }
    }

    fn envelope(&self, round: u8, payload: Vec<u8>) -> Vec<u8> {
        Envelope {
            instance: self.instance,
            round_tag: round,
            sender: self.me.0,
            payload,
        }
        .encode()
    }

    fn discard(&self, ctx: &mut Context, sender: ProcessorId, instance: Option<u64>, round: Option<u8>, reason: DiscardReason) {
        let mut ev = TraceEvent::new(EventKind::Discard).peer(sender).reason(reason.as_str());
        ev.instance = instance;
        ev.round = round;
        ctx.record(ev);
    }

    fn begin(&mut self, index: u64, chain: Chain, ctx: &mut Context) {
        self.instance = index;
        if index > self.cfg.instances {
            self.phase = Phase::Finished;
            self.buffer.clear();
            return;
        }
        self.codec = self.codec_for_current();
        self.buffer = self.buffer.split_off(&index);
        if !self.cfg.leader.enabled {
            self.start_turtle(chain, ctx);
            return;
        }
        let leader = leader_for(index, ctx.n());
        if leader == self.me {
            ctx.record(TraceEvent::new(EventKind::LeaderPropose).instance(index).chain(chain.clone()));
            let payload = self.codec.encode_to_vec(&chain);
            ctx.broadcast(self.envelope(ROUND_LEADER, payload), self.label(ROUND_LEADER));
            self.start_turtle(chain, ctx);
        } else {
            let state = LeaderPhaseState::new(index, ctx.n(), chain, self.last_upper().clone());
            self.phase = Phase::Waiting(state);
            ctx.set_timer(timer_length(self.cfg.leader.initial_timer, index), index);
            self.replay_buffered(index);
        }
    }

    fn replay_buffered(&mut self, index: u64) {
        if let Some(msgs) = self.buffer.remove(&index) {
            self.replay.extend(msgs);
        }
    }

    fn start_turtle(&mut self, chain: Chain, ctx: &mut Context) {
        let index = self.instance;
        ctx.record(TraceEvent::new(EventKind::Propose).instance(index).chain(chain.clone()));
        let kind = self
            .cfg
            .schedule
            .kind_for(index)
            .expect("instances are numbered from 1");
        let system = self.cfg.system.clone();
        let codec = self.codec.clone();
        match &mut self.engine {
            Engine::Crash(_) => {
                let mut turtle: CrashTurtle = match kind {
                    TurtleKind::Onestep => {
                        Box::new(OneStepTurtle::new(system, codec).with_selection(self.cfg.selection))
                    }
                    TurtleKind::Lowerbound => Box::new(LowerBoundTurtle::new(system, codec)),
                    k => {
                        ctx.fail(format!("{k} scheduled in a crash-tolerant run"));
                        return;
                    }
                };
                let result = turtle.start(TurtleInput::new(index, chain));
                self.phase = Phase::Running(Active::Crash(turtle));
                match result {
                    Ok(actions) => self.after_crash_actions(actions, ctx),
                    Err(e) => ctx.fail(e.to_string()),
                }
            }
            Engine::Bft { engine, key } => {
                let bctx = BftContext {
                    system,
                    key: key.clone(),
                    codec,
                    prev_kind: EvidenceKind::for_kind(self.cfg.schedule.kind_for(index - 1)),
                };
                let mut turtle: BftTurtle = match kind {
                    TurtleKind::BftOnestep => Box::new(BftOneStepTurtle::new(bctx)),
                    TurtleKind::BftLowerbound => Box::new(BftLowerBoundTurtle::new(bctx)),
                    k => {
                        ctx.fail(format!("{k} scheduled in a Byzantine-tolerant run"));
                        return;
                    }
                };
                let input = BftInput {
                    turtle_index: index,
                    chain,
                    evidence: engine.last_output().clone(),
                };
                let result = turtle.start(input);
                self.phase = Phase::Running(Active::Bft(turtle));
                match result {
                    Ok(actions) => self.after_bft_actions(actions, ctx),
                    Err(e) => ctx.fail(e.to_string()),
                }
            }
        }
        if matches!(self.phase, Phase::Running(_)) && self.instance == index {
            self.replay_buffered(index);
        }
    }

    /// Performs broadcasts and discards; returns the output, if any.
    fn emit<O>(&self, actions: Vec<TurtleAction<O>>, ctx: &mut Context) -> Option<O> {
        let mut out = None;
        for a in actions {
            match a {
                TurtleAction::Broadcast { round, payload } => {
                    ctx.broadcast(self.envelope(round, payload), self.label(round));
                }
                TurtleAction::ProduceOutput(o) => out = Some(o),
                TurtleAction::Discard { sender, round, reason } => {
                    self.discard(ctx, sender, Some(self.instance), Some(round), reason)
                }
            }
        }
        out
    }

    fn after_crash_actions(&mut self, actions: Vec<TurtleAction<TurtleOutput>>, ctx: &mut Context) {
        let Some(out) = self.emit(actions, ctx) else { return };
        let Engine::Crash(engine) = &mut self.engine else {
            unreachable!("crash turtle under a Byzantine-tolerant engine")
        };
        ctx.record(
            TraceEvent::new(EventKind::Output)
                .instance(out.turtle_index)
                .chain(out.decided.clone())
                .upper(out.upper.clone()),
        );
        match engine.on_turtle_output(out) {
            Ok((decided, next)) => {
                ctx.record(TraceEvent::new(EventKind::Decide).instance(self.instance).chain(decided));
                self.begin(next.turtle_index, next.chain, ctx);
            }
            Err(e) => ctx.fail(e.to_string()),
        }
    }

    fn after_bft_actions(&mut self, actions: Vec<TurtleAction<BftOutput>>, ctx: &mut Context) {
        let Some(out) = self.emit(actions, ctx) else { return };
        let Engine::Bft { engine, .. } = &mut self.engine else {
            unreachable!("Byzantine-tolerant turtle under a crash engine")
        };
        ctx.record(
            TraceEvent::new(EventKind::Output)
                .instance(out.turtle_index)
                .chain(out.decided.clone())
                .upper(out.upper.clone()),
        );
        match engine.on_bft_output(out) {
            Ok((decision, next)) => {
                if let Some(d) = decision {
                    ctx.record(TraceEvent::new(EventKind::Decide).instance(self.instance).chain(d));
                }
                self.begin(next.turtle_index, next.chain, ctx);
            }
            Err(e) => ctx.fail(e.to_string()),
        }
    }

    fn route(&mut self, from: ProcessorId, instance: u64, round: u8, payload: Vec<u8>, ctx: &mut Context) {
        if instance < self.instance || matches!(self.phase, Phase::Finished) {
            return;
        }
        if instance > self.instance || matches!(self.phase, Phase::Idle) {
            self.buffer.entry(instance).or_default().push((from, instance, round, payload));
            return;
        }
        match &mut self.phase {
            Phase::Waiting(state) => {
                if round != ROUND_LEADER {
                    self.buffer.entry(instance).or_default().push((from, instance, round, payload));
                    return;
                }
                if from != state.leader {
                    return;
                }
                let chain = match self.codec.decode_exact(&payload) {
                    Ok(c) => c,
                    Err(e) => {
                        self.discard(ctx, from, Some(instance), Some(round), e.into());
                        return;
                    }
                };
                if let LeaderOutcome::Start { chain, adopted } =
                    on_leader_message_or_timeout(state, LeaderEvent::Message { from, chain })
                {
                    if adopted {
                        ctx.record(TraceEvent::new(EventKind::Adopt).instance(instance).chain(chain.clone()));
                    }
                    self.start_turtle(chain, ctx);
                }
            }
            Phase::Running(active) => {
                if round == ROUND_LEADER {
                    return;
                }
                match active {
                    Active::Crash(t) => match t.on_message(from, round, &payload) {
                        Ok(actions) => self.after_crash_actions(actions, ctx),
                        Err(e) => ctx.fail(e.to_string()),
                    },
                    Active::Bft(t) => match t.on_message(from, round, &payload) {
                        Ok(actions) => self.after_bft_actions(actions, ctx),
                        Err(e) => ctx.fail(e.to_string()),
                    },
                }
            }
            Phase::Idle | Phase::Finished => unreachable!("handled above"),
        }
    }

    fn drain(&mut self, ctx: &mut Context) {
        while let Some((from, instance, round, payload)) = self.replay.pop_front() {
            self.route(from, instance, round, payload, ctx);
        }
    }
}

impl Node for Replica {
    fn on_start(&mut self, ctx: &mut Context) {
        let chain = match &mut self.engine {
            Engine::Crash(e) => e.first_input().chain,
            Engine::Bft { engine, .. } => engine.first_input().chain,
        };
        self.begin(1, chain, ctx);
        self.drain(ctx);
    }

    fn on_message(&mut self, from: ProcessorId, bytes: &[u8], ctx: &mut Context) {
        let env = match Envelope::decode(bytes) {
            Ok(env) => env,
            Err(e) => {
                self.discard(ctx, from, None, None, e.into());
                return;
            }
        };
        if env.sender != from.0 {
            self.discard(ctx, from, Some(env.instance), Some(env.round_tag), DiscardReason::WrongSender);
            return;
        }
        self.route(from, env.instance, env.round_tag, env.payload, ctx);
        self.drain(ctx);
    }

    fn on_timer(&mut self, id: u64, ctx: &mut Context) {
        let Phase::Waiting(state) = &mut self.phase else { return };
        if state.instance != id {
            return;
        }
        if let LeaderOutcome::Start { chain, .. } = on_leader_message_or_timeout(state, LeaderEvent::TimerExpired) {
            ctx.record(TraceEvent::new(EventKind::TimerExpire).instance(id));
            self.start_turtle(chain, ctx);
        }
        self.drain(ctx);
    }
}
