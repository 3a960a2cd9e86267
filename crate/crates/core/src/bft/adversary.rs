//! Byzantine processors.
//!
//! An adversary runs an honest replica as a shadow, fed with every message
//! it receives, and rewrites what the shadow sends. The shadow's own
//! messages always reach itself unchanged so it keeps making progress.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, Command, CommandId};
use crate::leader::ROUND_LEADER;
use crate::netsim::{Context, Dest, Label, Node};
use crate::quorum::ProcessorId;
use crate::replica::{Replica, ReplicaConfig};
use crate::smr::codec::{ChainCodec, CodecMode};
use crate::smr::{TurtleKind, TurtleSchedule};
use crate::trace::{EventKind, TraceEvent};
use crate::turtle::{ROUND_PROPOSAL, ROUND_SECOND};
use crate::wire::Envelope;

use super::{chain_statement, BftOutput, Round1Message, Round2Message, Signature, SignatureLedger, SigningKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Sends two different valid proposals (or round-2 values) to two halves of the processors.
    Equivocate,
    /// Sends nothing to anyone else.
    Silent,
    /// Sends well-formed messages whose signatures do not verify.
    GarbageSignatures,
    /// Proposes with evidence from an older instance.
    StaleEvidence,
    /// Lower-Bound only: round-2 values that are not the meet of their support.
    DivergentX,
    /// A different concrete strategy each instance.
    Cycle,
}

impl Strategy {
    pub const CONCRETE: [Strategy; 5] = [
        Strategy::Equivocate,
        Strategy::Silent,
        Strategy::GarbageSignatures,
        Strategy::StaleEvidence,
        Strategy::DivergentX,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Equivocate => "equivocate",
            Strategy::Silent => "silent",
            Strategy::GarbageSignatures => "garbage-signatures",
            Strategy::StaleEvidence => "stale-evidence",
            Strategy::DivergentX => "divergent-x",
            Strategy::Cycle => "cycle",
        }
    }

    pub fn applies_to(self, kind: TurtleKind) -> bool {
        match self {
            Strategy::DivergentX => kind == TurtleKind::BftLowerbound,
            _ => kind.is_bft(),
        }
    }

    /// The concrete behaviour in `instance`, which runs `kind`.
    ///
    /// A cycling adversary takes the `instance mod count`-th of the
    /// strategies that apply to `kind`. Divergent-x falls back to
    /// equivocation where it does not apply.
    pub fn concrete_for(self, instance: u64, kind: TurtleKind) -> Strategy {
        match self {
            Strategy::Cycle => {
                let list: Vec<Strategy> = Self::CONCRETE.into_iter().filter(|s| s.applies_to(kind)).collect();
                list[(instance % list.len() as u64) as usize]
            }
            s if !s.applies_to(kind) => Strategy::Equivocate,
            s => s,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::CONCRETE
            .into_iter()
            .chain([Strategy::Cycle])
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown adversary strategy `{s}`"))
    }
}

/// Base for sequence numbers of commands only an adversary invents.
const FORGED_SEQ_BASE: u64 = 1 << 40;

pub struct AdversaryNode {
    me: ProcessorId,
    strategy: Strategy,
    schedule: TurtleSchedule,
    shadow: Replica,
    key: SigningKey,
    /// Outputs of the shadow, by instance.
    history: Vec<BftOutput>,
}

impl AdversaryNode {
    /// `cfg` is the run's configuration; the shadow sends full chains so the
    /// rewritten messages decode anywhere.
    pub fn new(me: ProcessorId, strategy: Strategy, cfg: &ReplicaConfig, ledger: &Arc<SignatureLedger>) -> Self {
        let shadow_cfg = ReplicaConfig {
            codec: CodecMode::Full,
            ..cfg.clone()
        };
        Self {
            me,
            strategy,
            schedule: cfg.schedule.clone(),
            shadow: Replica::new(me, Arc::new(shadow_cfg), Some(ledger)),
            key: ledger.key_for(me),
            history: vec![BftOutput::genesis()],
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn run_shadow(&mut self, ctx: &mut Context, f: impl FnOnce(&mut Replica, &mut Context)) {
        let mut scratch = Context::new(self.me, ctx.n(), ctx.now());
        f(&mut self.shadow, &mut scratch);
        if let Some(out) = self.shadow.last_bft_output() {
            if out.turtle_index as usize == self.history.len() {
                self.history.push(out.clone());
            }
        }
        let effects = scratch.into_effects();
        for (delay, id) in effects.timers {
            ctx.set_timer(delay, id);
        }
        for (dest, bytes, label) in effects.sends {
            debug_assert_eq!(dest, Dest::All, "replicas only broadcast");
            self.rewrite(bytes, label, ctx);
        }
    }

    fn forged_command(&self, instance: u64) -> Command {
        Command::canonical(CommandId::new(self.me.0, FORGED_SEQ_BASE + instance))
    }

    fn garbage_signature(&self) -> Signature {
        Signature {
            signer: self.me,
            digest: [0xAB; 32],
            nonce: u64::MAX,
        }
    }

    fn send_split(&self, ctx: &mut Context, label: Label, first: &[u8], second: &[u8]) {
        let half = ctx.n() / 2;
        for q in 0..ctx.n() {
            let q = ProcessorId(q as u16);
            if q == self.me {
                continue;
            }
            let bytes = if q.index() < half { first } else { second };
            ctx.send(q, bytes.to_vec(), label);
        }
    }

    fn send_others(&self, ctx: &mut Context, label: Label, bytes: &[u8]) {
        self.send_split(ctx, label, bytes, bytes);
    }

    fn wrap(&self, env: &Envelope, payload: Vec<u8>) -> Vec<u8> {
        Envelope {
            payload,
            ..env.clone()
        }
        .encode()
    }

    fn propose(&self, ctx: &mut Context, instance: u64, chain: &Chain) {
        ctx.record(TraceEvent::new(EventKind::Propose).instance(instance).chain(chain.clone()));
    }

    fn rewrite(&mut self, bytes: Vec<u8>, label: Label, ctx: &mut Context) {
        let env = Envelope::decode(&bytes).expect("shadow messages are well formed");
        ctx.send(self.me, bytes.clone(), label);
        let i = env.instance;
        let Some(kind) = self.schedule.kind_for(i) else { return };
        let strategy = self.strategy.concrete_for(i, kind);
        if strategy == Strategy::Silent {
            return;
        }
        let codec = ChainCodec::full();
        match env.round_tag {
            ROUND_LEADER => self.send_others(ctx, label, &bytes),
            ROUND_PROPOSAL => {
                let msg = Round1Message::decode(&codec, &env.payload).expect("shadow messages are well formed");
                match strategy {
                    Strategy::Equivocate => {
                        let other = msg.evidence.upper.extended([self.forged_command(i)]);
                        let twin = Round1Message {
                            chain: other.clone(),
                            evidence: msg.evidence.clone(),
                            signature: self.key.sign(&chain_statement(i, ROUND_PROPOSAL, &other)),
                        };
                        self.propose(ctx, i, &msg.chain);
                        self.propose(ctx, i, &other);
                        let twin = self.wrap(&env, twin.encode(&codec));
                        self.send_split(ctx, label, &bytes, &twin);
                    }
                    Strategy::GarbageSignatures => {
                        let bad = Round1Message {
                            signature: self.garbage_signature(),
                            ..msg
                        };
                        self.send_others(ctx, label, &self.wrap(&env, bad.encode(&codec)));
                    }
                    Strategy::StaleEvidence => {
                        let older = (i >= 2).then(|| self.history.get((i - 2) as usize)).flatten();
                        let evidence = if let Some(older) = older {
                            older.clone()
                        } else {
                            BftOutput {
                                turtle_index: 1,
                                ..BftOutput::genesis()
                            }
                        };
                        let stale = Round1Message { evidence, ..msg };
                        self.send_others(ctx, label, &self.wrap(&env, stale.encode(&codec)));
                    }
                    _ => {
                        self.propose(ctx, i, &msg.chain);
                        self.send_others(ctx, label, &bytes);
                    }
                }
            }
            ROUND_SECOND => {
                let msg = Round2Message::decode(&codec, &env.payload).expect("shadow messages are well formed");
                match strategy {
                    Strategy::Equivocate | Strategy::DivergentX => {
                        let other = msg.x.extended([self.forged_command(i)]);
                        let twin = Round2Message {
                            signature: self.key.sign(&chain_statement(i, ROUND_SECOND, &other)),
                            x: other,
                            support: msg.support.clone(),
                        };
                        let twin = self.wrap(&env, twin.encode(&codec));
                        self.send_split(ctx, label, &bytes, &twin);
                    }
                    Strategy::GarbageSignatures => {
                        let bad = Round2Message {
                            signature: self.garbage_signature(),
                            ..msg
                        };
                        self.send_others(ctx, label, &self.wrap(&env, bad.encode(&codec)));
                    }
                    _ => self.send_others(ctx, label, &bytes),
                }
            }
            _ => self.send_others(ctx, label, &bytes),
        }
    }
}

impl Node for AdversaryNode {
    fn on_start(&mut self, ctx: &mut Context) {
        self.run_shadow(ctx, |r, c| r.on_start(c));
    }

    fn on_message(&mut self, from: ProcessorId, bytes: &[u8], ctx: &mut Context) {
        self.run_shadow(ctx, |r, c| r.on_message(from, bytes, c));
    }

    fn on_timer(&mut self, id: u64, ctx: &mut Context) {
        self.run_shadow(ctx, |r, c| r.on_timer(id, c));
    }
}
