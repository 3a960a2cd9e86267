//! JSON-lines execution traces.
//!
//! One event per line, in processing order. The first line is a `scenario`
//! header carrying the run's configuration and the last is an `end` marker.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::Chain;
use crate::quorum::ProcessorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Scenario,
    Send,
    Deliver,
    Drop,
    Crash,
    Gst,
    TimerExpire,
    Propose,
    LeaderPropose,
    Adopt,
    Output,
    Decide,
    Discard,
    End,
}

impl EventKind {
    pub const ALL: [EventKind; 14] = [
        EventKind::Scenario,
        EventKind::Send,
        EventKind::Deliver,
        EventKind::Drop,
        EventKind::Crash,
        EventKind::Gst,
        EventKind::TimerExpire,
        EventKind::Propose,
        EventKind::LeaderPropose,
        EventKind::Adopt,
        EventKind::Output,
        EventKind::Decide,
        EventKind::Discard,
        EventKind::End,
    ];

    pub fn as_str(self) -> &'static str {
        SCHEMA
            .iter()
            .find(|s| s.kind == self)
            .map(|s| s.name)
            .expect("every kind is documented")
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Documentation of one event kind: its name and the fields it carries
/// besides `t`, `seq` and `kind`.
pub struct EventSchema {
    pub kind: EventKind,
    pub name: &'static str,
    pub fields: &'static [&'static str],
    pub description: &'static str,
}

pub const SCHEMA: &[EventSchema] = &[
    EventSchema {
        kind: EventKind::Scenario,
        name: "scenario",
        fields: &["config", "model_violating"],
        description: "run header: the full scenario configuration",
    },
    EventSchema {
        kind: EventKind::Send,
        name: "send",
        fields: &["proc", "peer", "msg", "instance", "round", "payload_digest"],
        description: "proc hands message msg for peer to the network",
    },
    EventSchema {
        kind: EventKind::Deliver,
        name: "deliver",
        fields: &["proc", "peer", "msg", "payload_digest"],
        description: "proc receives message msg sent by peer",
    },
    EventSchema {
        kind: EventKind::Drop,
        name: "drop",
        fields: &["proc", "peer", "msg"],
        description: "message msg from peer arrives after proc crashed",
    },
    EventSchema {
        kind: EventKind::Crash,
        name: "crash",
        fields: &["proc"],
        description: "proc stops; it takes no further steps",
    },
    EventSchema {
        kind: EventKind::Gst,
        name: "gst",
        fields: &[],
        description: "global stabilization time is reached",
    },
    EventSchema {
        kind: EventKind::TimerExpire,
        name: "timer_expire",
        fields: &["proc", "instance"],
        description: "the leader-wait timer of instance fires before the leader's chain arrived",
    },
    EventSchema {
        kind: EventKind::Propose,
        name: "propose",
        fields: &["proc", "instance", "chain"],
        description: "proc inputs chain to the turtle of instance",
    },
    EventSchema {
        kind: EventKind::LeaderPropose,
        name: "leader_propose",
        fields: &["proc", "instance", "chain"],
        description: "the leader of instance broadcasts its chain",
    },
    EventSchema {
        kind: EventKind::Adopt,
        name: "adopt",
        fields: &["proc", "instance", "chain"],
        description: "proc takes the leader's chain as its input",
    },
    EventSchema {
        kind: EventKind::Output,
        name: "output",
        fields: &["proc", "instance", "chain", "upper"],
        description: "proc's turtle of instance outputs decided chain and upper bound",
    },
    EventSchema {
        kind: EventKind::Decide,
        name: "decide",
        fields: &["proc", "instance", "chain"],
        description: "proc decides chain",
    },
    EventSchema {
        kind: EventKind::Discard,
        name: "discard",
        fields: &["proc", "peer", "instance", "round", "reason"],
        description: "proc drops an invalid message from peer",
    },
    EventSchema {
        kind: EventKind::End,
        name: "end",
        fields: &["truncated", "fatal"],
        description: "run finished: quiescent, or truncated by the event budget, or stopped by an internal error",
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub t: u64,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proc: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Chain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Chain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_violating: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
}

impl TraceEvent {
    pub fn new(kind: EventKind) -> Self {
        Self {
            t: 0,
            seq: 0,
            kind,
            proc: None,
            peer: None,
            msg: None,
            instance: None,
            round: None,
            payload_digest: None,
            chain: None,
            upper: None,
            reason: None,
            config: None,
            model_violating: None,
            truncated: None,
            fatal: None,
        }
    }

    pub fn at(mut self, t: u64) -> Self {
        self.t = t;
        self
    }

    pub fn proc(mut self, p: ProcessorId) -> Self {
        self.proc = Some(p.0);
        self
    }

    pub fn peer(mut self, p: ProcessorId) -> Self {
        self.peer = Some(p.0);
        self
    }

    pub fn instance(mut self, i: u64) -> Self {
        self.instance = Some(i);
        self
    }

    pub fn round(mut self, r: u8) -> Self {
        self.round = Some(r);
        self
    }

    pub fn chain(mut self, c: Chain) -> Self {
        self.chain = Some(c);
        self
    }

    pub fn upper(mut self, u: Chain) -> Self {
        self.upper = Some(u);
        self
    }

    pub fn reason(mut self, r: impl Into<String>) -> Self {
        self.reason = Some(r.into());
        self
    }

    pub fn processor(&self) -> Option<ProcessorId> {
        self.proc.map(ProcessorId)
    }

    /// Names of the optional fields that are set.
    pub fn present_fields(&self) -> Vec<&'static str> {
        let mut v = vec![];
        macro_rules! field {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    v.push(stringify!($f));
                }
            )*};
        }
        field!(
            proc,
            peer,
            msg,
            instance,
            round,
            payload_digest,
            chain,
            upper,
            reason,
            config,
            model_violating,
            truncated,
            fatal
        );
        v
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `ev`, stamping the next sequence number.
    pub fn push(&mut self, mut ev: TraceEvent) {
        ev.seq = self.events.len() as u64;
        self.events.push(ev);
    }

    pub fn header(&self) -> Option<&TraceEvent> {
        self.events.first().filter(|e| e.kind == EventKind::Scenario)
    }

    pub fn end(&self) -> Option<&TraceEvent> {
        self.events.last().filter(|e| e.kind == EventKind::End)
    }

    pub fn is_truncated(&self) -> bool {
        self.end().and_then(|e| e.truncated).unwrap_or(false)
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(ev);
        }
        if events.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(Self { events })
    }

    pub fn from_jsonl(s: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }

    /// SHA-256 of the JSON-lines rendering, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        self.write_jsonl(HashWriter(&mut h)).expect("hashing cannot fail");
        hex(&h.finalize())
    }
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short digest used to match sends with deliveries.
pub fn payload_digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes)[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::testkit::chain;

    #[test]
    fn schema_documents_every_kind() {
        for kind in EventKind::ALL {
            let entries: Vec<_> = SCHEMA.iter().filter(|s| s.kind == kind).collect();
            assert_eq!(entries.len(), 1, "{kind:?}");
            let json = serde_json::to_value(kind).unwrap();
            assert_eq!(json, serde_json::Value::String(entries[0].name.to_string()));
        }
        assert_eq!(SCHEMA.len(), EventKind::ALL.len());
    }

    #[test]
    fn round_trip_and_hash() {
        let mut t = Trace::new();
        t.push(TraceEvent::new(EventKind::Propose).at(3).proc(ProcessorId(1)).instance(2).chain(chain("ab")));
        t.push(TraceEvent::new(EventKind::Gst).at(4));
        let text = t.to_jsonl();
        assert!(text.starts_with(r#"{"t":3,"seq":0,"kind":"propose","proc":1,"instance":2,"chain":["0.1","0.2"]}"#));
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.hash(), t.hash());
        assert_eq!(t.hash().len(), 64);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "{\"t\":0,\"seq\":0,\"kind\":\"gst\"}\n{\"t\":1,\"seq\":1,\"kind\":\"nope\"}\n";
        match Trace::from_jsonl(text) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let unknown = "{\"t\":0,\"seq\":0,\"kind\":\"gst\",\"extra\":1}\n";
        assert!(matches!(Trace::from_jsonl(unknown), Err(TraceError::Parse { line: 1, .. })));
        assert!(matches!(Trace::from_jsonl("\n"), Err(TraceError::Empty)));
    }
}
