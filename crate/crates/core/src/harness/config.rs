//! Scenario files.
//!
//! ```json
//! {
//!   "n": 4, "f": 1, "k": 3,
//!   "turtle_schedule": [{"kind": "onestep", "repeat": "cycle"}],
//!   "sync": {"mode": "partial_sync", "gst": 200, "delta": 5},
//!   "faults": {"crashes": {"2": 0}},
//!   "leader": {"enabled": true, "initial_timer": 10},
//!   "instances": 50,
//!   "seed": 7
//! }
//! ```
//!
//! Byzantine processors are declared as `"roles": {"3": "byzantine:equivocate"}`
//! under `faults`. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bft::adversary::Strategy;
use crate::leader::LeaderConfig;
use crate::netsim::{FaultPlan, SyncMode, DEFAULT_EVENT_BUDGET};
use crate::quorum::{ProcSet, ProcessorId, QuorumError, QuorumSystem, MAX_PROCESSORS};
use crate::replica::ReplicaConfig;
use crate::smr::codec::CodecMode;
use crate::smr::{ScheduleEntry, TurtleKind, TurtleSchedule, DEFAULT_BATCH_MAX};
use crate::turtle::onestep::UpperSelection;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// A fault role other than "correct".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Byzantine(Strategy),
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Role::Byzantine(st) => s.serialize_str(&format!("byzantine:{st}")),
        }
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let strategy = s
            .strip_prefix("byzantine:")
            .ok_or_else(|| serde::de::Error::custom(format!("unknown role `{s}`; expected `byzantine:<strategy>`")))?;
        strategy.parse().map(Role::Byzantine).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Processor id to crash time.
    #[serde(default)]
    pub crashes: BTreeMap<u16, u64>,
    #[serde(default)]
    pub roles: BTreeMap<u16, Role>,
}

fn default_instances() -> u64 {
    20
}

fn default_batch_max() -> usize {
    DEFAULT_BATCH_MAX
}

fn default_event_budget() -> u64 {
    DEFAULT_EVENT_BUDGET
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub f: usize,
    pub k: usize,
    pub turtle_schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub sync: SyncMode,
    #[serde(default)]
    pub faults: FaultConfig,
    #[serde(default)]
    pub leader: LeaderConfig,
    #[serde(default = "default_instances")]
    pub instances: u64,
    #[serde(default = "default_batch_max")]
    pub batch_max: usize,
    #[serde(default)]
    pub codec: CodecMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_event_budget")]
    pub event_budget: u64,
    /// Allow more faults than `f`; checks on such runs are informational.
    #[serde(default)]
    pub violate_model: bool,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating, so callers can apply overrides first.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads and parses a scenario file without validating it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn schedule(&self) -> Result<TurtleSchedule, ConfigError> {
        TurtleSchedule::new(self.turtle_schedule.clone()).ok_or_else(|| invalid("turtle_schedule is empty"))
    }

    pub fn is_bft(&self) -> bool {
        self.turtle_schedule.iter().any(|e| e.kind.is_bft())
    }

    pub fn quorum_system(&self) -> Result<QuorumSystem, ConfigError> {
        QuorumSystem::make_threshold(self.n, self.f, self.k).map_err(|e| match e {
            QuorumError::InsufficientProcessors { .. } => invalid(format!(
                "n must exceed k·f for a threshold quorum system (n = {}, k = {}, f = {})",
                self.n, self.k, self.f
            )),
            other => invalid(other.to_string()),
        })
    }

    /// Processors that take no faulty action: neither crash nor Byzantine.
    pub fn correct(&self) -> ProcSet {
        let mut s = ProcSet::all(self.n);
        for p in self.faults.crashes.keys().chain(self.faults.roles.keys()) {
            s.remove(ProcessorId(*p));
        }
        s
    }

    pub fn byzantine(&self) -> ProcSet {
        self.faults.roles.keys().map(|p| ProcessorId(*p)).collect()
    }

    pub fn fault_count(&self) -> usize {
        self.faults
            .crashes
            .keys()
            .chain(self.faults.roles.keys())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }

    /// Whether the fault plan exceeds what the quorum system tolerates.
    pub fn exceeds_fault_bound(&self) -> bool {
        self.fault_count() > self.f
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.n > MAX_PROCESSORS {
            return Err(invalid(format!("n must be in 1..={MAX_PROCESSORS} (got {})", self.n)));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        self.quorum_system()?;
        let schedule = self.schedule()?;
        for kind in schedule.kinds() {
            let need = kind.required_intersection();
            if self.k < need {
                return Err(invalid(format!(
                    "{kind} requires a quorum system satisfying {need}-intersection (k = {})",
                    self.k
                )));
            }
        }
        if schedule.kinds().any(TurtleKind::is_bft) && !schedule.kinds().all(TurtleKind::is_bft) {
            return Err(invalid(
                "turtle_schedule mixes crash-tolerant and Byzantine-tolerant kinds",
            ));
        }
        if self.instances == 0 {
            return Err(invalid("instances must be at least 1"));
        }
        if self.batch_max == 0 {
            return Err(invalid("batch_max must be at least 1"));
        }
        if self.event_budget == 0 {
            return Err(invalid("event_budget must be at least 1"));
        }
        if self.leader.initial_timer == 0 {
            return Err(invalid("leader.initial_timer must be at least 1"));
        }
        if let SyncMode::PartialSync { delta, .. } = self.sync {
            if delta == 0 {
                return Err(invalid("sync.delta must be at least 1"));
            }
        }
        for p in self.faults.crashes.keys().chain(self.faults.roles.keys()) {
            if *p as usize >= self.n {
                return Err(invalid(format!("fault plan names processor {p}, but n = {}", self.n)));
            }
        }
        if !self.faults.roles.is_empty() && !self.is_bft() {
            return Err(invalid(
                "Byzantine roles require a Byzantine-tolerant turtle_schedule",
            ));
        }
        if self.exceeds_fault_bound() && !self.violate_model {
            return Err(invalid(format!(
                "fault plan has {} faulty processors but f = {} (use --violate-model to run anyway)",
                self.fault_count(),
                self.f
            )));
        }
        if self.fault_count() >= self.n {
            return Err(invalid("at least one processor must be correct"));
        }
        Ok(())
    }

    pub fn replica_config(&self) -> Result<Arc<ReplicaConfig>, ConfigError> {
        Ok(Arc::new(ReplicaConfig {
            system: self.quorum_system()?,
            schedule: self.schedule()?,
            leader: self.leader,
            codec: self.codec,
            instances: self.instances,
            batch_max: self.batch_max,
            selection: UpperSelection::Strict,
        }))
    }

    pub fn fault_plan(&self) -> FaultPlan {
        FaultPlan {
            crashes: self
                .faults
                .crashes
                .iter()
                .map(|(p, t)| (ProcessorId(*p), *t))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{"n": 4, "f": 1, "k": 3, "turtle_schedule": [{"kind": "onestep", "repeat": "cycle"}]}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_json(BASIC).unwrap();
        assert_eq!(c.instances, 20);
        assert_eq!(c.batch_max, DEFAULT_BATCH_MAX);
        assert_eq!(c.codec, CodecMode::Relative);
        assert_eq!(c.sync, SyncMode::default());
        assert!(!c.leader.enabled);
        let again = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    fn err(json: &str) -> String {
        ScenarioConfig::from_json(json).unwrap_err().to_string()
    }

    #[test]
    fn onestep_needs_three_intersection() {
        let e = err(r#"{"n": 3, "f": 1, "k": 2, "turtle_schedule": [{"kind": "onestep"}]}"#);
        assert!(e.contains("requires a quorum system satisfying 3-intersection"), "{e}");
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(err(r#"{"n": 4, "f": 1, "k": 4, "turtle_schedule": [{"kind": "lowerbound"}]}"#).contains("n must exceed k·f"));
        assert!(err(r#"{"n": 4, "f": 1, "k": 3, "turtle_schedule": []}"#).contains("empty"));
        assert!(err(r#"{"n": 6, "f": 1, "k": 5, "turtle_schedule": [{"kind": "onestep"}, {"kind": "bft_onestep"}]}"#).contains("mixes"));
        assert!(err(&BASIC.replace("}]}", r#"}], "faults": {"crashes": {"0": 0, "1": 5}}}"#)).contains("--violate-model"));
        assert!(err(&BASIC.replace("}]}", r#"}], "faults": {"crashes": {"9": 0}}}"#)).contains("processor 9"));
        assert!(err(&BASIC.replace("}]}", r#"}], "faults": {"roles": {"1": "byzantine:silent"}}}"#)).contains("Byzantine-tolerant"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(err(&BASIC.replace("\"n\"", "\"nodes\": 1, \"n\"")).contains("unknown field"));
        assert!(err(&BASIC.replace("}]}", r#"}], "leader": {"enabled": true, "t0": 3}}"#)).contains("unknown field"));
    }

    #[test]
    fn roles_parse() {
        let c = ScenarioConfig::from_json(
            r#"{"n": 7, "f": 2, "k": 3, "turtle_schedule": [{"kind": "bft_lowerbound"}],
                "faults": {"roles": {"3": "byzantine:equivocate", "5": "byzantine:cycle"}}}"#,
        )
        .unwrap();
        assert_eq!(c.faults.roles[&3], Role::Byzantine(Strategy::Equivocate));
        assert_eq!(c.byzantine().len(), 2);
        assert_eq!(c.correct().len(), 5);
        assert!(err(
            r#"{"n": 7, "f": 2, "k": 3, "turtle_schedule": [{"kind": "bft_lowerbound"}], "faults": {"roles": {"3": "evil"}}}"#
        )
        .contains("unknown role"));
    }

    #[test]
    fn violate_model_allows_extra_faults() {
        let c = ScenarioConfig::from_json(&BASIC.replace(
            "}]}",
            r#"}], "faults": {"crashes": {"0": 0, "1": 5}}, "violate_model": true}"#,
        ))
        .unwrap();
        assert!(c.exceeds_fault_bound());
    }
}
