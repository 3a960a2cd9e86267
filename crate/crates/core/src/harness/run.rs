use crate::bft::adversary::AdversaryNode;
use crate::bft::SignatureLedger;
use crate::netsim::{Node, SimConfig, Simulation};
use crate::quorum::ProcessorId;
use crate::replica::Replica;
use crate::trace::{EventKind, Trace, TraceEvent};

use super::config::{ConfigError, Role, ScenarioConfig};

#[derive(Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub truncated: bool,
    /// Set when a processor hit an internal invariant error.
    pub fatal: Option<String>,
    pub model_violating: bool,
}

pub fn scenario_header(cfg: &ScenarioConfig) -> TraceEvent {
    let mut header = TraceEvent::new(EventKind::Scenario);
    header.config = Some(serde_json::to_value(cfg).expect("configs serialize"));
    header.model_violating = Some(cfg.exceeds_fault_bound());
    header
}

/// Runs one scenario to quiescence (or its event budget).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome, ConfigError> {
    cfg.validate()?;
    let rcfg = cfg.replica_config()?;
    let ledger = SignatureLedger::new();
    let nodes: Vec<Box<dyn Node>> = (0..cfg.n)
        .map(|p| {
            let id = ProcessorId(p as u16);
            match cfg.faults.roles.get(&(p as u16)) {
                Some(Role::Byzantine(strategy)) => {
                    Box::new(AdversaryNode::new(id, *strategy, &rcfg, &ledger)) as Box<dyn Node>
                }
                None => Box::new(Replica::new(id, rcfg.clone(), Some(&ledger))),
            }
        })
        .collect();
    let sim = SimConfig {
        n: cfg.n,
        sync: cfg.sync,
        faults: cfg.fault_plan(),
        seed: cfg.seed,
        event_budget: cfg.event_budget,
    };
    let out = Simulation::new(sim, nodes, vec![scenario_header(cfg)]).run();
    Ok(RunOutcome {
        trace: out.trace,
        truncated: out.truncated,
        fatal: out.fatal,
        model_violating: cfg.exceeds_fault_bound(),
    })
}
