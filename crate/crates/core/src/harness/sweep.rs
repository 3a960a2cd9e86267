//! Seed sweeps: run and check one configuration over a range of seeds.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check::{check_trace, CheckReport, SpecFamily};
use super::config::{ConfigError, ScenarioConfig};
use super::run::run_scenario;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub passed: bool,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
    /// Names of gating properties that failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    pub trace_hash: String,
    pub decisions: usize,
    pub instances: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: usize,
    pub passed: usize,
    pub truncated: usize,
    pub model_violating: bool,
    pub failures: Vec<SeedResult>,
    /// Per-seed results, in seed order.
    pub results: Vec<SeedResult>,
}

impl SweepReport {
    /// Every seed passed and ran to quiescence.
    pub fn clean(&self) -> bool {
        self.failures.is_empty() && self.truncated == 0
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}/{} seeds passed", self.passed, self.seeds);
        if self.truncated > 0 {
            s.push_str(&format!(", {} truncated", self.truncated));
        }
        for f in self.failures.iter().take(10) {
            s.push_str(&format!("\n  seed {}: ", f.seed));
            if let Some(fatal) = &f.fatal {
                s.push_str(&format!("internal error: {fatal}"));
            } else if f.violations.is_empty() {
                s.push_str("truncated");
            } else {
                s.push_str(&f.violations.join(", "));
            }
        }
        if self.failures.len() > 10 {
            s.push_str(&format!("\n  ... and {} more", self.failures.len() - 10));
        }
        s
    }
}

/// Runs and checks one seed.
pub fn run_seed(cfg: &ScenarioConfig, seed: u64, families: Option<&[SpecFamily]>) -> Result<(SeedResult, CheckReport), ConfigError> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let out = run_scenario(&cfg)?;
    let report = check_trace(&out.trace, families).expect("generated traces carry their scenario");
    let result = SeedResult {
        seed,
        passed: report.passed() && !out.truncated,
        truncated: out.truncated,
        fatal: out.fatal.clone(),
        violations: report.violations().map(|p| p.name.clone()).collect(),
        trace_hash: out.trace.hash(),
        decisions: report.counts.decisions,
        instances: report.counts.instances,
    };
    Ok((result, report))
}

/// Runs every seed in `seeds`, in parallel on `jobs` threads (all cores if `None`).
pub fn sweep(
    cfg: &ScenarioConfig,
    seeds: Range<u64>,
    families: Option<&[SpecFamily]>,
    jobs: Option<usize>,
) -> Result<SweepReport, ConfigError> {
    cfg.validate()?;
    let work = || -> Result<Vec<SeedResult>, ConfigError> {
        seeds
            .clone()
            .into_par_iter()
            .map(|seed| run_seed(cfg, seed, families).map(|(r, _)| r))
            .collect()
    };
    let results = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let failures: Vec<SeedResult> = results.iter().filter(|r| !r.passed).cloned().collect();
    Ok(SweepReport {
        seeds: results.len(),
        passed: results.iter().filter(|r| r.passed).count(),
        truncated: results.iter().filter(|r| r.truncated).count(),
        model_violating: cfg.exceeds_fault_bound(),
        failures,
        results,
    })
}

/// Parses `A..B` (half-open) or a single seed.
pub fn parse_seed_range(s: &str) -> Result<Range<u64>, String> {
    let bad = || format!("bad seed range `{s}` (expected A..B)");
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a >= b {
                return Err(format!("empty seed range `{s}`"));
            }
            Ok(a..b)
        }
        None => {
            let a: u64 = s.trim().parse().map_err(|_| bad())?;
            Ok(a..a + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("0..10"), Ok(0..10));
        assert_eq!(parse_seed_range("7"), Ok(7..8));
        assert!(parse_seed_range("5..5").is_err());
        assert!(parse_seed_range("a..b").is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_parallel_safe() {
        let cfg = ScenarioConfig::from_json(
            r#"{"n": 4, "f": 1, "k": 3, "turtle_schedule": [{"kind": "onestep"}, {"kind": "lowerbound"}], "instances": 6}"#,
        )
        .unwrap();
        let a = sweep(&cfg, 0..8, None, Some(1)).unwrap();
        let b = sweep(&cfg, 0..8, None, Some(4)).unwrap();
        assert!(a.clean(), "{}", a.summary());
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected_up_front() {
        let cfg = ScenarioConfig::parse(r#"{"n": 3, "f": 1, "k": 2, "turtle_schedule": [{"kind": "onestep"}]}"#).unwrap();
        assert!(matches!(sweep(&cfg, 0..2, None, None), Err(ConfigError::Invalid(_))));
    }
}
