//! Command-line front end: `run`, `check`, and `sweep`.
//!
//! Exit codes: 0 pass, 1 property violation or truncated run, 2 bad
//! configuration or unreadable trace, 3 internal invariant error (which
//! takes precedence over any other violation).

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::harness::{
    check_trace, parse_seed_range, run_scenario, sweep, CheckReport, ConfigError, ScenarioConfig, SpecFamily,
};
use crate::trace::Trace;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "TURTLES_OUT_DIR";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "turtles", version, about = "Run and check simulated state machine replication")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trace.
    Run(RunArgs),
    /// Check a trace against the replication and turtle properties.
    Check(CheckArgs),
    /// Run and check a scenario over a range of seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Allow more faults than the configuration tolerates; the trace is marked model-violating.
    #[arg(long)]
    pub violate_model: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trace file to write. Defaults to `trace-<seed>.jsonl` in $TURTLES_OUT_DIR or the current directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Trace file (JSON lines).
    pub trace: PathBuf,
    /// Property families to check; defaults to those matching the trace's scenario.
    #[arg(long, value_delimiter = ',')]
    pub spec: Vec<SpecFamily>,
    /// Also write the report as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the report as JSON instead of a summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Half-open seed range `A..B`.
    #[arg(long, default_value = "0..100")]
    pub seeds: String,
    /// Property families to check; defaults to those matching the scenario.
    #[arg(long, value_delimiter = ',')]
    pub spec: Vec<SpecFamily>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write the aggregate report as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    cfg.violate_model |= args.violate_model;
    Ok(cfg)
}

fn default_out(name: &str) -> PathBuf {
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(name)
}

fn write_file(path: &Path, contents: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)
}

fn families(spec: &[SpecFamily]) -> Option<&[SpecFamily]> {
    (!spec.is_empty()).then_some(spec)
}

/// Runs a parsed command, writing human-readable output to `out` and
/// diagnostics to `err`. Returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_CONFIG
        }
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, String> {
    let mut cfg = load_scenario(&a.scenario).map_err(|e| e.to_string())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let outcome = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let path = a.out.unwrap_or_else(|| default_out(&format!("trace-{}.jsonl", cfg.seed)));
    write_file(&path, outcome.trace.to_jsonl().as_bytes()).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    let _ = writeln!(
        out,
        "wrote {} ({} events, hash {}){}",
        path.display(),
        outcome.trace.events.len(),
        &outcome.trace.hash()[..16],
        if outcome.model_violating { ", model-violating" } else { "" }
    );
    Ok(if let Some(f) = outcome.fatal {
        let _ = writeln!(out, "internal invariant error: {f}");
        EXIT_INTERNAL
    } else if outcome.truncated {
        let _ = writeln!(out, "run truncated by the event budget");
        EXIT_VIOLATION
    } else {
        EXIT_PASS
    })
}

/// Exit code for a check report.
pub fn report_exit_code(report: &CheckReport) -> i32 {
    if report.passed() {
        EXIT_PASS
    } else if report.violations().any(|p| p.name == "run_internal_invariants") {
        EXIT_INTERNAL
    } else {
        EXIT_VIOLATION
    }
}

fn cmd_check(a: CheckArgs, out: &mut dyn Write) -> Result<i32, String> {
    let file = fs::File::open(&a.trace).map_err(|e| format!("cannot read {}: {e}", a.trace.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", a.trace.display()))?;
    let report = check_trace(&trace, families(&a.spec)).map_err(|e| format!("{}: {e}", a.trace.display()))?;
    if let Some(path) = &a.out {
        write_file(path, report.to_json().as_bytes()).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    if a.json {
        let _ = writeln!(out, "{}", report.to_json());
    } else {
        let _ = write!(out, "{}", report.summary());
        let verdict = match (report.passed(), report.model_violating) {
            (true, false) => "PASS",
            (true, true) => "PASS (model-violating run; failures are not counted)",
            (false, _) => "FAIL",
        };
        let _ = writeln!(out, "{verdict}");
    }
    Ok(report_exit_code(&report))
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<i32, String> {
    let cfg = load_scenario(&a.scenario).map_err(|e| e.to_string())?;
    let seeds = parse_seed_range(&a.seeds)?;
    let report = sweep(&cfg, seeds, families(&a.spec), a.jobs).map_err(|e| e.to_string())?;
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report).expect("reports serialize");
        write_file(path, json.as_bytes()).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    let _ = writeln!(out, "{}", report.summary());
    Ok(if report.failures.iter().any(|f| f.fatal.is_some()) {
        EXIT_INTERNAL
    } else if report.clean() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    })
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    execute(cli, &mut io::stdout(), &mut io::stderr())
}
