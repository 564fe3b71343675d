//! `choreo`: check, run and project choreographies with connectors.
//!
//! Exit codes: 0 when the answer is positive, 1 when it is negative
//! (incompatible, stuck, unprojectable, correspondence gaps), 2 for unusable
//! input (missing file, parse error, bad flags).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};

use choreo::chor_engine::{self, Configuration, Outcome, Scheduler};
use choreo::compat::{check_compat, check_confluence, CompatOptions, Confluence, Verdict};
use choreo::cp_engine::{self, CpConfig, CpOutcome};
use choreo::epp::{project_connectors, project_network};
use choreo::harness::check_correspondence;
use choreo::model::validate_automaton;
use choreo::textio::{
    parse_automata, parse_network, parse_program_with, print_automaton, print_network, ParseOptions, Program,
};

#[derive(Parser)]
#[command(name = "choreo", version, about = "Choreographies over constraint-automaton connectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and check its automata and interaction sets.
    Validate(Common),
    /// Decide whether the choreography is compatible with its connectors.
    Check {
        #[command(flatten)]
        common: Common,
        /// Compare automaton states at calls only on the connectors a procedure uses.
        #[arg(long)]
        modular: bool,
    },
    /// Run the choreography.
    Run(Running),
    /// Print the projected network.
    Project {
        #[command(flatten)]
        common: Common,
        /// Write the network here, and the projected connectors next to it as `.ca`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a network: a `.cp` file with its connectors, or a projected `.cr` program.
    Simulate {
        #[command(flatten)]
        running: Running,
        /// Connectors of a `.cp` network, one automaton per connector name
        /// (default: the `.ca` file next to it).
        #[arg(long)]
        connectors: Option<PathBuf>,
    },
    /// Compare choreography and network reductions up to a depth.
    Correspond {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 25)]
        bound: usize,
    },
}

#[derive(Args)]
struct Common {
    /// A `.cr` file, or the name of a fixture in `$CHOREO_FIXTURES`.
    file: String,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Accept runtime terms such as `q.x ? v`.
    #[arg(long)]
    runtime: bool,
}

#[derive(Args)]
struct Running {
    #[command(flatten)]
    common: Common,
    /// Pick reductions at random from this seed instead of always the first.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
}

struct Failure(u8, String);

/// Exit code, text output and JSON output.
type Answer = Result<(u8, String, Json), Failure>;

fn locate(file: &str) -> PathBuf {
    let direct = PathBuf::from(file);
    if direct.exists() {
        return direct;
    }
    let dir = std::env::var_os("CHOREO_FIXTURES").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));
    let named = dir.join(format!("{file}.cr"));
    if named.exists() {
        named
    } else {
        direct
    }
}

fn load(c: &Common) -> Result<Program, Failure> {
    let path = locate(&c.file);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    parse_program_with(&text, ParseOptions { runtime: c.runtime })
        .map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn validate(c: &Common) -> Answer {
    let p = load(c)?;
    let mut problems = Vec::new();
    for (name, a) in &p.automata {
        for v in validate_automaton(a) {
            problems.push(format!("automaton {name}: {v}"));
        }
    }
    if let Err(e) = p.try_connectors() {
        problems.push(e.to_string());
    }
    let text = if problems.is_empty() {
        format!(
            "ok: {} automata, {} connectors, {} processes",
            p.automata.len(),
            p.bindings.len(),
            p.main.processes().len()
        )
    } else {
        problems.join("\n")
    };
    let code = if problems.is_empty() { 0 } else { 2 };
    Ok((code, text, json!({ "valid": problems.is_empty(), "problems": problems })))
}

fn check(c: &Common, modular: bool) -> Answer {
    let p = load(c)?;
    let g = p.connectors();
    let verdict = check_compat(&p.main, &g, CompatOptions { modular, budget: 0 })
        .map_err(|e| Failure(2, e.to_string()))?;
    let unknown: Vec<String> = g
        .iter()
        .filter_map(|(n, a)| match check_confluence(a) {
            Confluence::Confluent => None,
            Confluence::Unknown { state, first, second } => {
                Some(format!("{n}: transitions #{first} and #{second} from state {state}"))
            }
        })
        .collect();
    let mut text = match &verdict {
        Verdict::Yes(stats) => format!("compatible ({} judgements)", stats.judgements),
        Verdict::No(cx) => cx.to_string().trim_end().to_owned(),
    };
    if verdict.is_yes() && !unknown.is_empty() {
        text.push_str("\nnote: progress is only guaranteed for confluent connectors; not shown confluent:");
        for u in &unknown {
            text.push_str(&format!("\n  {u}"));
        }
    }
    let j = match &verdict {
        Verdict::Yes(stats) => json!({
            "compatible": true,
            "judgements": stats.judgements,
            "not_confluent": unknown,
        }),
        Verdict::No(cx) => json!({
            "compatible": false,
            "reason": cx.reason,
            "head": cx.head,
            "connector": cx.connector,
            "state": cx.state,
            "judgement": cx.choreography,
            "path": cx.path,
        }),
    };
    Ok((if verdict.is_yes() { 0 } else { 1 }, text, j))
}

fn trace_line(i: usize, step: &impl std::fmt::Display) -> String {
    format!("{:>4}  {step}", i + 1)
}

fn run(r: &Running) -> Answer {
    let p = load(&r.common)?;
    let g = p.connectors();
    let scheduler = r.seed.map(Scheduler::Seeded).unwrap_or(Scheduler::First);
    let result = chor_engine::run(&Configuration::initial(&p.main, &p.init, &g), &g, scheduler, r.max_steps);
    let steps: Vec<String> = result.trace.iter().enumerate().map(|(i, s)| trace_line(i, s)).collect();
    let (code, outcome) = match &result.outcome {
        Outcome::Terminated => (0, "terminated".to_owned()),
        Outcome::StepLimit => (0, format!("step limit ({}) reached", r.max_steps)),
        Outcome::Stuck(report) => (1, report.to_string()),
    };
    let store: Vec<Json> = result
        .last
        .sigma
        .iter()
        .map(|(p, x, v)| json!({ "process": p, "var": x, "value": v.to_string() }))
        .collect();
    let mut text = steps.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(&outcome);
    Ok((code, text, json!({ "trace": steps, "outcome": outcome, "store": store })))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn project(c: &Common, out: Option<&Path>) -> Answer {
    let p = load(c)?;
    let n = match project_network(&p.main, &p.init) {
        Ok(n) => n,
        Err(e) => return Ok((1, format!("not projectable: {e}"), json!({ "error": e.to_string() }))),
    };
    let text = print_network(&n);
    if let Some(out) = out {
        write(out, &text)?;
        let automata: Vec<String> = project_connectors(&p.connectors())
            .iter()
            .map(|(name, a)| print_automaton(name, a))
            .collect();
        write(&out.with_extension("ca"), &(automata.join("\n\n") + "\n"))?;
    }
    Ok((0, text.trim_end().to_owned(), json!({ "network": text })))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn simulate(r: &Running, connectors: Option<&Path>) -> Answer {
    let path = locate(&r.common.file);
    let (network, g) = if path.extension().is_some_and(|x| x == "cp") {
        let network = parse_network(&read(&path)?).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
        let ca = connectors.map(Path::to_owned).unwrap_or_else(|| path.with_extension("ca"));
        let automata = parse_automata(&read(&ca)?).map_err(|e| Failure(2, format!("{}: {e}", ca.display())))?;
        (network, automata.into_iter().collect())
    } else {
        let p = load(&r.common)?;
        match project_network(&p.main, &p.init) {
            Ok(n) => (n, project_connectors(&p.connectors())),
            Err(e) => return Ok((1, format!("not projectable: {e}"), json!({ "error": e.to_string() }))),
        }
    };
    let result = cp_engine::run(&CpConfig::initial(&network, &g), &g, r.seed, r.max_steps);
    let steps: Vec<String> = result.trace.iter().enumerate().map(|(i, s)| trace_line(i, s)).collect();
    let (code, outcome) = match result.outcome {
        CpOutcome::Terminated => (0, "terminated".to_owned()),
        CpOutcome::StepLimit => (0, format!("step limit ({}) reached", r.max_steps)),
        CpOutcome::Stuck => (1, "stuck".to_owned()),
    };
    let mut text = steps.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(&outcome);
    Ok((code, text, json!({ "trace": steps, "outcome": outcome })))
}

fn correspond(c: &Common, bound: usize) -> Answer {
    let p = load(c)?;
    let report = check_correspondence(&p.main, &p.init, &p.connectors(), bound)
        .map_err(|e| Failure(1, format!("not projectable: {e}")))?;
    let gaps: Vec<String> = report.gaps.iter().map(|g| g.to_string()).collect();
    let mut text = format!(
        "{} matched pairs, {} completeness gaps, {} soundness gaps{}",
        report.pairs,
        report.completeness_gaps(),
        report.soundness_gaps(),
        if report.truncated { " (bound reached)" } else { "" }
    );
    for g in &gaps {
        text.push_str(&format!("\n  {g}"));
    }
    let code = if gaps.is_empty() { 0 } else { 1 };
    Ok((
        code,
        text,
        json!({ "pairs": report.pairs, "gaps": gaps, "truncated": report.truncated }),
    ))
}

fn dispatch(cli: &Cli) -> (bool, Answer) {
    match &cli.command {
        Command::Validate(c) => (c.json, validate(c)),
        Command::Check { common, modular } => (common.json, check(common, *modular)),
        Command::Run(r) => (r.common.json, run(r)),
        Command::Project { common, out } => (common.json, project(common, out.as_deref())),
        Command::Simulate { running, connectors } => (running.common.json, simulate(running, connectors.as_deref())),
        Command::Correspond { common, bound } => (common.json, correspond(common, *bound)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Nested choreographies recurse deeply; give them room.
    let worker = std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(move || dispatch(&cli))
        .expect("spawn worker thread");
    let (as_json, outcome) = worker.join().unwrap_or_else(|_| (false, Err(Failure(2, "internal error".into()))));
    match outcome {
        Ok((code, text, j)) => {
            if as_json {
                println!("{}", serde_json::to_string_pretty(&j).expect("json"));
            } else {
                println!("{text}");
            }
            ExitCode::from(code)
        }
        Err(Failure(code, msg)) => {
            if as_json {
                println!("{}", json!({ "error": msg }));
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code)
        }
    }
}
