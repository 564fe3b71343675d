//! The example corpus in `fixtures/`: each `name.cr` program may have a
//! `name.toml` sidecar with the expected behaviour.
//!
//! ```toml
//! description = "..."
//! parse_error = "undefined connector"   # substring of the parse error
//!
//! [compat]
//! verdict = "no"            # "yes" or "no"
//! modular = false
//! head = "c.book -> s.book"
//! connector = "ac2bs"
//! state = "2"
//!
//! [run]
//! outcome = "terminated"    # or "stuck", "step limit"
//! max_steps = 1000
//! steps = 7
//! class = "no transition with matching ports"
//!
//! [explore]
//! bound = 30
//! stuck = false
//!
//! [project]
//! ok = true
//! golden = "booksale.cp"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::explore::explore;
use crate::chor_engine::{run, Configuration, Outcome, Scheduler};
use crate::compat::{check_compat, CompatOptions, Verdict};
use crate::epp::project_network;
use crate::textio::{parse_network, parse_program, Program};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureMeta {
    pub description: Option<String>,
    pub parse_error: Option<String>,
    pub compat: Option<CompatExpect>,
    pub run: Option<RunExpect>,
    pub explore: Option<ExploreExpect>,
    pub project: Option<ProjectExpect>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatExpect {
    pub verdict: String,
    #[serde(default)]
    pub modular: bool,
    pub head: Option<String>,
    pub connector: Option<String>,
    pub state: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunExpect {
    pub outcome: String,
    /// Step limit for the run (default 1000).
    pub max_steps: Option<usize>,
    pub steps: Option<usize>,
    pub class: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreExpect {
    pub bound: usize,
    pub stuck: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectExpect {
    pub ok: bool,
    pub golden: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub meta: FixtureMeta,
}

impl Fixture {
    pub fn program(&self) -> Program {
        parse_program(&self.source).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Sidecar { path: PathBuf, source: toml::de::Error },
}

/// `$CHOREO_FIXTURES`, or the `fixtures/` directory of the workspace.
pub fn fixtures_dir() -> PathBuf {
    match std::env::var_os("CHOREO_FIXTURES") {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"),
    }
}

fn read(path: &Path) -> Result<String, FixtureError> {
    fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load(dir: &Path, name: &str) -> Result<Fixture, FixtureError> {
    let path = dir.join(format!("{name}.cr"));
    let source = read(&path)?;
    let sidecar = dir.join(format!("{name}.toml"));
    let meta = if sidecar.exists() {
        toml::from_str(&read(&sidecar)?).map_err(|source| FixtureError::Sidecar { path: sidecar, source })?
    } else {
        FixtureMeta::default()
    };
    Ok(Fixture {
        name: name.to_owned(),
        path,
        source,
        meta,
    })
}

/// Every `.cr` fixture in `dir`, sorted by name.
pub fn load_all(dir: &Path) -> Result<Vec<Fixture>, FixtureError> {
    let entries = fs::read_dir(dir).map_err(|source| FixtureError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "cr"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    names.iter().map(|n| load(dir, n)).collect()
}

/// Checks a fixture against its sidecar; returns the mismatches.
pub fn check_fixture(f: &Fixture, dir: &Path) -> Vec<String> {
    let mut problems = Vec::new();
    let program = match (parse_program(&f.source), &f.meta.parse_error) {
        (Ok(_), Some(want)) => return vec![format!("expected parse error containing `{want}`")],
        (Err(e), Some(want)) => {
            if !e.to_string().contains(want.as_str()) {
                problems.push(format!("parse error `{e}` does not mention `{want}`"));
            }
            return problems;
        }
        (Err(e), None) => return vec![format!("parse error: {e}")],
        (Ok(p), None) => p,
    };
    let g = program.connectors();

    if let Some(want) = &f.meta.compat {
        let opts = CompatOptions {
            modular: want.modular,
            budget: 100_000,
        };
        match check_compat(&program.main, &g, opts) {
            Err(e) => problems.push(format!("compat error: {e}")),
            Ok(Verdict::Yes(_)) if want.verdict == "yes" => {}
            Ok(Verdict::No(cx)) if want.verdict == "no" => {
                if want.head.is_some() && cx.head != want.head {
                    problems.push(format!("compat head {:?}, expected {:?}", cx.head, want.head));
                }
                if want.connector.is_some() && cx.connector != want.connector {
                    problems.push(format!("compat connector {:?}, expected {:?}", cx.connector, want.connector));
                }
                if want.state.is_some() && cx.state != want.state {
                    problems.push(format!("compat state {:?}, expected {:?}", cx.state, want.state));
                }
            }
            Ok(v) => problems.push(format!("compat verdict {}, expected {}", yes_no(&v), want.verdict)),
        }
    }

    let start = Configuration::initial(&program.main, &program.init, &g);
    if let Some(want) = &f.meta.run {
        let result = run(&start, &g, Scheduler::First, want.max_steps.unwrap_or(1000));
        let (outcome, class) = match &result.outcome {
            Outcome::Terminated => ("terminated", None),
            Outcome::Stuck(report) => ("stuck", Some(report.class().to_string())),
            Outcome::StepLimit => ("step limit", None),
        };
        if outcome != want.outcome {
            problems.push(format!("run ended {outcome}, expected {}", want.outcome));
        }
        if let Some(n) = want.steps {
            if result.trace.len() != n {
                problems.push(format!("run took {} steps, expected {n}", result.trace.len()));
            }
        }
        if want.class.is_some() && class != want.class {
            problems.push(format!("stuck class {class:?}, expected {:?}", want.class));
        }
    }

    if let Some(want) = &f.meta.explore {
        let report = explore(&start, &g, want.bound);
        let stuck = !report.stuck.is_empty();
        if stuck != want.stuck {
            problems.push(format!("exploration found stuck states: {stuck}, expected {}", want.stuck));
        }
    }

    if let Some(want) = &f.meta.project {
        match project_network(&program.main, &program.init) {
            Ok(n) if want.ok => {
                if let Some(golden) = &want.golden {
                    match fs::read_to_string(dir.join(golden)).map(|s| parse_network(&s)) {
                        Ok(Ok(expected)) if expected == n => {}
                        Ok(Ok(_)) => problems.push(format!("projection differs from {golden}")),
                        Ok(Err(e)) => problems.push(format!("{golden}: {e}")),
                        Err(e) => problems.push(format!("{golden}: {e}")),
                    }
                }
            }
            Err(_) if !want.ok => {}
            Ok(_) => problems.push("projection succeeded, expected failure".into()),
            Err(e) => problems.push(format!("projection failed: {e}")),
        }
    }
    problems
}

fn yes_no(v: &Verdict) -> &'static str {
    if v.is_yes() {
        "yes"
    } else {
        "no"
    }
}
