//! Choreographies whose communications are animated by constraint-automaton
//! connectors.
//!
//! A choreography describes, from a global point of view, which processes
//! exchange which values. Every interaction set is tagged with a connector
//! name; a connector mapping assigns each name a constraint automaton that
//! decides *how* the messages flow (synchronously, through buffers, as a
//! barrier, ...). This crate provides:
//!
//! - [`model`]: the shared AST and automaton types plus well-formedness checks;
//! - [`textio`]: the `.cr` / `.ca` / `.cp` text formats;
//! - [`chor_engine`]: small-step execution of choreographies;
//! - [`compat`]: the static compatibility check (a sound approximation of
//!   deadlock freedom) and a confluence check on automata;
//! - [`epp`]: endpoint projection to Connected Processes networks;
//! - [`cp_engine`]: execution of projected networks against projected connectors;
//! - [`harness`]: exhaustive exploration, a brute-force oracle for the matching
//!   rules, the bounded operational-correspondence checker and fixtures.
//!
//! ```
//! use choreo::textio::parse_program;
//! use choreo::chor_engine::{run, Configuration, Outcome, Scheduler};
//!
//! let program = parse_program(r#"
//!     automaton Sync { ports p1, p2; states 1; init 1; 1 -> 1 : p1 > p2; }
//!     connectors { ch = Sync[a/p1, b/p2]; }
//!     init { a.x = 41; }
//!     main { a.x + 1 -> b.y thru ch; 0 }
//! "#).unwrap();
//!
//! let g = program.connectors();
//! let cfg = Configuration::initial(&program.main, &program.init, &g);
//! let result = run(&cfg, &g, Scheduler::First, 10);
//! assert_eq!(result.outcome, Outcome::Terminated);
//! assert_eq!(result.last.sigma.get("b", "y"), Some(&choreo::model::Value::Int(42)));
//! ```

pub mod chor_engine;
pub mod compat;
pub mod cp_engine;
pub mod epp;
pub mod harness;
pub mod model;
pub mod textio;

mod matching;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/connectors.md")]
    pub struct Connectors;
    #[doc = include_str!("../../../book/src/choreographies.md")]
    pub struct Choreographies;
    #[doc = include_str!("../../../book/src/semantics.md")]
    pub struct Semantics;
    #[doc = include_str!("../../../book/src/compatibility.md")]
    pub struct Compatibility;
    #[doc = include_str!("../../../book/src/projection.md")]
    pub struct Projection;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
