//! Command-line runner for `zsgame`: reads a JSON run configuration, solves
//! the configured game, runs the requested audits and writes JSON and CSV
//! reports. Exit codes: 0 all audits pass, 1 an audit failed, 2 a solver did
//! not converge, 3 configuration error.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;

pub use config::{ConfigError, Format, RunConfig};
pub use run::{execute, prepare, ExitStatus, Mode, RunOutcome};
