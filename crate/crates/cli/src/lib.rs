//! Batch front-end for the inequality harness: configuration, suite
//! execution, oracle runs and report files.

pub mod config;
pub mod oracle;
pub mod report;
pub mod suite;

pub use config::{CheckId, ConfigError, Overrides, ParamTuple, RunConfig};
pub use suite::{run_suite, CheckSummary, Outcome};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVARIANT_VIOLATION: i32 = 1;
    pub const CONFIG_ERROR: i32 = 2;
}
