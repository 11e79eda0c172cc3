//! Configuration files, run orchestration, CSV/checkpoint output and the
//! self-check suites used by the command-line front end.

pub mod checkpoint;
pub mod config;
pub mod output;
pub mod run;
pub mod suites;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{parse_config, parse_config_str, RunSetup};
pub use run::{run, run_from, RunOutcome, RunStatus};
pub use suites::{format_table, run_suite, CheckRow, Suite};
