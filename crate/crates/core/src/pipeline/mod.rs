//! Scenario driver: configuration, file formats and the end-to-end runs
//! behind the `scrom` CLI.

pub mod artifact;
pub mod config;
pub mod report;
pub mod run;
pub mod snapshot;

pub use artifact::{AuditRecord, RomArtifact, VerifyOutcome};
pub use config::{Problem, RomKind, ScenarioConfig};
pub use report::{compare, CompareSummary, ReportRow, RunReport};
pub use run::{build_rom, run_fom, run_rom, verify, FomRun, OutputLayout, RomRun, Scenario};
pub use snapshot::{read_snapshots, write_snapshots};
