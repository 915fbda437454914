//! Scenario files, Monte Carlo sweeps and result tables.

mod oracle_check;
mod run;
mod scenario;
mod summary;

pub use oracle_check::{amp_levels, discrete_set, oracle_check, oracle_over_splits, OracleRow};
pub use run::{
    csv_header, manifest, run_row, run_scenario, run_to_dir, scenario_from_manifest, write_csv, Row,
};
pub use scenario::{OracleSpec, Scenario, Sweep, SweepVar};
pub use summary::{read_samples, summarize, Sample, Summary, SummaryRow};
