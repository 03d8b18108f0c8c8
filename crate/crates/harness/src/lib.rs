//! Simulated-user benchmark for the matching task: a ground-truth
//! coefficient vector is hidden behind a similarity oracle and each method
//! tries to recover it within a fixed render budget.

pub mod error;
pub mod methods;
pub mod metrics;
pub mod oracle;
pub mod records;
pub mod runner;
pub mod suite;

pub use error::{HarnessError, Result};
pub use methods::{run_method, Method, RunOptions};
pub use metrics::{aggregate, f1_active, MethodSummary, Summary};
pub use oracle::{simulated_rank, Oracle};
pub use records::{read_records, write_records, RunRecord, CSV_COLUMNS};
pub use runner::{jobs, run_jobs, Job};
pub use suite::{build_test_suite, stratified_subset, OracleKind, TestCase, WeightBin};
