use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::methods::{run_method, Method, RunOptions};
use crate::records::{sort_records, RunRecord};
use crate::suite::TestCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub method: Method,
    pub case: TestCase,
    pub seed: u64,
}

/// Every `(method, case, seed)` combination, seeds `0..seeds`.
pub fn jobs(methods: &[Method], cases: &[TestCase], seeds: u64) -> Vec<Job> {
    let mut out = Vec::new();
    for &method in methods {
        for case in cases {
            for seed in 0..seeds {
                out.push(Job {
                    method,
                    case: case.clone(),
                    seed,
                });
            }
        }
    }
    out
}

/// Runs the jobs in parallel and returns their records in sorted order.
pub fn run_jobs(jobs: &[Job], options: &RunOptions) -> Result<Vec<RunRecord>> {
    let per_job: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|job| {
            let records = run_method(job.method, &job.case, job.seed, options)?;
            if let Some(last) = records.last() {
                log::info!(
                    "{} {} seed {}: similarity {:.4}, f1 {:.3}, {} ms",
                    job.method,
                    job.case.case_id,
                    job.seed,
                    last.best_similarity,
                    last.f1,
                    last.wall_ms
                );
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<RunRecord> = per_job.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}
