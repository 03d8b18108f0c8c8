use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One point on a run's running-best curve. Field order is the CSV column
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub case_id: String,
    pub method: String,
    pub seed: u64,
    pub iteration: usize,
    pub best_similarity: f64,
    pub f1: f64,
    pub num_active: usize,
    pub renders_used: usize,
    pub wall_ms: u64,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "case_id",
    "method",
    "seed",
    "iteration",
    "best_similarity",
    "f1",
    "num_active",
    "renders_used",
    "wall_ms",
];

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        (&a.method, &a.case_id, a.seed, a.iteration).cmp(&(&b.method, &b.case_id, b.seed, b.iteration))
    });
}

pub fn write_records<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let records = r.deserialize().collect::<Result<Vec<RunRecord>, csv::Error>>()?;
    Ok(records)
}
