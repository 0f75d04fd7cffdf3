//! Long-format experiment records: one `(run id, seed, step, metric, value)`
//! row per observation, with a schema-version header that readers check.

use std::collections::HashSet;
use std::fmt::Write as _;

use anyhow::{bail, Result};

pub const EXPERIMENT_CSV_SCHEMA: &str = "# schema dac.experiment v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub seed: u64,
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Default)]
pub struct RecordSet {
    rows: Vec<ExperimentRecord>,
    keys: HashSet<(String, u64, u64, String)>,
}

impl RecordSet {
    pub fn new() -> Self {
        RecordSet::default()
    }

    /// Appends a record; the (run id, seed, step, metric) key must be new.
    pub fn push(&mut self, record: ExperimentRecord) -> Result<()> {
        let key = (
            record.run_id.clone(),
            record.seed,
            record.step,
            record.metric.clone(),
        );
        if !self.keys.insert(key) {
            bail!(
                "duplicate record key: {} seed {} step {} metric {}",
                record.run_id,
                record.seed,
                record.step,
                record.metric
            );
        }
        self.rows.push(record);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EXPERIMENT_CSV_SCHEMA);
        out.push('\n');
        out.push_str("run_id,seed,step,metric,value\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.run_id, r.seed, r.step, r.metric, r.value).unwrap();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

}

/// Parses an experiment CSV, rejecting unknown schema versions.
pub fn parse_experiment_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(line) if line == EXPERIMENT_CSV_SCHEMA => {}
        Some(line) => bail!("unknown schema version: `{line}`"),
        None => bail!("empty experiment file"),
    }
    match lines.next() {
        Some("run_id,seed,step,metric,value") => {}
        other => bail!("unexpected column header {other:?}"),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            bail!("malformed row `{line}`");
        }
        rows.push(ExperimentRecord {
            run_id: parts[0].to_string(),
            seed: parts[1].parse()?,
            step: parts[2].parse()?,
            metric: parts[3].to_string(),
            value: parts[4].parse()?,
        });
    }
    Ok(rows)
}
