//! Aggregation and output files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path as FsPath, PathBuf};

use mrpp_core::ecbs::trace_csv;
use serde::{Deserialize, Serialize};

use crate::suite::{BenchError, Outcome, RunRecord};

/// Aggregate over all runs of one solver in one setting (map, generator,
/// robot count). Means are over solved runs and absent when nothing was
/// solved; the success rate is over all runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub map: String,
    pub generator: String,
    pub robots: usize,
    pub runs: usize,
    pub solved: usize,
    pub timeouts: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub mean_wall_s: Option<f64>,
    pub mean_makespan: Option<f64>,
    pub mean_soc: Option<f64>,
    pub mean_mkpn_ratio: Option<f64>,
    pub mean_soc_ratio: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups records by (solver, map, generator, robots), sorted by that key.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, &str, &str, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.solver, &r.map, &r.generator, r.robots)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((solver, map, generator, robots), runs)| {
            let solved: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.outcome == Outcome::Solved).collect();
            let count = |o: Outcome| runs.iter().filter(|r| r.outcome == o).count();
            SummaryRow {
                solver: solver.to_string(),
                map: map.to_string(),
                generator: generator.to_string(),
                robots,
                runs: runs.len(),
                solved: solved.len(),
                timeouts: count(Outcome::Timeout),
                errors: count(Outcome::Error),
                success_rate: solved.len() as f64 / runs.len() as f64,
                mean_wall_s: mean(solved.iter().map(|r| r.wall_s)),
                mean_makespan: mean(solved.iter().filter_map(|r| r.makespan).map(|v| v as f64)),
                mean_soc: mean(solved.iter().filter_map(|r| r.soc).map(|v| v as f64)),
                mean_mkpn_ratio: mean(solved.iter().filter_map(|r| r.mkpn_ratio)),
                mean_soc_ratio: mean(solved.iter().filter_map(|r| r.soc_ratio)),
            }
        })
        .collect()
}

/// Appends run records to `records.csv` in an output directory, flushing
/// after every row, and writes per-run search traces under `traces/`.
pub struct RecordWriter {
    dir: PathBuf,
    csv: csv::Writer<File>,
}

impl RecordWriter {
    pub fn create(dir: &FsPath) -> Result<Self, BenchError> {
        fs::create_dir_all(dir)?;
        let csv = csv::Writer::from_path(dir.join("records.csv"))?;
        Ok(RecordWriter { dir: dir.to_path_buf(), csv })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), BenchError> {
        self.csv.serialize(record)?;
        self.csv.flush()?;
        if !record.trace.is_empty() {
            let traces = self.dir.join("traces");
            fs::create_dir_all(&traces)?;
            let name = format!("{}__{}.csv", record.instance, record.solver).replace([':', ',', '=', '/'], "_");
            fs::write(traces.join(name), trace_csv(&record.trace))?;
        }
        Ok(())
    }
}

/// Writes `summary.json` and `summary.csv`.
pub fn write_summary(dir: &FsPath, summary: &[SummaryRow]) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    let mut csv = csv::Writer::from_path(dir.join("summary.csv"))?;
    for row in summary {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}
