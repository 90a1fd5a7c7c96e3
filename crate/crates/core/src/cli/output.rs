//! Run artifacts: results.csv, summary.json, matrix.csv.
//!
//! results.csv column order is fixed; reruns of the same config are
//! byte-identical except for the wall_time_s column.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::{Method, Scenario};
use crate::error::{CoreError, Result};

pub const RESULTS_HEADER: [&str; 11] = [
    "run_id",
    "seed",
    "scenario",
    "rank",
    "layers",
    "alpha",
    "stage",
    "last",
    "avg",
    "params",
    "wall_time_s",
];

/// One (run, stage) record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub rank: usize,
    pub layers: Vec<usize>,
    pub alpha: f64,
    pub stage: usize,
    pub last: f64,
    pub avg: f64,
    pub params: usize,
    pub wall_time_s: f64,
}

pub fn layers_field(layers: &[usize]) -> String {
    layers
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_layers_field(text: &str) -> Result<Vec<usize>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CoreError::Config(format!("bad layers field {text:?}")))
        })
        .collect()
}

/// Re-checks the Avg identity per run group, then writes.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    // Avg_t must equal the running mean of this run's Last values
    let mut by_run: std::collections::BTreeMap<&str, Vec<&ResultRow>> =
        std::collections::BTreeMap::new();
    for row in rows {
        by_run.entry(&row.run_id).or_default().push(row);
    }
    for (run_id, group) in &by_run {
        let mut group = group.clone();
        group.sort_by_key(|r| r.stage);
        let mut sum = 0.0;
        for (i, row) in group.iter().enumerate() {
            sum += row.last;
            let expect = sum / (i + 1) as f64;
            if row.avg != expect {
                return Err(CoreError::Verification(format!(
                    "avg consistency failed for {run_id} stage {}: {} vs {expect}",
                    row.stage, row.avg
                )));
            }
        }
    }

    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(RESULTS_HEADER)?;
    for r in rows {
        writer.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.scenario.to_string(),
            r.rank.to_string(),
            layers_field(&r.layers),
            r.alpha.to_string(),
            r.stage.to_string(),
            r.last.to_string(),
            r.avg.to_string(),
            r.params.to_string(),
            format!("{:.3}", r.wall_time_s),
        ])?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_HEADER {
        return Err(CoreError::Config(format!(
            "unexpected results.csv header: {headers:?}"
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        let get = |i: usize| r.get(i).unwrap_or("");
        let scenario = match get(2) {
            "til" => Scenario::Til,
            "dil" => Scenario::Dil,
            "cil" => Scenario::Cil,
            other => return Err(CoreError::Config(format!("bad scenario {other:?}"))),
        };
        let parse_err = |field: &str, text: &str| {
            CoreError::Config(format!("bad {field} value {text:?} in results.csv"))
        };
        rows.push(ResultRow {
            run_id: get(0).to_string(),
            seed: get(1).parse().map_err(|_| parse_err("seed", get(1)))?,
            scenario,
            rank: get(3).parse().map_err(|_| parse_err("rank", get(3)))?,
            layers: parse_layers_field(get(4))?,
            alpha: get(5).parse().map_err(|_| parse_err("alpha", get(5)))?,
            stage: get(6).parse().map_err(|_| parse_err("stage", get(6)))?,
            last: get(7).parse().map_err(|_| parse_err("last", get(7)))?,
            avg: get(8).parse().map_err(|_| parse_err("avg", get(8)))?,
            params: get(9).parse().map_err(|_| parse_err("params", get(9)))?,
            wall_time_s: get(10)
                .parse()
                .map_err(|_| parse_err("wall_time_s", get(10)))?,
        });
    }
    Ok(rows)
}

/// Final metrics of one run (seed within an alpha group).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub last: f64,
    pub avg: f64,
    pub params: usize,
    pub stages: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlphaGroup {
    pub alpha: f64,
    pub runs: Vec<RunSummary>,
    pub last_mean: f64,
    pub last_std: f64,
    pub avg_mean: f64,
    pub avg_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryFile {
    pub scenario: Scenario,
    pub method: Method,
    pub groups: Vec<AlphaGroup>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

pub fn alpha_group(alpha: f64, runs: Vec<RunSummary>) -> AlphaGroup {
    let lasts: Vec<f64> = runs.iter().map(|r| r.last).collect();
    let avgs: Vec<f64> = runs.iter().map(|r| r.avg).collect();
    let (last_mean, last_std) = mean_std(&lasts);
    let (avg_mean, avg_std) = mean_std(&avgs);
    AlphaGroup {
        alpha,
        runs,
        last_mean,
        last_std,
        avg_mean,
        avg_std,
    }
}

pub fn write_summary_json(path: &Path, summary: &SummaryFile) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text.as_bytes())
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Per-task accuracy matrix row: accuracy of task `task` after `stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub run_id: String,
    pub seed: u64,
    pub alpha: f64,
    pub stage: usize,
    pub task: usize,
    pub accuracy: f64,
}

pub fn write_matrix_csv(path: &Path, rows: &[MatrixRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["run_id", "seed", "alpha", "stage", "task", "accuracy"])?;
    for r in rows {
        writer.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.alpha.to_string(),
            r.stage.to_string(),
            r.task.to_string(),
            r.accuracy.to_string(),
        ])?;
    }
    writer
        .flush()
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(stage: usize, last: f64, avg: f64) -> ResultRow {
        ResultRow {
            run_id: "cil-core-r8-l0-a1-s1993".into(),
            seed: 1993,
            scenario: Scenario::Cil,
            rank: 8,
            layers: vec![0, 1, 2, 3],
            alpha: 1.0,
            stage,
            last,
            avg,
            params: 1032,
            wall_time_s: 0.5,
        }
    }

    #[test]
    fn round_trip_and_avg_recheck() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![row(1, 80.0, 80.0), row(2, 60.0, 70.0)];
        write_results_csv(&path, &rows).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].layers, vec![0, 1, 2, 3]);
        assert_eq!(back[1].avg, 70.0);

        // header quoting: layers column contains commas, so it is quoted
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"0,1,2,3\""));

        // broken avg rejected at write time
        let bad = vec![row(1, 80.0, 80.0), row(2, 60.0, 71.0)];
        assert!(write_results_csv(&path, &bad).is_err());
    }
}
