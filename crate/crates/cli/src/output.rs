// Copyright 2026 The videocc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Files written per run and per experiment.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;
use videocc::engine::RunResult;
use videocc::metrics::summarize;

use crate::plan::Plan;

/// Flat `(column, value)` view of a run summary.
pub type RunRow = Vec<(String, String)>;

/// Metrics shown by `compare`.
const COMPARED: &[&str] = &[
    "video_bitrate_bps",
    "latency_ms_p95",
    "latency_ms_p50",
    "utilization",
    "frame_rate",
    "padding_ratio",
    "alpha_mean",
];

fn flatten(prefix: &str, v: &Value, out: &mut RunRow) {
    match v {
        Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}_{k}")
                };
                flatten(&key, inner, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Writes `summary.csv`, `frames.csv`, `packets.csv` and, when the event
/// log is enabled, `events.jsonl`.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<RunRow> {
    let summary = summarize(run)?;
    let mut row = RunRow::new();
    flatten("", &serde_json::to_value(&summary)?, &mut row);
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(row.iter().map(|(k, _)| k))?;
    w.write_record(row.iter().map(|(_, v)| v))?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("frames.csv"))?;
    for f in &run.frames {
        w.serialize(f)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("packets.csv"))?;
    for p in &run.packets {
        w.serialize(p)?;
    }
    w.flush()?;

    if let Some(events) = &run.events {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("events.jsonl"))?);
        for e in events {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    Ok(row)
}

/// Writes `aggregate.csv`: one row per run with its sweep point, status and
/// summary columns.
pub fn write_aggregate(out: &Path, plan: &Plan, outcomes: &[Result<RunRow>]) -> Result<()> {
    let metric_cols: Vec<String> = outcomes
        .iter()
        .find_map(|o| o.as_ref().ok())
        .map(|r| r.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_path(out.join("aggregate.csv"))?;
    let mut header = vec!["run".to_string(), "trace".to_string()];
    header.extend(plan.axes.iter().map(|a| a.key.clone()));
    header.push("status".into());
    header.extend(metric_cols.iter().cloned());
    w.write_record(&header)?;
    for (spec, outcome) in plan.runs.iter().zip(outcomes) {
        let mut rec = vec![spec.name.clone(), spec.trace.clone()];
        rec.extend(spec.point.iter().map(|(_, v)| v.clone()));
        match outcome {
            Ok(row) => {
                rec.push("ok".into());
                rec.extend(row.iter().map(|(_, v)| v.clone()));
            }
            Err(_) => {
                rec.push("error".into());
                rec.extend(metric_cols.iter().map(|_| String::new()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

struct Aggregate {
    dir: PathBuf,
    traces: BTreeSet<String>,
    means: Vec<Option<f64>>,
}

fn read_aggregate(dir: &Path) -> Result<Aggregate> {
    let path = dir.join("aggregate.csv");
    let mut r =
        csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let trace_col = col("trace").context("aggregate.csv has no trace column")?;
    let status_col = col("status").context("aggregate.csv has no status column")?;
    let metric_cols: Vec<Option<usize>> = COMPARED.iter().map(|m| col(m)).collect();
    let mut traces = BTreeSet::new();
    let mut sums = vec![(0.0, 0usize); COMPARED.len()];
    for rec in r.records() {
        let rec = rec?;
        traces.insert(rec[trace_col].to_string());
        if &rec[status_col] != "ok" {
            continue;
        }
        for (i, c) in metric_cols.iter().enumerate() {
            if let Some(v) = c.and_then(|c| rec[c].parse::<f64>().ok()) {
                sums[i].0 += v;
                sums[i].1 += 1;
            }
        }
    }
    Ok(Aggregate {
        dir: dir.to_path_buf(),
        traces,
        means: sums
            .iter()
            .map(|&(s, n)| (n > 0).then(|| s / n as f64))
            .collect(),
    })
}

/// Table of per-directory means. Fails unless every directory ran the same
/// trace set.
pub fn compare(dirs: &[PathBuf]) -> Result<String> {
    let aggs = dirs
        .iter()
        .map(|d| read_aggregate(d))
        .collect::<Result<Vec<_>>>()?;
    let first = &aggs[0];
    for a in &aggs[1..] {
        if a.traces != first.traces {
            bail!(
                "trace sets differ between {} and {}",
                first.dir.display(),
                a.dir.display()
            );
        }
    }
    let mut out = String::new();
    write!(out, "dir").unwrap();
    for m in COMPARED {
        write!(out, ",{m}").unwrap();
    }
    out.push('\n');
    for a in &aggs {
        write!(out, "{}", a.dir.display()).unwrap();
        for m in &a.means {
            match m {
                Some(v) => write!(out, ",{v:.6}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
