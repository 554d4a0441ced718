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

//! Expansion of traces and sweep axes into individual runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use videocc::config::LinkConfig;
use videocc::SimConfig;

/// Short names accepted for sweep and `--set` keys.
const ALIASES: &[(&str, &str)] = &[
    ("P_ms", "controller.P_ms"),
    ("p_ms", "controller.P_ms"),
    ("lambda", "controller.lambda"),
    ("tau_ms", "controller.tau_ms"),
    ("T_s", "controller.T_s"),
    ("algorithm", "cca.algorithm"),
    ("dummy", "dummy.enabled"),
    ("safeguard", "controller.safeguard_enabled"),
    ("bitrate_selection", "controller.bitrate_selection_enabled"),
    ("preset", "encoder.preset"),
];

pub fn canonical_key(key: &str) -> String {
    ALIASES
        .iter()
        .find(|(a, _)| *a == key)
        .map_or_else(|| key.to_string(), |(_, full)| full.to_string())
}

#[derive(Clone, Debug)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_axis(spec: &str) -> Result<Axis> {
    let (key, values) = spec
        .split_once('=')
        .with_context(|| format!("--sweep expects key=v1,v2,..., got {spec:?}"))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        bail!("sweep axis {key} has no values");
    }
    Ok(Axis {
        key: key.trim().to_string(),
        values,
    })
}

/// Resolves each argument as a glob; arguments matching nothing are kept
/// verbatim so a missing file surfaces as that run's error.
pub fn expand_traces(args: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for pattern in args {
        let mut matched: Vec<PathBuf> = glob::glob(pattern)
            .with_context(|| format!("bad trace pattern {pattern:?}"))?
            .filter_map(|p| p.ok())
            .collect();
        matched.sort();
        if matched.is_empty() {
            out.push(PathBuf::from(pattern));
        } else {
            out.extend(matched);
        }
    }
    Ok(out)
}

pub fn trace_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub name: String,
    pub trace: String,
    /// `(axis key, value)` of this point, in axis order.
    pub point: Vec<(String, String)>,
    pub config: SimConfig,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub axes: Vec<Axis>,
    pub runs: Vec<RunSpec>,
}

impl Plan {
    pub fn new(
        base: SimConfig,
        traces: Vec<PathBuf>,
        sweeps: &[String],
        max_runs: usize,
    ) -> Result<Self> {
        let axes = sweeps
            .iter()
            .map(|s| parse_axis(s))
            .collect::<Result<Vec<_>>>()?;
        let points = axes
            .iter()
            .fold(1usize, |n, a| n.saturating_mul(a.values.len()));
        let total = points.saturating_mul(traces.len().max(1));
        if total > max_runs {
            bail!("plan has {total} runs, above the cap of {max_runs}");
        }
        // validate every axis value once against the base config
        for axis in &axes {
            for v in &axis.values {
                base.clone().set(&canonical_key(&axis.key), v)?;
            }
        }
        let trace_slots: Vec<Option<&PathBuf>> = if traces.is_empty() {
            vec![None]
        } else {
            traces.iter().map(Some).collect()
        };
        let mut runs = Vec::with_capacity(total);
        for trace in trace_slots {
            for idx in 0..points {
                let mut rem = idx;
                let mut point = Vec::with_capacity(axes.len());
                for axis in axes.iter().rev() {
                    point.push((
                        axis.key.clone(),
                        axis.values[rem % axis.values.len()].clone(),
                    ));
                    rem /= axis.values.len();
                }
                point.reverse();
                let mut config = base.clone();
                if let Some(path) = trace {
                    let link = std::mem::take(&mut config.link);
                    config.link = LinkConfig {
                        owd_ms: link.owd_ms,
                        buffer_bytes: link.buffer_bytes,
                        mtu: link.mtu,
                        ..LinkConfig::trace(path.clone())
                    };
                }
                for (k, v) in &point {
                    config.set(&canonical_key(k), v)?;
                }
                let trace_label = trace.map_or_else(|| "config".to_string(), |p| trace_name(p));
                let mut name = format!("{:04}-{}", runs.len(), sanitize(&trace_label));
                for (k, v) in &point {
                    name.push_str(&format!("-{}={}", sanitize(k), sanitize(v)));
                }
                runs.push(RunSpec {
                    name,
                    trace: trace.map_or_else(|| "config".to_string(), |p| p.display().to_string()),
                    point,
                    config,
                });
            }
        }
        Ok(Self { axes, runs })
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}
