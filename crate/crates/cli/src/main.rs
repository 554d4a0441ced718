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

//! `videocc` experiment runner.

mod output;
mod plan;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use videocc::link::{load_trace, LinkModel};
use videocc::metrics::ideal_transmission_analysis;
use videocc::traces::cellular_suite;
use videocc::SimConfig;

use crate::plan::{Plan, RunSpec};

/// Prefix of environment variables that override config keys, e.g.
/// `VIDEOCC_CONTROLLER__TAU_MS=66`.
pub const ENV_PREFIX: &str = "VIDEOCC";

#[derive(Parser, Debug)]
#[command(
    name = "videocc",
    version,
    about = "Trace-driven real-time video rate-control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation or a sweep over traces and parameters.
    Run(RunArgs),
    /// Trace analyses that need no simulation.
    Analyze(AnalyzeArgs),
    /// Compare the aggregates of completed experiment directories.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
    },
    /// Write the synthetic cellular trace suite in Mahimahi format.
    GenTraces {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 120.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 1500)]
        mtu: u32,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace file or glob, repeatable. Without it the config's link is used.
    #[arg(long)]
    trace: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=v1,v2,...`, repeatable; the plan is the cartesian product.
    #[arg(long)]
    sweep: Vec<String>,
    /// Single `key=value` override, repeatable.
    #[arg(long = "set")]
    set: Vec<String>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Upper bound on the number of runs in a plan.
    #[arg(long, default_value_t = 10_000)]
    max_runs: usize,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Ideal-transmission-time analysis.
    #[arg(long, required = true)]
    eq3: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,0.9,1.0")]
    alpha: Vec<f64>,
    #[arg(long, required = true)]
    trace: Vec<String>,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// CSV of every sample: trace, alpha, frame, t_ms.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Compare { dirs } => output::compare(&dirs).map(|table| {
            print!("{table}");
            true
        }),
        Command::GenTraces {
            out,
            seed,
            duration_s,
            mtu,
        } => gen_traces(&out, seed, duration_s, mtu).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn base_config(args: &RunArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    };
    cfg.apply_env(ENV_PREFIX, std::env::vars())?;
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {kv:?}"))?;
        cfg.set(&plan::canonical_key(k), v)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let base = base_config(&args)?;
    let traces = plan::expand_traces(&args.trace)?;
    let plan = Plan::new(base, traces, &args.sweep, args.max_runs)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()?;
    log::info!("{} runs into {}", plan.runs.len(), args.out.display());
    let outcomes: Vec<_> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|spec| {
                let outcome = execute(spec, &args.out);
                if let Err(e) = &outcome {
                    log::error!("{}: {e:#}", spec.name);
                }
                outcome
            })
            .collect()
    });
    output::write_aggregate(&args.out, &plan, &outcomes)?;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", outcomes.len());
    }
    Ok(failed == 0)
}

fn execute(spec: &RunSpec, out: &Path) -> Result<output::RunRow> {
    let dir = out.join(&spec.name);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), spec.config.to_toml_string())?;
    let result = (|| {
        let link = spec.config.build_link()?;
        let run = videocc::engine::run_with_link(&spec.config, link);
        output::write_run(&dir, &run)
    })();
    match &result {
        Ok(_) => {
            let _ = std::fs::remove_file(dir.join("error.txt"));
        }
        Err(e) => std::fs::write(dir.join("error.txt"), format!("{e:#}\n"))?,
    }
    result
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<bool> {
    if !args.eq3 {
        bail!("only --eq3 is available");
    }
    let traces = plan::expand_traces(&args.trace)?;
    if traces.is_empty() {
        bail!("no traces given");
    }
    let delta_ms = 1000.0 / args.fps;
    let mut writer = match &args.out {
        Some(p) => {
            let mut w =
                csv::Writer::from_path(p).with_context(|| format!("writing {}", p.display()))?;
            w.write_record(["trace", "alpha", "frame", "t_ms"])?;
            Some(w)
        }
        None => None,
    };
    let results: Vec<_> = traces
        .par_iter()
        .map(|path| -> Result<_> {
            let link: LinkModel =
                load_trace(path).with_context(|| format!("loading {}", path.display()))?;
            Ok((
                path.clone(),
                ideal_transmission_analysis::<f64>(&link, &args.alpha, delta_ms, None)?,
            ))
        })
        .collect();
    println!("trace,alpha,p95_t_ms,frames,zero_capacity_frames");
    for r in results {
        let (path, a) = r?;
        let name = plan::trace_name(&path);
        for (i, alpha) in a.alpha_grid.iter().enumerate() {
            println!(
                "{name},{alpha},{:.3},{},{}",
                a.p95_of_t[i], a.frames, a.zero_capacity_frames
            );
            if let Some(w) = writer.as_mut() {
                for (k, t) in a.t_samples[i].iter().enumerate() {
                    w.write_record([
                        name.clone(),
                        alpha.to_string(),
                        k.to_string(),
                        format!("{t:.4}"),
                    ])?;
                }
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(true)
}

fn gen_traces(out: &Path, seed: u64, duration_s: f64, mtu: u32) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (name, trace) in cellular_suite((duration_s * 1e3) as u64, mtu, seed)? {
        let path = out.join(format!("{name}.trace"));
        std::fs::write(&path, trace.to_mahimahi())?;
        println!("{}", path.display());
    }
    Ok(())
}
