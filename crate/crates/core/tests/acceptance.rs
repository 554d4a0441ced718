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

//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line with the
//! measured values next to its pinned tolerance.
//!
//! Run with `cargo test -p videocc --test acceptance -- --nocapture`.
//!
//! Criteria listed in [`KNOWN_FAILING`] are evaluated at full strength and
//! still print `FAIL`; the suite asserts that they keep failing so a fix
//! shows up as a test failure that forces the list to be revisited.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use videocc::config::LinkConfig;
use videocc::controller::{compute_alpha, ControllerConfig};
use videocc::encoder::{EncoderConfig, EncoderPreset};
use videocc::engine::{run_with_link, RunResult};
use videocc::link::{LinkModel, RateSegment, Trace};
use videocc::metrics::{
    convergence_time, ideal_transmission_analysis, relative_rms, summarize, RunSummary,
};
use videocc::stats::percentile;
use videocc::traces::cellular_suite;
use videocc::{ServiceTimeSample, SimConfig, SimTime};

mod tol {
    /// Relative error between the re-applied percentile and its target.
    pub const EXACTNESS_REL: f64 = 1e-9;
    pub const EXACTNESS_RUNTIME_S: f64 = 5.0;

    pub const CONVERGENCE_MAX_S: f64 = 3.0;
    pub const CONVERGENCE_RATIO_MIN: f64 = 2.0;
    pub const CONVERGENCE_FRACTION: f64 = 0.9;
    pub const CONVERGENCE_RUNTIME_S: f64 = 30.0;

    pub const SAFEGUARD_TAU_MS: f64 = 33.0;

    pub const ALPHA_STEADY_MIN: f64 = 0.9;
    pub const SERVICE_P90_MAX_MS: f64 = 33.0;
    pub const ALPHA_GAP_MIN: f64 = 0.05;
    pub const ALPHA_RUNTIME_S: f64 = 60.0;
    /// Start-up excluded from long-run means.
    pub const WARMUP_S: f64 = 10.0;

    /// Ideal transmission time on constant links, in ms.
    pub const EQ3_CONSTANT_ABS_MS: f64 = 1e-9;
    pub const EQ3_RUNTIME_S: f64 = 60.0;

    pub const WIRE_RMS_MAX: f64 = 0.02;

    pub const UTILIZATION_SPREAD_MAX: f64 = 0.05;

    pub const TAU_BITRATE_CHANGE_MAX: f64 = 0.10;
}

/// Criteria that do not hold for this model. Numbers and reasons are in
/// the README.
const KNOWN_FAILING: &[u32] = &[2, 4, 6];

const TRACE_MS: u64 = 120_000;
const MTU: u32 = 1500;
const SUITE_SEED: u64 = 2024;
/// Subset of the suite used for parameter sweeps.
const SWEEP_TRACES: [usize; 5] = [0, 2, 4, 8, 11];

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn suite() -> &'static [(&'static str, Arc<LinkModel>)] {
    static SUITE: OnceLock<Vec<(&'static str, Arc<LinkModel>)>> = OnceLock::new();
    SUITE.get_or_init(|| {
        cellular_suite(TRACE_MS, MTU, SUITE_SEED)
            .expect("suite generates")
            .into_iter()
            .map(|(n, t)| (n, Arc::new(LinkModel::trace(t))))
            .collect()
    })
}

fn base(duration_s: f64) -> SimConfig {
    SimConfig {
        duration_s,
        ..SimConfig::default()
    }
}

/// Runs `jobs` in parallel, preserving order.
fn par_runs(jobs: Vec<(SimConfig, Arc<LinkModel>)>) -> Vec<RunResult> {
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .into_iter()
            .map(|(c, l)| s.spawn(move || run_with_link(&c, l)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run"))
            .collect()
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn oracle_percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
}

fn percentile_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rel, mut estimator_mismatch, mut clamp_mismatch) = (0.0f64, 0usize, 0usize);
    for set in 0..1000u64 {
        let n = rng.random_range(1..200usize);
        let lambda: f64 = rng.random_range(0.05..0.99);
        let p_ms: f64 = rng.random_range(5.0..100.0);
        let cc: f64 = rng.random_range(2e5..2e7);
        let samples: Vec<ServiceTimeSample> = (0..n)
            .map(|i| ServiceTimeSample {
                frame_id: set * 1000 + i as u64,
                service_ms: rng.random_range(0.5..200.0),
                target_bps: rng.random_range(1e5..2e7),
                completion_time: SimTime::ZERO,
            })
            .collect();
        let normalized: Vec<f64> = samples.iter().map(|s| s.counterfactual_ms(cc)).collect();
        let oracle = oracle_percentile(&normalized, lambda);
        if percentile(&normalized, lambda) != Some(oracle) {
            estimator_mismatch += 1;
        }
        let raw = p_ms / oracle;
        let applied: Vec<f64> = samples
            .iter()
            .map(|s| s.counterfactual_ms(raw * cc))
            .collect();
        let got = percentile(&applied, lambda).unwrap();
        worst_rel = worst_rel.max(((got - p_ms) / p_ms).abs());
        if compute_alpha(&samples, cc, lambda, p_ms, 0.5).unwrap() != raw.min(1.0) {
            clamp_mismatch += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "percentile exactness",
        pass: worst_rel <= tol::EXACTNESS_REL
            && estimator_mismatch == 0
            && clamp_mismatch == 0
            && secs < tol::EXACTNESS_RUNTIME_S,
        detail: format!(
            "worst rel err {worst_rel:.2e} (<= {:.0e}), estimator mismatches {estimator_mismatch}, \
             alpha mismatches {clamp_mismatch}, {secs:.2}s",
            tol::EXACTNESS_REL
        ),
    }
}

fn dummy_convergence() -> Verdict {
    let start = Instant::now();
    let link = LinkConfig {
        owd_ms: 25.0,
        ..LinkConfig::piecewise(vec![
            RateSegment::new(40_000.0, 5e6),
            RateSegment::new(40_000.0, 2e6),
            RateSegment::new(40_000.0, 5e6),
        ])
    };
    let mut cfg = base(120.0);
    cfg.link = link;
    // the encoder follows the congestion controller's rate directly
    cfg.controller.bitrate_selection_enabled = false;
    cfg.controller.safeguard_enabled = false;
    let mut off = cfg.clone();
    off.dummy.enabled = false;
    let model = cfg.build_link().unwrap();
    let runs = par_runs(vec![(cfg, model.clone()), (off, model)]);
    let step = SimTime::from_secs_f64(80.0);
    let end = SimTime::from_secs_f64(120.0);
    let conv = |r: &RunResult| {
        convergence_time(
            r,
            step,
            end,
            tol::CONVERGENCE_FRACTION * 5e6,
            Duration::from_secs(1),
        )
        .map(|d| d.as_secs_f64())
    };
    let (on, off) = (conv(&runs[0]), conv(&runs[1]));
    let secs = start.elapsed().as_secs_f64();
    let show = |v: Option<f64>| v.map_or("never".into(), |s| format!("{s:.1}s"));
    let pass = match (on, off) {
        (Some(a), Some(b)) => a <= tol::CONVERGENCE_MAX_S && b >= tol::CONVERGENCE_RATIO_MIN * a,
        (Some(a), None) => a <= tol::CONVERGENCE_MAX_S,
        _ => false,
    } && secs < tol::CONVERGENCE_RUNTIME_S;
    Verdict {
        id: 2,
        name: "dummy-traffic convergence",
        pass,
        detail: format!(
            "with dummies {} (<= {}s), without {} (ratio >= {}), {secs:.1}s",
            show(on),
            tol::CONVERGENCE_MAX_S,
            show(off),
            tol::CONVERGENCE_RATIO_MIN
        ),
    }
}

fn safeguard_bound() -> Verdict {
    let mut cfg = base(TRACE_MS as f64 / 1e3);
    cfg.controller.tau_ms = tol::SAFEGUARD_TAU_MS;
    let jobs = suite()
        .iter()
        .map(|(_, l)| (cfg.clone(), l.clone()))
        .collect();
    let runs = par_runs(jobs);
    let violations: usize = runs
        .iter()
        .map(|r| {
            r.frames
                .iter()
                .filter(|f| !f.skipped && f.pacer_head_age_ms > tol::SAFEGUARD_TAU_MS)
                .count()
        })
        .sum();
    let pauses: u64 = runs.iter().map(|r| r.pauses).sum();
    let frames: usize = runs.iter().map(|r| r.frames.len()).sum();
    Verdict {
        id: 3,
        name: "safeguard bound",
        pass: violations == 0,
        detail: format!(
            "{violations} violations over {frames} ticks on {} traces ({pauses} pauses)",
            runs.len()
        ),
    }
}

fn after_warmup(r: &RunResult, from_s: f64, to_s: f64) -> Vec<f64> {
    r.alpha
        .iter()
        .filter(|a| {
            let t = a.time.as_secs_f64();
            t >= from_s && t < to_s && a.samples > 0
        })
        .map(|a| a.alpha)
        .collect()
}

/// Constant 1.5 Mbps trace with Poisson opportunity counts inside `noise`.
fn noisy_trace(len_ms: u64, noise: std::ops::Range<u64>, seed: u64) -> Trace {
    let per_ms = 1.5e6 / (MTU as f64 * 8.0) / 1e3;
    let poisson = Poisson::new(per_ms).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stamps = Vec::new();
    let mut credit = 0.0;
    for ms in 0..len_ms {
        if noise.contains(&ms) {
            let n = poisson.sample(&mut rng) as usize;
            stamps.extend(std::iter::repeat_n(ms, n));
        } else {
            credit += per_ms;
            while credit >= 1.0 {
                stamps.push(ms);
                credit -= 1.0;
            }
        }
    }
    stamps.push(len_ms);
    Trace::from_timestamps(&stamps).unwrap()
}

fn alpha_adaptation() -> Verdict {
    let start = Instant::now();
    let duration = 120.0;
    let fixed = Arc::new(LinkModel::constant(1.5e6, duration * 1e3));
    let mut steady = base(duration);
    steady.encoder = EncoderConfig::with_preset(EncoderPreset::Steady);
    let mut high = base(duration);
    high.encoder = EncoderConfig::with_preset(EncoderPreset::HighMotion);
    let noise = 40_000..50_000;
    let noisy = Arc::new(LinkModel::trace(noisy_trace(90_000, noise.clone(), 5)));
    let runs = par_runs(vec![
        (steady, fixed.clone()),
        (high, fixed),
        (base(90.0), noisy),
    ]);
    let a_steady = mean(after_warmup(&runs[0], tol::WARMUP_S, duration));
    let a_high = mean(after_warmup(&runs[1], tol::WARMUP_S, duration));
    let service: Vec<f64> = runs[0]
        .service_samples
        .iter()
        .filter(|s| s.completion_time.as_secs_f64() >= tol::WARMUP_S)
        .map(|s| s.service_ms)
        .collect();
    let p90 = oracle_percentile(&service, 0.9);
    let (ns, ne) = (noise.start as f64 / 1e3, noise.end as f64 / 1e3);
    let in_noise = after_warmup(&runs[2], ns, ne);
    let min_noise = in_noise.iter().copied().fold(f64::INFINITY, f64::min);
    let mut outside = after_warmup(&runs[2], tol::WARMUP_S, ns);
    outside.extend(after_warmup(&runs[2], ne, 90.0));
    let mean_outside = mean(outside);
    let secs = start.elapsed().as_secs_f64();
    let steady_ok = a_steady >= tol::ALPHA_STEADY_MIN && p90 <= tol::SERVICE_P90_MAX_MS;
    let gap_ok = a_steady - a_high >= tol::ALPHA_GAP_MIN;
    let noise_ok = min_noise < mean_outside;
    Verdict {
        id: 4,
        name: "alpha adaptation",
        pass: steady_ok && gap_ok && noise_ok && secs < tol::ALPHA_RUNTIME_S,
        detail: format!(
            "steady mean alpha {a_steady:.3} (>= {}) with P90 service {p90:.1}ms (<= {}) [{}]; \
             high-motion {a_high:.3}, gap {:.3} (>= {}) [{}]; noisy min {min_noise:.3} vs \
             outside mean {mean_outside:.3} [{}]; {secs:.1}s",
            tol::ALPHA_STEADY_MIN,
            tol::SERVICE_P90_MAX_MS,
            ok(steady_ok),
            a_steady - a_high,
            tol::ALPHA_GAP_MIN,
            ok(gap_ok),
            ok(noise_ok),
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn ideal_time_monotonicity() -> Verdict {
    let start = Instant::now();
    let grid = [0.5, 0.75, 0.9, 1.0];
    let delta = 1000.0 / 30.0;
    let mut non_monotone = Vec::new();
    for (name, link) in suite() {
        let a = ideal_transmission_analysis::<f64>(link, &grid, delta, None).unwrap();
        if a.p95_of_t.windows(2).any(|w| w[1] < w[0]) {
            non_monotone.push(*name);
        }
    }
    let mut worst = 0.0f64;
    for rate in [0.5e6, 1.5e6, 5e6, 12e6] {
        let link = LinkModel::constant(rate, 20_000.0);
        let a = ideal_transmission_analysis::<f64>(&link, &grid, delta, None).unwrap();
        for (samples, alpha) in a.t_samples.iter().zip(grid) {
            for t in samples {
                worst = worst.max((t - alpha * delta).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 5,
        name: "ideal transmission time monotonicity",
        pass: non_monotone.is_empty()
            && worst <= tol::EQ3_CONSTANT_ABS_MS
            && secs < tol::EQ3_RUNTIME_S,
        detail: format!(
            "non-monotone traces {non_monotone:?} of {}; constant-link max |T - alpha*delta| \
             {worst:.1e}ms (<= {:.0e}); {secs:.2}s",
            suite().len(),
            tol::EQ3_CONSTANT_ABS_MS
        ),
    }
}

fn wire_equivalence() -> Verdict {
    let link = Arc::new(LinkModel::constant(3e6, 60_000.0));
    let mut video = base(60.0);
    video.dummy.always_eligible = true;
    let mut backlog = base(60.0);
    backlog.backlogged_source = true;
    let runs = par_runs(vec![(video, link.clone()), (backlog, link)]);
    let rms = relative_rms(&runs[0].sent_bins, &runs[1].sent_bins);
    let rms_delivered = relative_rms(&runs[0].delivered_bins, &runs[1].delivered_bins);
    let moments = |b: &[u64]| {
        let m = mean(b.iter().map(|&x| x as f64));
        (m, mean(b.iter().map(|&x| (x as f64 - m).powi(2))).sqrt())
    };
    let (mv, sv) = moments(&runs[0].sent_bins);
    let (mb, sb) = moments(&runs[1].sent_bins);
    Verdict {
        id: 6,
        name: "wire equivalence",
        pass: rms <= tol::WIRE_RMS_MAX,
        detail: format!(
            "sent-bytes RMS {:.2}% (<= {:.0}%), delivered-bytes RMS {:.2}%; per-bin mean \
             ratio {:.4}, std ratio {:.3}",
            rms * 100.0,
            tol::WIRE_RMS_MAX * 100.0,
            rms_delivered * 100.0,
            mv / mb,
            sv / sb
        ),
    }
}

/// Runs every sweep trace once per config and returns the per-config means
/// of (video bitrate, P95 latency, utilization, frame rate).
fn sweep(configs: Vec<SimConfig>) -> Vec<[f64; 4]> {
    let links: Vec<_> = SWEEP_TRACES.iter().map(|&i| suite()[i].1.clone()).collect();
    let jobs = configs
        .iter()
        .flat_map(|c| links.iter().map(move |l| (c.clone(), l.clone())))
        .collect();
    let summaries: Vec<RunSummary> = par_runs(jobs)
        .iter()
        .map(|r| summarize(r).unwrap())
        .collect();
    summaries
        .chunks(links.len())
        .map(|c| {
            [
                mean(c.iter().map(|s| s.video_bitrate_bps)),
                mean(c.iter().map(|s| s.latency_ms.p95)),
                mean(c.iter().map(|s| s.utilization)),
                mean(c.iter().map(|s| s.frame_rate)),
            ]
        })
        .collect()
}

fn tradeoff_direction() -> Verdict {
    let ps = [20.0, 33.0, 66.0];
    let configs = ps
        .iter()
        .map(|&p| {
            let mut c = base(TRACE_MS as f64 / 1e3);
            c.controller.p_ms = p;
            c
        })
        .collect();
    let m = sweep(configs);
    let bitrate_up = m.windows(2).all(|w| w[1][0] >= w[0][0]);
    let latency_up = m.windows(2).all(|w| w[1][1] >= w[0][1]);
    let utils: Vec<f64> = m.iter().map(|r| r[2]).collect();
    let umax = utils.iter().copied().fold(f64::MIN, f64::max);
    let umin = utils.iter().copied().fold(f64::MAX, f64::min);
    let spread = (umax - umin) / umax;
    let fmt = |i: usize, scale: f64| {
        m.iter()
            .map(|r| format!("{:.2}", r[i] * scale))
            .collect::<Vec<_>>()
            .join("/")
    };
    Verdict {
        id: 7,
        name: "P tradeoff direction",
        pass: bitrate_up && latency_up && spread < tol::UTILIZATION_SPREAD_MAX,
        detail: format!(
            "P=20/33/66ms: bitrate {} Mbps [{}], P95 latency {} ms [{}], utilization {} \
             spread {:.1}% (< {:.0}%)",
            fmt(0, 1e-6),
            ok(bitrate_up),
            fmt(1, 1.0),
            ok(latency_up),
            fmt(2, 1.0),
            spread * 100.0,
            tol::UTILIZATION_SPREAD_MAX * 100.0
        ),
    }
}

fn sensitivity_directions() -> Verdict {
    let with = |f: &dyn Fn(&mut ControllerConfig)| {
        let mut c = base(TRACE_MS as f64 / 1e3);
        f(&mut c.controller);
        c
    };
    let m = sweep(vec![
        with(&|c| c.lambda = 0.5),
        with(&|c| c.lambda = 0.9),
        with(&|c| c.tau_ms = 33.0),
        with(&|c| c.tau_ms = 330.0),
    ]);
    let (l5, l9, t33, t330) = (m[0], m[1], m[2], m[3]);
    let lambda_ok = l9[0] < l5[0] && l9[1] < l5[1];
    let change = (t330[0] - t33[0]).abs() / t33[0];
    let tau_ok = t330[3] > t33[3] && t330[1] > t33[1] && change < tol::TAU_BITRATE_CHANGE_MAX;
    Verdict {
        id: 8,
        name: "lambda/tau sensitivity",
        pass: lambda_ok && tau_ok,
        detail: format!(
            "lambda 0.5->0.9: bitrate {:.2}->{:.2} Mbps, P95 {:.0}->{:.0} ms [{}]; tau 33->330: \
             frame rate {:.2}->{:.2}, P95 {:.0}->{:.0} ms, bitrate change {:.1}% (< {:.0}%) [{}]",
            l5[0] / 1e6,
            l9[0] / 1e6,
            l5[1],
            l9[1],
            ok(lambda_ok),
            t33[3],
            t330[3],
            t33[1],
            t330[1],
            change * 100.0,
            tol::TAU_BITRATE_CHANGE_MAX * 100.0,
            ok(tau_ok)
        ),
    }
}

#[test]
fn acceptance() {
    let verdicts = [
        percentile_exactness(),
        dummy_convergence(),
        safeguard_bound(),
        alpha_adaptation(),
        ideal_time_monotonicity(),
        wire_equivalence(),
        tradeoff_direction(),
        sensitivity_directions(),
    ];
    for v in &verdicts {
        println!(
            "[{}] criterion {}: {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.name,
            v.detail
        );
    }
    for v in &verdicts {
        let expected = !KNOWN_FAILING.contains(&v.id);
        assert_eq!(
            v.pass,
            expected,
            "criterion {} ({}) {}",
            v.id,
            v.name,
            if expected {
                "regressed"
            } else {
                "now passes; update KNOWN_FAILING"
            }
        );
    }
}
