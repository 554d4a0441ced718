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

//! Post-run summaries and the ideal-transmission-time analysis.
//!
//! # Ideal transmission time
//!
//! For a frame produced at `t` and sized for a fraction `α` of the link
//! rate `C(t)`, the ideal transmission time `T(α, t)` is the smallest `T`
//! such that the link can carry the frame within `[t, t + T)`:
//!
//! ```text
//! ∫_t^{t+T} C(τ) dτ = α · C(t) · Δ
//! ```
//!
//! The link is treated as a fluid: each trace opportunity spreads its bytes
//! evenly over its millisecond, and a piecewise-constant link delivers at
//! its segment rate. `C(t)` is the average capacity over `[t, t + Δ)` for
//! trace links and the segment rate at `t` for piecewise links.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::engine::RunResult;
use crate::link::{LinkModel, LinkShape, PacketKind};
use crate::scalar::Scalar;
use crate::stats::{mean, percentile_sorted, sort_floats};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("run produced no records")]
    Empty,
    #[error("ideal-transmission analysis needs a trace-driven or piecewise-constant link")]
    UnsupportedLink,
    #[error("alpha {0} outside (0, 1]")]
    BadAlpha(f64),
    #[error("link has no capacity")]
    NoCapacity,
}

/// Percentiles of a distribution, all computed with the controller's
/// estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub mean: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        sort_floats(&mut v);
        let p = |q: f64| percentile_sorted(&v, q);
        Some(Self {
            p5: p(0.05)?,
            p25: p(0.25)?,
            p50: p(0.5)?,
            p75: p(0.75)?,
            p90: p(0.9)?,
            p95: p(0.95)?,
            mean: mean(&v)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub duration_s: f64,
    pub utilization: f64,
    pub video_bitrate_bps: f64,
    /// Over 1 s bins of delivered video.
    pub video_bitrate: Percentiles,
    pub padding_ratio: f64,
    pub frame_rate: f64,
    pub latency_ms: Percentiles,
    pub service_time_ms: Percentiles,
    pub alpha_mean: f64,
    pub alpha_min: f64,
    pub frames: usize,
    pub frames_displayed: usize,
    pub frames_skipped: usize,
    pub frames_lost: usize,
    pub pauses: u64,
    pub packets_lost: u64,
    pub delivered_bytes: u64,
    pub video_bytes: u64,
    pub dummy_bytes: u64,
}

/// Summarizes a completed run over its configured duration.
pub fn summarize(run: &RunResult) -> Result<RunSummary, MetricsError> {
    if run.frames.is_empty() && run.packets.is_empty() {
        return Err(MetricsError::Empty);
    }
    let end = run.end_time;
    let end_ms = end.as_millis_f64();
    let duration_s = end.as_secs_f64();
    let mut video_bytes = 0u64;
    let mut dummy_bytes = 0u64;
    let nbins = duration_s.ceil().max(1.0) as usize;
    let mut video_bins = vec![0u64; nbins];
    for p in &run.packets {
        let Some(a) = p.arrival_ms else { continue };
        if a >= end_ms {
            continue;
        }
        match p.kind {
            PacketKind::Video => {
                video_bytes += p.size as u64;
                video_bins[((a / 1000.0) as usize).min(nbins - 1)] += p.size as u64;
            }
            PacketKind::Dummy => dummy_bytes += p.size as u64,
        }
    }
    let delivered_bytes = video_bytes + dummy_bytes;
    let capacity = run.link.capacity_bytes(SimTime::ZERO, end);
    let utilization = if capacity > 0.0 {
        delivered_bytes as f64 / capacity
    } else {
        0.0
    };
    let padding_ratio = if delivered_bytes > 0 {
        dummy_bytes as f64 / delivered_bytes as f64
    } else {
        0.0
    };
    let bin_rates: Vec<f64> = video_bins.iter().map(|&b| b as f64 * 8.0).collect();
    let latencies: Vec<f64> = run.frames.iter().filter_map(|f| f.latency_ms).collect();
    let service: Vec<f64> = run.service_samples.iter().map(|s| s.service_ms).collect();
    let alphas: Vec<f64> = run.alpha.iter().map(|a| a.alpha).collect();
    let displayed = run
        .frames
        .iter()
        .filter(|f| f.display_time_ms.is_some_and(|d| d < end_ms))
        .count();
    Ok(RunSummary {
        duration_s,
        utilization,
        video_bitrate_bps: video_bytes as f64 * 8.0 / duration_s,
        video_bitrate: Percentiles::of(&bin_rates).unwrap_or_default(),
        padding_ratio,
        frame_rate: displayed as f64 / duration_s,
        latency_ms: Percentiles::of(&latencies).unwrap_or_default(),
        service_time_ms: Percentiles::of(&service).unwrap_or_default(),
        alpha_mean: mean(&alphas).unwrap_or(1.0),
        alpha_min: alphas
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(1.0),
        frames: run.frames.len(),
        frames_displayed: displayed,
        frames_skipped: run.frames.iter().filter(|f| f.skipped).count(),
        frames_lost: run.frames.iter().filter(|f| f.lost).count(),
        pauses: run.pauses,
        packets_lost: run.cca.losses,
        delivered_bytes,
        video_bytes,
        dummy_bytes,
    })
}

/// Delivered video bitrate over the trailing `window`, sampled every `step`
/// from `from` to `to`: `(time, bps)` pairs.
pub fn video_rate_series(
    run: &RunResult,
    from: SimTime,
    to: SimTime,
    window: Duration,
    step: Duration,
) -> Vec<(SimTime, f64)> {
    let mut arrivals: Vec<(f64, u64)> = run
        .packets
        .iter()
        .filter(|p| p.kind == PacketKind::Video)
        .filter_map(|p| p.arrival_ms.map(|a| (a, p.size as u64)))
        .collect();
    arrivals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    let w_ms = window.as_secs_f64() * 1e3;
    let mut out = Vec::new();
    let mut t = from;
    let (mut lo, mut hi, mut sum) = (0usize, 0usize, 0u64);
    while t <= to {
        let t_ms = t.as_millis_f64();
        while hi < arrivals.len() && arrivals[hi].0 <= t_ms {
            sum += arrivals[hi].1;
            hi += 1;
        }
        while lo < hi && arrivals[lo].0 <= t_ms - w_ms {
            sum -= arrivals[lo].1;
            lo += 1;
        }
        out.push((t, sum as f64 * 8.0 / window.as_secs_f64()));
        t += step;
    }
    out
}

/// Time after `from` until the trailing-window video bitrate first reaches
/// `threshold_bps`, checked every 100 ms up to `to`. `None` if it never does.
pub fn convergence_time(
    run: &RunResult,
    from: SimTime,
    to: SimTime,
    threshold_bps: f64,
    window: Duration,
) -> Option<Duration> {
    video_rate_series(run, from, to, window, Duration::from_millis(100))
        .into_iter()
        .find(|&(_, r)| r >= threshold_bps)
        .map(|(t, _)| t - from)
}

/// Root-mean-square difference of two byte sequences relative to the mean
/// of the reference.
pub fn relative_rms(series: &[u64], reference: &[u64]) -> f64 {
    let n = series.len().min(reference.len());
    if n == 0 {
        return 0.0;
    }
    let mean_ref = reference[..n].iter().sum::<u64>() as f64 / n as f64;
    let mse = series[..n]
        .iter()
        .zip(&reference[..n])
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n as f64;
    mse.sqrt() / mean_ref
}

/// Periodic cumulative capacity of a link as a continuous piecewise-linear
/// function of time.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityCurve<S> {
    /// `(time_ms, cumulative_bytes)` over one period, starting at `(0, 0)`
    /// and ending at `(period_ms, per_period_bytes)`.
    points: Vec<(S, S)>,
    period_ms: S,
    per_period: S,
    piecewise_rates: Option<Vec<(S, S)>>,
}

impl<S: Scalar> CapacityCurve<S> {
    pub fn from_link(link: &LinkModel) -> Result<Self, MetricsError> {
        let mtu = S::lit(link.mtu as f64);
        match &link.shape {
            LinkShape::TraceDriven(trace) => {
                let period = trace.period_ms();
                let mut per_ms = std::collections::BTreeMap::<u64, u64>::new();
                for &(ts, n) in trace.slots() {
                    *per_ms.entry(ts % period).or_default() += n as u64;
                }
                let mut points = vec![(S::zero(), S::zero())];
                let mut cum = S::zero();
                for (&ts, &n) in &per_ms {
                    let t0 = S::lit(ts as f64);
                    if points.last().is_some_and(|p| p.0 < t0) {
                        points.push((t0, cum));
                    }
                    cum = cum + S::lit(n as f64) * mtu;
                    points.push((t0 + S::one(), cum));
                }
                let period_ms = S::lit(period as f64);
                if points.last().is_some_and(|p| p.0 < period_ms) {
                    points.push((period_ms, cum));
                }
                Self::finish(points, period_ms, cum, None)
            }
            LinkShape::PiecewiseConstant(segs) => {
                let mut points = vec![(S::zero(), S::zero())];
                let mut rates = Vec::new();
                let (mut t, mut cum) = (S::zero(), S::zero());
                for s in segs {
                    let d = S::lit(s.duration_ms);
                    let bytes_per_ms = S::lit(s.rate_bps / 8.0 / 1000.0);
                    rates.push((t, S::lit(s.rate_bps)));
                    t = t + d;
                    cum = cum + bytes_per_ms * d;
                    points.push((t, cum));
                }
                Self::finish(points, t, cum, Some(rates))
            }
            LinkShape::PoissonRate { .. } => Err(MetricsError::UnsupportedLink),
        }
    }

    fn finish(
        points: Vec<(S, S)>,
        period_ms: S,
        per_period: S,
        piecewise_rates: Option<Vec<(S, S)>>,
    ) -> Result<Self, MetricsError> {
        if !(per_period > S::zero()) {
            return Err(MetricsError::NoCapacity);
        }
        Ok(Self {
            points,
            period_ms,
            per_period,
            piecewise_rates,
        })
    }

    pub fn period_ms(&self) -> S {
        self.period_ms
    }

    /// Cumulative bytes delivered in `[0, t)`.
    pub fn cumulative(&self, t_ms: S) -> S {
        let passes = (t_ms / self.period_ms).floor();
        let within = t_ms - passes * self.period_ms;
        passes * self.per_period + self.within_period(within)
    }

    fn within_period(&self, t: S) -> S {
        let pts = &self.points;
        let i = pts.partition_point(|p| p.0 <= t);
        if i == 0 {
            return S::zero();
        }
        if i == pts.len() {
            return pts[pts.len() - 1].1;
        }
        let (t0, c0) = pts[i - 1];
        let (t1, c1) = pts[i];
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    /// Smallest `u` with `cumulative(u) >= bytes`.
    fn inverse(&self, bytes: S) -> S {
        let passes = (bytes / self.per_period).floor();
        let mut rem = bytes - passes * self.per_period;
        let mut base = passes * self.period_ms;
        if rem <= S::zero() {
            // land at the end of the previous pass's last rise
            if passes > S::zero() {
                base = base - self.period_ms;
                rem = self.per_period;
            } else {
                return S::zero();
            }
        }
        let pts = &self.points;
        let i = pts.partition_point(|p| p.1 < rem).min(pts.len() - 1);
        let (t0, c0) = pts[i.saturating_sub(1)];
        let (t1, c1) = pts[i];
        let t = if c1 > c0 {
            t0 + (t1 - t0) * (rem - c0) / (c1 - c0)
        } else {
            t1
        };
        base + t
    }

    /// Link rate estimate `C(t)` in bits per second.
    pub fn rate_estimate(&self, t_ms: S, delta_ms: S) -> S {
        match &self.piecewise_rates {
            Some(rates) => {
                let passes = (t_ms / self.period_ms).floor();
                let within = t_ms - passes * self.period_ms;
                let i = rates.partition_point(|r| r.0 <= within).max(1);
                rates[i - 1].1
            }
            None => {
                let bytes = self.cumulative(t_ms + delta_ms) - self.cumulative(t_ms);
                bytes * S::lit(8.0 * 1000.0) / delta_ms
            }
        }
    }

    /// `T(α, t)` in ms for a given rate estimate `c_bps`.
    pub fn transmission_time(&self, t_ms: S, alpha: S, c_bps: S, delta_ms: S) -> S {
        let frame_bytes = alpha * c_bps * delta_ms / S::lit(8.0 * 1000.0);
        let start = self.cumulative(t_ms);
        self.inverse(start + frame_bytes) - t_ms
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceAnalysis<S> {
    pub alpha_grid: Vec<S>,
    /// `T(α, t)` in ms for every frame instant with positive `C(t)`, one
    /// vector per grid entry.
    pub t_samples: Vec<Vec<S>>,
    pub p95_of_t: Vec<S>,
    pub frames: usize,
    pub zero_capacity_frames: usize,
}

/// Evaluates `T(α, t)` at every frame instant `t = kΔ` in `[0, horizon)`.
/// The horizon defaults to one period of the link.
pub fn ideal_transmission_analysis<S: Scalar>(
    link: &LinkModel,
    alpha_grid: &[S],
    delta_ms: S,
    horizon_ms: Option<S>,
) -> Result<TraceAnalysis<S>, MetricsError> {
    if let Some(bad) = alpha_grid
        .iter()
        .find(|a| !(**a > S::zero() && **a <= S::one()))
    {
        return Err(MetricsError::BadAlpha(bad.to_f64_lossy()));
    }
    let curve = CapacityCurve::<S>::from_link(link)?;
    let horizon = horizon_ms.unwrap_or(curve.period_ms());
    let mut t_samples = vec![Vec::new(); alpha_grid.len()];
    let (mut frames, mut zero) = (0usize, 0usize);
    let mut k = 0usize;
    loop {
        let t = S::from_count(k) * delta_ms;
        if t >= horizon {
            break;
        }
        k += 1;
        frames += 1;
        let c = curve.rate_estimate(t, delta_ms);
        if !(c > S::zero()) {
            zero += 1;
            continue;
        }
        for (samples, &alpha) in t_samples.iter_mut().zip(alpha_grid) {
            samples.push(curve.transmission_time(t, alpha, c, delta_ms));
        }
    }
    let p95_of_t = t_samples
        .iter()
        .map(|s| {
            let mut v = s.clone();
            sort_floats(&mut v);
            percentile_sorted(&v, S::lit(0.95)).unwrap_or(S::zero())
        })
        .collect();
    Ok(TraceAnalysis {
        alpha_grid: alpha_grid.to_vec(),
        t_samples,
        p95_of_t,
        frames,
        zero_capacity_frames: zero,
    })
}
