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

//! Bottleneck link emulation.
//!
//! A [`LinkModel`] describes when the bottleneck may deliver bytes. The
//! [`Link`] runtime holds a tail-drop FIFO in front of that schedule and
//! releases packets byte by byte at each delivery opportunity, the way a
//! Mahimahi link shell does: every opportunity carries `mtu` bytes, a
//! packet leaves once all of its bytes have been served, and bytes of an
//! opportunity that finds the queue empty are lost.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub const DEFAULT_MTU: u32 = 1500;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("reading trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace is empty")]
    Empty,
    #[error("invalid link parameters: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    #[serde(alias = "trace")]
    TraceDriven,
    #[serde(alias = "piecewise")]
    PiecewiseConstant,
    #[serde(alias = "poisson")]
    PoissonRate,
}

/// One constant-rate stretch of a piecewise link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub duration_ms: f64,
    pub rate_bps: f64,
}

impl RateSegment {
    pub fn new(duration_ms: f64, rate_bps: f64) -> Self {
        Self {
            duration_ms,
            rate_bps,
        }
    }
}

/// Delivery opportunities from a trace, grouped by millisecond.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// `(timestamp_ms, opportunities)` with strictly increasing timestamps.
    slots: Vec<(u64, u32)>,
    lines: usize,
}

impl Trace {
    /// Builds a trace from raw per-line timestamps, which must be
    /// non-decreasing.
    pub fn from_timestamps(timestamps: &[u64]) -> Result<Self, LinkError> {
        if timestamps.is_empty() {
            return Err(LinkError::Empty);
        }
        let mut slots: Vec<(u64, u32)> = Vec::new();
        for (i, &ts) in timestamps.iter().enumerate() {
            match slots.last_mut() {
                Some((last, count)) if *last == ts => *count += 1,
                Some((last, _)) if *last > ts => {
                    return Err(LinkError::Parse {
                        line: i + 1,
                        reason: format!("timestamp {ts} is earlier than {last}"),
                    })
                }
                _ => slots.push((ts, 1)),
            }
        }
        Ok(Self {
            slots,
            lines: timestamps.len(),
        })
    }

    /// Parses the Mahimahi format: one integer millisecond per line.
    /// Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, LinkError> {
        let mut stamps = Vec::new();
        let mut last: Option<u64> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let ts: u64 = line.parse().map_err(|_| LinkError::Parse {
                line: i + 1,
                reason: format!("expected an integer millisecond timestamp, got {line:?}"),
            })?;
            if let Some(prev) = last {
                if ts < prev {
                    return Err(LinkError::Parse {
                        line: i + 1,
                        reason: format!("timestamp {ts} is earlier than {prev}"),
                    });
                }
            }
            last = Some(ts);
            stamps.push(ts);
        }
        Self::from_timestamps(&stamps)
    }

    pub fn slots(&self) -> &[(u64, u32)] {
        &self.slots
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Loop period: the trace repeats every `last timestamp` milliseconds,
    /// at least one.
    pub fn period_ms(&self) -> u64 {
        self.slots.last().map(|&(t, _)| t).unwrap_or(0).max(1)
    }

    /// Mean capacity of one pass of the trace in bits per second.
    pub fn mean_rate_bps(&self, mtu: u32) -> f64 {
        self.lines as f64 * mtu as f64 * 8.0 / (self.period_ms() as f64 / 1e3)
    }

    /// Renders the trace back to the Mahimahi text format.
    pub fn to_mahimahi(&self) -> String {
        let mut out = String::with_capacity(self.lines * 7);
        for &(t, n) in &self.slots {
            for _ in 0..n {
                out.push_str(&t.to_string());
                out.push('\n');
            }
        }
        out
    }
}

/// Delivery schedule of the bottleneck.
#[derive(Clone, Debug, PartialEq)]
pub enum LinkShape {
    TraceDriven(Trace),
    PiecewiseConstant(Vec<RateSegment>),
    PoissonRate { mean_rate_bps: f64 },
}

/// Immutable description of a bottleneck link. Cheap to share between
/// runs via [`Arc`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinkModel {
    pub shape: LinkShape,
    pub owd: Duration,
    /// `None` means unbounded.
    pub buffer_bytes: Option<u64>,
    pub mtu: u32,
    pub loss_prob: f64,
}

impl LinkModel {
    pub fn trace(trace: Trace) -> Self {
        Self::with_shape(LinkShape::TraceDriven(trace))
    }

    pub fn piecewise(segments: Vec<RateSegment>) -> Self {
        Self::with_shape(LinkShape::PiecewiseConstant(segments))
    }

    pub fn constant(rate_bps: f64, duration_ms: f64) -> Self {
        Self::piecewise(vec![RateSegment::new(duration_ms, rate_bps)])
    }

    pub fn poisson(mean_rate_bps: f64, loss_prob: f64) -> Self {
        let mut m = Self::with_shape(LinkShape::PoissonRate { mean_rate_bps });
        m.loss_prob = loss_prob;
        m
    }

    fn with_shape(shape: LinkShape) -> Self {
        Self {
            shape,
            owd: Duration::from_millis(25),
            buffer_bytes: None,
            mtu: DEFAULT_MTU,
            loss_prob: 0.0,
        }
    }

    pub fn with_owd(mut self, owd: Duration) -> Self {
        self.owd = owd;
        self
    }

    pub fn with_buffer(mut self, bytes: Option<u64>) -> Self {
        self.buffer_bytes = bytes;
        self
    }

    pub fn with_mtu(mut self, mtu: u32) -> Self {
        self.mtu = mtu;
        self
    }

    pub fn with_loss(mut self, p: f64) -> Self {
        self.loss_prob = p;
        self
    }

    pub fn kind(&self) -> LinkKind {
        match self.shape {
            LinkShape::TraceDriven(_) => LinkKind::TraceDriven,
            LinkShape::PiecewiseConstant(_) => LinkKind::PiecewiseConstant,
            LinkShape::PoissonRate { .. } => LinkKind::PoissonRate,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self.mtu == 0 {
            return Err(LinkError::Invalid("mtu must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(LinkError::Invalid(format!(
                "loss_prob {} outside [0, 1]",
                self.loss_prob
            )));
        }
        match &self.shape {
            LinkShape::TraceDriven(t) if t.slots.is_empty() => Err(LinkError::Empty),
            LinkShape::PiecewiseConstant(segs) => {
                if segs.is_empty() {
                    return Err(LinkError::Invalid("no rate segments".into()));
                }
                if segs.iter().any(|s| {
                    !(s.duration_ms > 0.0) || !(s.rate_bps >= 0.0) || !s.rate_bps.is_finite()
                }) {
                    return Err(LinkError::Invalid(
                        "segments need positive duration and finite non-negative rate".into(),
                    ));
                }
                if segs.iter().all(|s| s.rate_bps == 0.0) {
                    return Err(LinkError::Invalid("all segments have zero rate".into()));
                }
                Ok(())
            }
            LinkShape::PoissonRate { mean_rate_bps } if !(*mean_rate_bps > 0.0) => Err(
                LinkError::Invalid(format!("mean_rate_bps {mean_rate_bps} must be positive")),
            ),
            _ => Ok(()),
        }
    }

    /// Delivery capacity in bytes over `[from, to)`. For Poisson links this is
    /// the expected value.
    pub fn capacity_bytes(&self, from: SimTime, to: SimTime) -> f64 {
        if to <= from {
            return 0.0;
        }
        match &self.shape {
            LinkShape::PoissonRate { mean_rate_bps } => {
                mean_rate_bps / 8.0 * (to - from).as_secs_f64()
            }
            _ => {
                let mut cursor = ScheduleCursor::new(self);
                cursor.seek(self, from);
                let mut total = 0u64;
                while let Some((t, bytes)) = cursor.peek(self) {
                    if t >= to {
                        break;
                    }
                    total += bytes;
                    cursor.advance(self);
                }
                total as f64
            }
        }
    }
}

/// Reads a Mahimahi trace file into a trace-driven link with default
/// parameters.
pub fn load_trace(path: impl AsRef<Path>) -> Result<LinkModel, LinkError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LinkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(LinkModel::trace(Trace::parse(&text)?))
}

/// Position in a deterministic (trace or piecewise) delivery schedule.
#[derive(Clone, Debug)]
struct ScheduleCursor {
    pass: u64,
    index: usize,
    // piecewise only: opportunity number inside the current segment
    step: u64,
    // piecewise only: segment start offsets and total length, in ms
    starts: Vec<f64>,
    total_ms: f64,
}

impl ScheduleCursor {
    fn new(model: &LinkModel) -> Self {
        let mut starts = Vec::new();
        let mut total_ms = 0.0;
        if let LinkShape::PiecewiseConstant(segs) = &model.shape {
            for s in segs {
                starts.push(total_ms);
                total_ms += s.duration_ms;
            }
        }
        Self {
            pass: 0,
            index: 0,
            step: 0,
            starts,
            total_ms,
        }
    }

    /// Next opportunity at or after the cursor: `(time, bytes)`.
    fn peek(&mut self, model: &LinkModel) -> Option<(SimTime, u64)> {
        let mtu = model.mtu as u64;
        match &model.shape {
            LinkShape::TraceDriven(trace) => {
                let period = trace.period_ms();
                let (ts, n) = trace.slots[self.index];
                Some((
                    SimTime::from_millis(self.pass * period + ts),
                    n as u64 * mtu,
                ))
            }
            LinkShape::PiecewiseConstant(segs) => {
                let total_ms = self.total_ms;
                // Skip over exhausted or zero-rate segments. Bounded by two
                // passes since at least one segment has positive rate.
                for _ in 0..(2 * segs.len() + 1) {
                    let seg = segs[self.index];
                    let start_ms = self.starts[self.index];
                    if seg.rate_bps > 0.0 {
                        let gap_ms = mtu as f64 * 8.0 / seg.rate_bps * 1e3;
                        let offset = self.step as f64 * gap_ms;
                        if offset < seg.duration_ms {
                            let t = self.pass as f64 * total_ms + start_ms + offset;
                            return Some((SimTime::from_millis_f64(t), mtu));
                        }
                    }
                    self.step = 0;
                    self.index += 1;
                    if self.index == segs.len() {
                        self.index = 0;
                        self.pass += 1;
                    }
                }
                None
            }
            LinkShape::PoissonRate { .. } => None,
        }
    }

    fn advance(&mut self, model: &LinkModel) {
        match &model.shape {
            LinkShape::TraceDriven(trace) => {
                self.index += 1;
                if self.index == trace.slots.len() {
                    self.index = 0;
                    self.pass += 1;
                }
            }
            LinkShape::PiecewiseConstant(_) => self.step += 1,
            LinkShape::PoissonRate { .. } => {}
        }
    }

    /// Moves to the first opportunity at or after `now`.
    fn seek(&mut self, model: &LinkModel, now: SimTime) {
        match &model.shape {
            LinkShape::TraceDriven(trace) => {
                let period_us = trace.period_ms() * 1_000;
                let pass = now.as_micros() / period_us;
                let within = now.as_micros() - pass * period_us;
                let idx = trace.slots.partition_point(|&(ts, _)| ts * 1_000 < within);
                if within == 0
                    && pass > 0
                    && trace.slots.last().map(|s| s.0) == Some(trace.period_ms())
                {
                    // the last slot of the previous pass lands exactly here
                    self.pass = pass - 1;
                    self.index = trace.slots.len() - 1;
                } else if idx == trace.slots.len() {
                    self.pass = pass + 1;
                    self.index = 0;
                } else {
                    self.pass = pass;
                    self.index = idx;
                }
            }
            LinkShape::PiecewiseConstant(segs) => {
                let total_ms = self.total_ms;
                let now_ms = now.as_millis_f64();
                let pass = (now_ms / total_ms).floor();
                let mut within = now_ms - pass * total_ms;
                self.pass = pass as u64;
                self.index = 0;
                self.step = 0;
                for (i, seg) in segs.iter().enumerate() {
                    if within < seg.duration_ms || i + 1 == segs.len() {
                        self.index = i;
                        if seg.rate_bps > 0.0 {
                            let gap_ms = model.mtu as f64 * 8.0 / seg.rate_bps * 1e3;
                            self.step = (within / gap_ms).ceil().max(0.0) as u64;
                        }
                        break;
                    }
                    within -= seg.duration_ms;
                }
                // rounding can leave us one step early
                while let Some((t, _)) = self.peek(model) {
                    if t >= now {
                        break;
                    }
                    self.advance(model);
                }
            }
            LinkShape::PoissonRate { .. } => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Video,
    Dummy,
}

/// A packet waiting in the bottleneck queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueuedPacket {
    pub packet_id: u64,
    pub size: u32,
    pub enqueue_time: SimTime,
    pub kind: PacketKind,
}

/// A packet leaving the bottleneck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub packet_id: u64,
    pub kind: PacketKind,
    pub size: u32,
    /// Time the last byte left the bottleneck.
    pub departed: SimTime,
    /// `departed + owd`.
    pub arrival: SimTime,
    /// Dropped by random loss at delivery.
    pub lost: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub enqueued: u64,
    pub tail_dropped: u64,
    pub delivered: u64,
    pub random_lost: u64,
    pub delivered_bytes: u64,
}

/// Mutable queue state in front of a [`LinkModel`]. One per simulation.
#[derive(Debug)]
pub struct Link {
    model: Arc<LinkModel>,
    queue: VecDeque<QueuedPacket>,
    queued_bytes: u64,
    // bytes of the head packet still to be served
    head_remaining: u64,
    cursor: ScheduleCursor,
    next_opportunity: Option<(SimTime, u64)>,
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    pending: VecDeque<Delivery>,
    counters: LinkCounters,
}

impl Link {
    pub fn new(model: Arc<LinkModel>, seed: u64) -> Self {
        let gap = match model.shape {
            LinkShape::PoissonRate { mean_rate_bps } => {
                // events per microsecond
                let rate = mean_rate_bps / (model.mtu as f64 * 8.0) / 1e6;
                Exp::new(rate).ok()
            }
            _ => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x11);
        Self {
            cursor: ScheduleCursor::new(&model),
            model,
            queue: VecDeque::new(),
            queued_bytes: 0,
            head_remaining: 0,
            next_opportunity: None,
            rng,
            gap,
            pending: VecDeque::new(),
            counters: LinkCounters::default(),
        }
    }

    pub fn model(&self) -> &LinkModel {
        &self.model
    }

    pub fn counters(&self) -> LinkCounters {
        self.counters
    }

    pub fn queued_bytes(&self) -> u64 {
        self.queued_bytes
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Appends a packet, or tail-drops it when the buffer would overflow.
    pub fn enqueue(&mut self, packet: QueuedPacket, now: SimTime) -> bool {
        if let Some(cap) = self.model.buffer_bytes {
            if self.queued_bytes + packet.size as u64 > cap {
                self.counters.tail_dropped += 1;
                return false;
            }
        }
        if self.queue.is_empty() {
            self.head_remaining = packet.size as u64;
            self.schedule_from(now);
        }
        self.queued_bytes += packet.size as u64;
        self.queue.push_back(packet);
        self.counters.enqueued += 1;
        true
    }

    fn schedule_from(&mut self, now: SimTime) {
        match self.model.shape {
            LinkShape::PoissonRate { .. } => {
                let gap_us = self
                    .gap
                    .as_ref()
                    .map(|g| g.sample(&mut self.rng))
                    .unwrap_or(f64::INFINITY);
                let t = now + Duration::from_micros(gap_us.round().min(1e15) as u64);
                self.next_opportunity = Some((t, self.model.mtu as u64));
            }
            _ => {
                // Opportunities that passed while the queue was empty are
                // forfeited: jump straight to the first one at or after `now`.
                let already = matches!(self.next_opportunity, Some((t, _)) if t >= now);
                if !already {
                    self.cursor.seek(&self.model, now);
                    self.next_opportunity = self.cursor.peek(&self.model);
                }
            }
        }
    }

    /// Time of the next opportunity that will serve queued bytes.
    pub fn next_opportunity(&self) -> Option<SimTime> {
        if self.queue.is_empty() {
            None
        } else {
            self.next_opportunity.map(|(t, _)| t)
        }
    }

    /// Serves the pending opportunity and returns the packets it completed.
    /// Does nothing if the queue is empty.
    pub fn serve_opportunity(&mut self) -> Vec<Delivery> {
        let mut out = Vec::new();
        let Some((t, mut budget)) = self.next_opportunity else {
            return out;
        };
        if self.queue.is_empty() {
            return out;
        }
        while budget > 0 {
            let Some(head) = self.queue.front().copied() else {
                break;
            };
            if self.head_remaining > budget {
                self.head_remaining -= budget;
                break;
            }
            budget -= self.head_remaining;
            self.queue.pop_front();
            self.queued_bytes -= head.size as u64;
            self.head_remaining = self.queue.front().map(|p| p.size as u64).unwrap_or(0);
            let lost =
                self.model.loss_prob > 0.0 && self.rng.random::<f64>() < self.model.loss_prob;
            if lost {
                self.counters.random_lost += 1;
            } else {
                self.counters.delivered += 1;
                self.counters.delivered_bytes += head.size as u64;
            }
            out.push(Delivery {
                packet_id: head.packet_id,
                kind: head.kind,
                size: head.size,
                departed: t,
                arrival: t + self.model.owd,
                lost,
            });
        }
        // move on to the following opportunity
        match self.model.shape {
            LinkShape::PoissonRate { .. } => {
                self.next_opportunity = None;
                if !self.queue.is_empty() {
                    self.schedule_from(t);
                }
            }
            _ => {
                self.cursor.advance(&self.model);
                self.next_opportunity = self.cursor.peek(&self.model);
            }
        }
        out
    }

    /// Earliest upcoming delivery, serving as many opportunities as needed.
    /// Returns `None` once the queue is drained.
    pub fn next_delivery(&mut self) -> Option<Delivery> {
        loop {
            if let Some(d) = self.pending.pop_front() {
                return Some(d);
            }
            if self.queue.is_empty() {
                return None;
            }
            let served = self.serve_opportunity();
            self.pending.extend(served);
        }
    }
}
