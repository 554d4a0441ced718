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

//! Sender-side pacer and dummy-packet generator.
//!
//! The pacer is a serializer running at the congestion controller's rate: a
//! packet that starts at `t` with rate `R` departs at `t + size*8/R`, and the
//! next packet cannot start before that. The packet in service stays at the
//! queue head, so the head age used by the encoder safeguard covers it.
//! In-flight bytes are reserved when serialization starts.
//!
//! When the queue is empty and the window has room, the pacer emits small
//! dummy packets so the congestion controller keeps seeing a backlogged
//! flow. Dummies are suppressed while video is queued, shortly before the
//! next camera frame, and once the video bitrate reaches a ceiling.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cca::CongestionController;
use crate::encoder::Frame;
use crate::link::PacketKind;
use crate::scalar::Scalar;
use crate::stats::SlidingSum;
use crate::time::{millis_f64, transmit_time, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacerConfig {
    pub mtu: u32,
}

impl Default for PacerConfig {
    fn default() -> Self {
        Self { mtu: 1500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DummyConfig {
    pub enabled: bool,
    pub max_size_bytes: u32,
    pub frame_eta_fraction: f64,
    pub max_video_bitrate_bps: f64,
    /// Lifts the frame-eta and bitrate-ceiling rules.
    pub always_eligible: bool,
}

impl Default for DummyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_size_bytes: 200,
            frame_eta_fraction: 0.25,
            max_video_bitrate_bps: 12e6,
            always_eligible: false,
        }
    }
}

impl DummyConfig {
    pub fn validate(&self, mtu: u32) -> Result<(), String> {
        if self.max_size_bytes == 0 || self.max_size_bytes > mtu {
            return Err("dummy.max_size_bytes must be in 1..=pacer.mtu".into());
        }
        if !(self.frame_eta_fraction > 0.0 && self.frame_eta_fraction < 1.0) {
            return Err("dummy.frame_eta_fraction must be in (0, 1)".into());
        }
        if !(self.max_video_bitrate_bps > 0.0) {
            return Err("dummy.max_video_bitrate_bps must be positive".into());
        }
        Ok(())
    }

    pub fn policy(&self) -> Option<DummyPolicy> {
        if !self.enabled {
            return None;
        }
        Some(if self.always_eligible {
            DummyPolicy {
                max_dummy_size: self.max_size_bytes,
                frame_eta_fraction: 0.0,
                max_video_bitrate: f64::INFINITY,
            }
        } else {
            DummyPolicy {
                max_dummy_size: self.max_size_bytes,
                frame_eta_fraction: self.frame_eta_fraction,
                max_video_bitrate: self.max_video_bitrate_bps,
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DummyPolicy {
    pub max_dummy_size: u32,
    pub frame_eta_fraction: f64,
    pub max_video_bitrate: f64,
}

impl Default for DummyPolicy {
    fn default() -> Self {
        DummyConfig::default().policy().expect("enabled by default")
    }
}

/// Why no dummy is sent right now.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DummyVerdict {
    Send,
    VideoQueued,
    FrameImminent,
    BitrateCeiling,
}

impl DummyPolicy {
    pub fn verdict(
        &self,
        pacer_empty: bool,
        next_frame_eta: Duration,
        delta: Duration,
        video_bitrate: f64,
    ) -> DummyVerdict {
        if !pacer_empty {
            DummyVerdict::VideoQueued
        } else if millis_f64(next_frame_eta) < self.frame_eta_fraction * millis_f64(delta) {
            DummyVerdict::FrameImminent
        } else if video_bitrate >= self.max_video_bitrate {
            DummyVerdict::BitrateCeiling
        } else {
            DummyVerdict::Send
        }
    }
}

/// Frame service time `d_i` paired with the target bitrate `tr_i` the frame
/// was encoded at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceTimeSample<S = f64> {
    pub frame_id: u64,
    pub service_ms: S,
    pub target_bps: S,
    pub completion_time: SimTime,
}

impl<S: Scalar> ServiceTimeSample<S> {
    /// Service time had the frame been encoded at `rate` instead of `tr_i`.
    pub fn counterfactual_ms(&self, rate: S) -> S {
        self.service_ms * rate / self.target_bps
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct QueuedVideo {
    frame_id: Option<u64>,
    size: u32,
    enqueue_time: SimTime,
    first: bool,
    last: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct FrameMeta {
    frame_id: u64,
    target_bps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct InService {
    packet_id: u64,
    kind: PacketKind,
    size: u32,
    started: SimTime,
    departs: SimTime,
}

/// A packet leaving the pacer for the link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutgoingPacket {
    pub packet_id: u64,
    pub kind: PacketKind,
    pub size: u32,
    pub frame_id: Option<u64>,
    pub last_of_frame: bool,
    pub pacer_enqueue_time: SimTime,
    pub started: SimTime,
    pub departed: SimTime,
}

/// Inputs to [`Pacer::next_transmission`] the pacer does not own.
#[derive(Clone, Copy, Debug)]
pub struct TxContext {
    pub now: SimTime,
    pub next_frame_eta: Duration,
    pub delta: Duration,
    pub video_bitrate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transmission {
    /// Serialization started; the packet departs at `departs`.
    Started {
        kind: PacketKind,
        size: u32,
        departs: SimTime,
    },
    /// The serializer is busy until the given time.
    Busy(SimTime),
    /// Video is queued but the window is full; retry on the next ACK.
    WindowFull,
    /// Nothing to send; retry on the next frame or ACK.
    Idle(Option<DummyVerdict>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PacerCounters {
    pub video_packets: u64,
    pub video_bytes: u64,
    pub dummy_packets: u64,
    pub dummy_bytes: u64,
}

#[derive(Clone, Debug)]
pub struct Pacer {
    mtu: u32,
    dummy: Option<DummyPolicy>,
    backlogged: bool,
    queue: VecDeque<QueuedVideo>,
    frames: VecDeque<FrameMeta>,
    head_frame_since: Option<SimTime>,
    in_service: Option<InService>,
    next_packet_id: u64,
    samples: Vec<ServiceTimeSample>,
    counters: PacerCounters,
}

impl Pacer {
    pub fn new(mtu: u32, dummy: Option<DummyPolicy>) -> Self {
        Self {
            mtu,
            dummy,
            backlogged: false,
            queue: VecDeque::new(),
            frames: VecDeque::new(),
            head_frame_since: None,
            in_service: None,
            next_packet_id: 0,
            samples: Vec::new(),
            counters: PacerCounters::default(),
        }
    }

    /// A pacer whose queue never runs dry: every slot carries an mtu-sized
    /// video packet with no frame.
    pub fn backlogged(mtu: u32) -> Self {
        Self {
            backlogged: true,
            ..Self::new(mtu, None)
        }
    }

    pub fn mtu(&self) -> u32 {
        self.mtu
    }

    /// Stops dummies and the backlogged source; queued video still drains.
    pub fn stop_padding(&mut self) {
        self.dummy = None;
        self.backlogged = false;
    }

    /// Splits a frame into mtu-sized packets and queues them.
    pub fn enqueue_frame(&mut self, frame: &Frame, now: SimTime) -> usize {
        debug_assert!(frame.size_bytes > 0);
        let mtu = self.mtu;
        let count = frame.size_bytes.div_ceil(mtu) as usize;
        if self.queue.is_empty() {
            self.head_frame_since = Some(now);
        }
        for i in 0..count {
            let remaining = frame.size_bytes - i as u32 * mtu;
            self.queue.push_back(QueuedVideo {
                frame_id: Some(frame.frame_id),
                size: remaining.min(mtu),
                enqueue_time: now,
                first: i == 0,
                last: i + 1 == count,
            });
        }
        self.frames.push_back(FrameMeta {
            frame_id: frame.frame_id,
            target_bps: frame.target_bitrate,
        });
        count
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty() && !self.backlogged
    }

    pub fn queued_packets(&self) -> usize {
        self.queue.len()
    }

    pub fn queued_bytes(&self) -> u64 {
        self.queue.iter().map(|p| p.size as u64).sum()
    }

    /// Waiting time of the head packet, zero when empty.
    pub fn oldest_packet_age(&self, now: SimTime) -> Duration {
        self.queue
            .front()
            .map_or(Duration::ZERO, |p| now.saturating_since(p.enqueue_time))
    }

    pub fn in_service_until(&self) -> Option<SimTime> {
        self.in_service.map(|s| s.departs)
    }

    pub fn counters(&self) -> PacerCounters {
        self.counters
    }

    pub fn samples(&self) -> &[ServiceTimeSample] {
        &self.samples
    }

    pub fn take_samples(&mut self) -> Vec<ServiceTimeSample> {
        std::mem::take(&mut self.samples)
    }

    /// Starts serializing the next packet if the serializer is free, the
    /// window allows it and something is eligible. `cca` gets the in-flight
    /// reservation and the app-limited notification.
    pub fn next_transmission(
        &mut self,
        cca: &mut CongestionController,
        ctx: &TxContext,
    ) -> Transmission {
        if let Some(s) = self.in_service {
            return Transmission::Busy(s.departs);
        }
        let rate = cca.cc_rate();
        let now = ctx.now;
        let head = if self.backlogged {
            Some(self.mtu)
        } else {
            self.queue.front().map(|p| p.size)
        };
        if let Some(size) = head {
            if !cca.can_send(size as u64) {
                return Transmission::WindowFull;
            }
            return self.start(cca, PacketKind::Video, size, rate, now);
        }
        let Some(policy) = self.dummy else {
            if cca.can_send(self.mtu as u64) {
                cca.on_app_limited(now);
            }
            return Transmission::Idle(None);
        };
        let verdict = policy.verdict(true, ctx.next_frame_eta, ctx.delta, ctx.video_bitrate);
        let size = policy.max_dummy_size.min(self.mtu);
        match verdict {
            DummyVerdict::Send if cca.can_send(size as u64) => {
                self.start(cca, PacketKind::Dummy, size, rate, now)
            }
            DummyVerdict::Send => Transmission::Idle(Some(DummyVerdict::Send)),
            DummyVerdict::BitrateCeiling => {
                if cca.can_send(self.mtu as u64) {
                    cca.on_app_limited(now);
                }
                Transmission::Idle(Some(verdict))
            }
            other => Transmission::Idle(Some(other)),
        }
    }

    fn start(
        &mut self,
        cca: &mut CongestionController,
        kind: PacketKind,
        size: u32,
        rate: f64,
        now: SimTime,
    ) -> Transmission {
        let packet_id = self.next_packet_id;
        self.next_packet_id += 1;
        cca.on_send(now, packet_id, size as u64);
        let departs = now + transmit_time(size as u64, rate);
        self.in_service = Some(InService {
            packet_id,
            kind,
            size,
            started: now,
            departs,
        });
        Transmission::Started {
            kind,
            size,
            departs,
        }
    }

    /// Completes the packet in service. Returns `None` if nothing is in
    /// service or it is not due yet.
    pub fn complete(&mut self, now: SimTime) -> Option<OutgoingPacket> {
        let s = self.in_service?;
        if s.departs > now {
            return None;
        }
        self.in_service = None;
        let mut out = OutgoingPacket {
            packet_id: s.packet_id,
            kind: s.kind,
            size: s.size,
            frame_id: None,
            last_of_frame: false,
            pacer_enqueue_time: s.started,
            started: s.started,
            departed: s.departs,
        };
        match s.kind {
            PacketKind::Dummy => {
                self.counters.dummy_packets += 1;
                self.counters.dummy_bytes += s.size as u64;
            }
            PacketKind::Video => {
                self.counters.video_packets += 1;
                self.counters.video_bytes += s.size as u64;
                if let Some(p) = self.queue.pop_front() {
                    out.frame_id = p.frame_id;
                    out.last_of_frame = p.last;
                    out.pacer_enqueue_time = p.enqueue_time;
                    if p.last {
                        self.finish_frame(s.departs);
                    }
                }
            }
        }
        Some(out)
    }

    fn finish_frame(&mut self, at: SimTime) {
        let meta = self
            .frames
            .pop_front()
            .expect("frame metadata for queued packets");
        let since = self.head_frame_since.take().unwrap_or(at);
        let service = at.saturating_since(since);
        if service > Duration::ZERO && meta.target_bps > 0.0 {
            self.samples.push(ServiceTimeSample {
                frame_id: meta.frame_id,
                service_ms: millis_f64(service),
                target_bps: meta.target_bps,
                completion_time: at,
            });
        }
        if !self.queue.is_empty() {
            debug_assert!(self.queue.front().is_some_and(|p| p.first));
            self.head_frame_since = Some(at);
        }
    }
}

/// Video bitrate over a trailing window, measured from acked video bytes.
#[derive(Clone, Debug)]
pub struct BitrateMeter {
    window: Duration,
    sum: SlidingSum,
}

impl BitrateMeter {
    pub fn new(window: Duration) -> Self {
        Self {
            window,
            sum: SlidingSum::new(window),
        }
    }

    pub fn record(&mut self, now: SimTime, bytes: u64) {
        self.sum.record(now, bytes);
    }

    pub fn rate_bps(&self, now: SimTime) -> f64 {
        self.sum.sum(now, self.window) as f64 * 8.0 / self.window.as_secs_f64()
    }
}
