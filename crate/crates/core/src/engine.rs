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

//! Discrete-event simulation loop.
//!
//! Camera ticks feed the encoder, encoded frames enter the pacer, paced
//! packets cross the bottleneck link, and per-packet ACKs return after the
//! one-way delay to drive the congestion controller. Events are ordered by
//! `(time, insertion order)`, so a run is a pure function of its config.
//!
//! When the configured duration ends, camera ticks, padding and the
//! backlogged source stop, and the loop runs until every packet has been
//! acknowledged or declared lost.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::cca::{AckEvent, CcaCounters, CongestionController};
use crate::config::{ConfigError, SimConfig};
use crate::controller::{safeguard_check, AlphaUpdate, RateController, SafeguardAction};
use crate::encoder::{EncodeOutcome, Encoder};
use crate::link::{Delivery, Link, LinkCounters, LinkModel, PacketKind, QueuedPacket};
use crate::time::{millis_f64, SimTime};
use crate::transport::{BitrateMeter, Pacer, PacerCounters, ServiceTimeSample, TxContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    CameraTick(u64),
    ControllerUpdate,
    PacerDeparture,
    LinkOpportunity,
    ReceiverArrival(u64),
    AckArrival(u64),
    LossCheck,
}

/// One processed event, for the optional log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEntry {
    Frame {
        t_us: u64,
        frame_id: u64,
        encoded: bool,
        size_bytes: u32,
        target_bps: f64,
        head_age_ms: f64,
    },
    Safeguard {
        t_us: u64,
        action: &'static str,
    },
    Alpha {
        t_us: u64,
        raw: f64,
        alpha: f64,
        samples: usize,
    },
    Send {
        t_us: u64,
        packet_id: u64,
        kind: PacketKind,
        size: u32,
        accepted: bool,
    },
    Arrival {
        t_us: u64,
        packet_id: u64,
        lost: bool,
    },
    Ack {
        t_us: u64,
        packet_id: u64,
        cwnd: u64,
        cc_rate_bps: f64,
    },
    Loss {
        t_us: u64,
        packet_id: u64,
    },
}

impl LogEntry {
    pub fn time_us(&self) -> u64 {
        match *self {
            LogEntry::Frame { t_us, .. }
            | LogEntry::Safeguard { t_us, .. }
            | LogEntry::Alpha { t_us, .. }
            | LogEntry::Send { t_us, .. }
            | LogEntry::Arrival { t_us, .. }
            | LogEntry::Ack { t_us, .. }
            | LogEntry::Loss { t_us, .. } => t_us,
        }
    }
}

/// Per camera tick.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub read_time_ms: f64,
    pub display_time_ms: Option<f64>,
    /// Display latency, with undelivered and skipped frames charged up to
    /// the display of the next delivered frame.
    pub latency_ms: Option<f64>,
    pub size_bytes: u32,
    pub target_bitrate: f64,
    pub skipped: bool,
    pub packets: u32,
    pub lost: bool,
    /// Pacer head age observed at the tick.
    pub pacer_head_age_ms: f64,
    /// When the last packet left the pacer.
    pub pacer_exit_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub kind: PacketKind,
    pub size: u32,
    pub frame_id: Option<u64>,
    pub pacer_enqueue_ms: f64,
    pub sent_ms: f64,
    pub link_accepted: bool,
    pub arrival_ms: Option<f64>,
    pub ack_ms: Option<f64>,
    pub declared_lost: bool,
}

/// Sampled sender state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub t_ms: f64,
    pub cc_rate_bps: f64,
    pub cwnd: u64,
    pub target_bps: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: SimConfig,
    pub link: Arc<LinkModel>,
    pub frames: Vec<FrameRecord>,
    pub packets: Vec<PacketRecord>,
    pub alpha: Vec<AlphaUpdate<f64>>,
    pub service_samples: Vec<ServiceTimeSample>,
    pub rates: Vec<RatePoint>,
    /// Bytes leaving the pacer per bin, over the configured duration.
    pub sent_bins: Vec<u64>,
    /// Bytes leaving the bottleneck per bin.
    pub delivered_bins: Vec<u64>,
    pub bin: Duration,
    pub events: Option<Vec<LogEntry>>,
    pub cca: CcaCounters,
    pub link_counters: LinkCounters,
    pub pacer: PacerCounters,
    pub final_inflight: u64,
    pub end_time: SimTime,
    pub pauses: u64,
    pub last_event_time: SimTime,
    pub time_ordered: bool,
}

impl RunResult {
    pub fn duration(&self) -> Duration {
        self.config.duration()
    }
}

struct FrameState {
    expected: u32,
    received: u32,
}

struct Engine {
    cfg: SimConfig,
    link_model: Arc<LinkModel>,
    heap: BinaryHeap<Reverse<(SimTime, u64, Event)>>,
    seq: u64,
    now: SimTime,
    end: SimTime,
    draining: bool,
    delta: Duration,
    next_tick: Option<SimTime>,
    encoder: Encoder,
    controller: RateController<f64>,
    cca: CongestionController,
    pacer: Pacer,
    link: Link,
    video_rate: BitrateMeter,
    departure_pending: bool,
    opportunity_pending: Option<SimTime>,
    loss_check_pending: bool,
    loss_detection_timeout: bool,
    pending_arrivals: std::collections::HashMap<u64, Delivery>,
    frames: Vec<FrameRecord>,
    frame_state: Vec<FrameState>,
    packets: Vec<PacketRecord>,
    alpha: Vec<AlphaUpdate<f64>>,
    samples: Vec<ServiceTimeSample>,
    rates: Vec<RatePoint>,
    sent_bins: Vec<u64>,
    delivered_bins: Vec<u64>,
    bin: Duration,
    events: Option<Vec<LogEntry>>,
    pauses: u64,
    last_event_time: SimTime,
    time_ordered: bool,
}

/// Runs one simulation.
pub fn run(config: &SimConfig) -> Result<RunResult, ConfigError> {
    let link = config.build_link()?;
    Ok(run_with_link(config, link))
}

/// Runs one simulation on an already built link. The config must be valid.
pub fn run_with_link(config: &SimConfig, link: Arc<LinkModel>) -> RunResult {
    let mut engine = Engine::new(config.clone(), link);
    engine.run();
    engine.finish()
}

impl Engine {
    fn new(cfg: SimConfig, link_model: Arc<LinkModel>) -> Self {
        let end = SimTime::from_secs_f64(cfg.duration_s);
        let delta = Duration::from_secs_f64(cfg.encoder.delta_s());
        let pacer = if cfg.backlogged_source {
            Pacer::backlogged(cfg.pacer.mtu)
        } else {
            Pacer::new(cfg.pacer.mtu, cfg.dummy.policy())
        };
        let bin = Duration::from_millis(cfg.engine.bin_ms);
        let bins = (end.as_micros() as u128).div_ceil(bin.as_micros()) as usize;
        let loss_detection_timeout =
            link_model.loss_prob > 0.0 || link_model.buffer_bytes.is_some();
        Self {
            encoder: Encoder::new(cfg.encoder.clone(), cfg.seed),
            controller: RateController::new(&cfg.controller),
            cca: CongestionController::new(&cfg.cca, cfg.pacer.mtu),
            link: Link::new(link_model.clone(), cfg.seed),
            video_rate: BitrateMeter::new(Duration::from_secs(1)),
            heap: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            end,
            draining: false,
            delta,
            next_tick: None,
            pacer,
            departure_pending: false,
            opportunity_pending: None,
            loss_check_pending: false,
            loss_detection_timeout,
            pending_arrivals: Default::default(),
            frames: Vec::new(),
            frame_state: Vec::new(),
            packets: Vec::new(),
            alpha: Vec::new(),
            samples: Vec::new(),
            rates: Vec::new(),
            sent_bins: vec![0; bins],
            delivered_bins: vec![0; bins],
            bin,
            events: cfg.engine.event_log.then(Vec::new),
            pauses: 0,
            last_event_time: SimTime::ZERO,
            time_ordered: true,
            link_model,
            cfg,
        }
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, event)));
    }

    fn log(&mut self, entry: LogEntry) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(entry);
        }
    }

    fn tick_time(&self, k: u64) -> SimTime {
        SimTime::from_secs_f64(k as f64 / self.cfg.encoder.fps)
    }

    fn run(&mut self) {
        if self.cfg.backlogged_source {
            self.next_tick = None;
        } else {
            self.next_tick = Some(SimTime::ZERO);
            self.schedule(SimTime::ZERO, Event::CameraTick(0));
        }
        let interval = self.cfg.controller.update_interval();
        if interval > Duration::ZERO {
            self.schedule(SimTime::ZERO + interval, Event::ControllerUpdate);
        }
        self.pump();
        while let Some(Reverse((t, _, event))) = self.heap.pop() {
            if t < self.last_event_time {
                self.time_ordered = false;
            }
            self.last_event_time = t;
            self.now = t;
            if !self.draining && t >= self.end {
                self.start_drain();
            }
            match event {
                Event::CameraTick(k) => self.on_tick(k),
                Event::ControllerUpdate => self.on_controller_update(),
                Event::PacerDeparture => self.on_departure(),
                Event::LinkOpportunity => self.on_opportunity(),
                Event::ReceiverArrival(id) => self.on_arrival(id),
                Event::AckArrival(id) => self.on_ack(id),
                Event::LossCheck => self.on_loss_check(),
            }
        }
    }

    fn start_drain(&mut self) {
        self.draining = true;
        self.next_tick = None;
        self.pacer.stop_padding();
    }

    fn pump(&mut self) {
        if self.departure_pending {
            return;
        }
        let next_frame_eta = match self.next_tick {
            Some(t) => t.saturating_since(self.now),
            None => Duration::MAX,
        };
        let ctx = TxContext {
            now: self.now,
            next_frame_eta,
            delta: self.delta,
            video_bitrate: self.video_rate.rate_bps(self.now),
        };
        if let crate::transport::Transmission::Started { departs, .. } =
            self.pacer.next_transmission(&mut self.cca, &ctx)
        {
            self.departure_pending = true;
            self.schedule(departs, Event::PacerDeparture);
        }
    }

    fn on_tick(&mut self, k: u64) {
        let now = self.now;
        self.next_tick = if self.tick_time(k + 1) < self.end {
            Some(self.tick_time(k + 1))
        } else {
            None
        };
        if let Some(t) = self.next_tick {
            self.schedule(t, Event::CameraTick(k + 1));
        }
        let head_age = self.pacer.oldest_packet_age(now);
        if self.cfg.controller.safeguard_enabled {
            let tau = Duration::from_secs_f64(self.cfg.controller.tau_ms / 1e3);
            match safeguard_check(
                head_age,
                self.encoder.is_paused(),
                self.pacer.is_empty(),
                tau,
            ) {
                SafeguardAction::Pause => {
                    self.encoder.pause();
                    self.pauses += 1;
                    self.log(LogEntry::Safeguard {
                        t_us: now.as_micros(),
                        action: "pause",
                    });
                }
                SafeguardAction::Resume => {
                    self.encoder.resume();
                    self.log(LogEntry::Safeguard {
                        t_us: now.as_micros(),
                        action: "resume",
                    });
                }
                SafeguardAction::NoChange => {}
            }
        }
        let cc_rate = self.cca.cc_rate();
        let target = if self.encoder.is_paused() {
            0.0
        } else {
            self.controller.target_bitrate(cc_rate)
        };
        self.rates.push(RatePoint {
            t_ms: now.as_millis_f64(),
            cc_rate_bps: cc_rate,
            cwnd: self.cca.cwnd(),
            target_bps: target,
        });
        let outcome = self
            .encoder
            .encode(k, target, now)
            .expect("target derived from a positive rate");
        let mut record = FrameRecord {
            frame_id: k,
            read_time_ms: now.as_millis_f64(),
            display_time_ms: None,
            latency_ms: None,
            size_bytes: 0,
            target_bitrate: target,
            skipped: true,
            packets: 0,
            lost: false,
            pacer_head_age_ms: millis_f64(head_age),
            pacer_exit_ms: None,
        };
        if let EncodeOutcome::Frame(frame) = outcome {
            let packets = self.pacer.enqueue_frame(&frame, now) as u32;
            record.size_bytes = frame.size_bytes;
            record.skipped = false;
            record.packets = packets;
        }
        self.log(LogEntry::Frame {
            t_us: now.as_micros(),
            frame_id: k,
            encoded: !record.skipped,
            size_bytes: record.size_bytes,
            target_bps: target,
            head_age_ms: record.pacer_head_age_ms,
        });
        self.frame_state.push(FrameState {
            expected: record.packets,
            received: 0,
        });
        self.frames.push(record);
        self.pump();
    }

    fn on_controller_update(&mut self) {
        let now = self.now;
        if now >= self.end {
            return;
        }
        let up = self
            .controller
            .on_update_tick(self.cca.cc_rate(), now)
            .expect("samples carry positive targets");
        self.log(LogEntry::Alpha {
            t_us: now.as_micros(),
            raw: up.raw,
            alpha: up.alpha,
            samples: up.samples,
        });
        self.alpha.push(up);
        let next = now + self.cfg.controller.update_interval();
        if next < self.end {
            self.schedule(next, Event::ControllerUpdate);
        }
    }

    fn bin_index(&self, t: SimTime) -> Option<usize> {
        if t >= self.end {
            return None;
        }
        Some((t.as_micros() / self.bin.as_micros() as u64) as usize)
    }

    fn on_departure(&mut self) {
        self.departure_pending = false;
        let now = self.now;
        let Some(out) = self.pacer.complete(now) else {
            self.pump();
            return;
        };
        for s in self.pacer.take_samples() {
            self.controller.push_sample(s);
            self.samples.push(s);
        }
        if let (Some(fid), true) = (out.frame_id, out.last_of_frame) {
            if let Some(f) = self.frames.get_mut(fid as usize) {
                f.pacer_exit_ms = Some(now.as_millis_f64());
            }
        }
        let accepted = self.link.enqueue(
            QueuedPacket {
                packet_id: out.packet_id,
                size: out.size,
                enqueue_time: now,
                kind: out.kind,
            },
            now,
        );
        if let Some(i) = self.bin_index(now) {
            self.sent_bins[i] += out.size as u64;
        }
        debug_assert_eq!(self.packets.len() as u64, out.packet_id);
        self.packets.push(PacketRecord {
            packet_id: out.packet_id,
            kind: out.kind,
            size: out.size,
            frame_id: out.frame_id,
            pacer_enqueue_ms: out.pacer_enqueue_time.as_millis_f64(),
            sent_ms: now.as_millis_f64(),
            link_accepted: accepted,
            arrival_ms: None,
            ack_ms: None,
            declared_lost: false,
        });
        self.log(LogEntry::Send {
            t_us: now.as_micros(),
            packet_id: out.packet_id,
            kind: out.kind,
            size: out.size,
            accepted,
        });
        self.schedule_opportunity();
        self.arm_loss_check();
        self.pump();
    }

    fn schedule_opportunity(&mut self) {
        if let Some(t) = self.link.next_opportunity() {
            if self.opportunity_pending != Some(t) {
                let t = t.max(self.now);
                self.opportunity_pending = Some(t);
                self.schedule(t, Event::LinkOpportunity);
            }
        }
    }

    fn on_opportunity(&mut self) {
        if self.opportunity_pending != Some(self.now) {
            return;
        }
        self.opportunity_pending = None;
        for d in self.link.serve_opportunity() {
            if let Some(i) = self.bin_index(d.departed) {
                self.delivered_bins[i] += d.size as u64;
            }
            self.pending_arrivals.insert(d.packet_id, d);
            self.schedule(d.arrival, Event::ReceiverArrival(d.packet_id));
        }
        self.schedule_opportunity();
    }

    fn on_arrival(&mut self, id: u64) {
        let Some(d) = self.pending_arrivals.remove(&id) else {
            return;
        };
        let now = self.now;
        self.log(LogEntry::Arrival {
            t_us: now.as_micros(),
            packet_id: id,
            lost: d.lost,
        });
        if d.lost {
            return;
        }
        let rec = &mut self.packets[id as usize];
        rec.arrival_ms = Some(now.as_millis_f64());
        if let Some(fid) = rec.frame_id {
            let fs = &mut self.frame_state[fid as usize];
            fs.received += 1;
            if fs.received == fs.expected && !self.frames[fid as usize].lost {
                self.frames[fid as usize].display_time_ms = Some(now.as_millis_f64());
            }
        }
        self.schedule(now + self.link_model.owd, Event::AckArrival(id));
    }

    fn on_ack(&mut self, id: u64) {
        let now = self.now;
        let (sent_ms, size, kind) = {
            let rec = &self.packets[id as usize];
            (rec.sent_ms, rec.size, rec.kind)
        };
        // FIFO path: anything older still unacknowledged was lost.
        for lost in self.cca.unacked_before(id) {
            if (lost as usize) < self.packets.len() {
                self.declare_lost(lost);
            }
        }
        let ack = AckEvent {
            packet_id: id,
            bytes_acked: size as u64,
            send_time: SimTime::from_millis_f64(sent_ms),
            recv_ack_time: now,
        };
        if self.cca.on_ack(&ack) {
            self.packets[id as usize].ack_ms = Some(now.as_millis_f64());
            if kind == PacketKind::Video {
                self.video_rate.record(now, size as u64);
            }
        }
        self.log(LogEntry::Ack {
            t_us: now.as_micros(),
            packet_id: id,
            cwnd: self.cca.cwnd(),
            cc_rate_bps: self.cca.cc_rate(),
        });
        self.pump();
    }

    fn declare_lost(&mut self, id: u64) {
        if self.cca.on_loss(id).is_none() {
            return;
        }
        let rec = &mut self.packets[id as usize];
        rec.declared_lost = true;
        if let Some(fid) = rec.frame_id {
            let f = &mut self.frames[fid as usize];
            f.lost = true;
            f.display_time_ms = None;
        }
        self.log(LogEntry::Loss {
            t_us: self.now.as_micros(),
            packet_id: id,
        });
    }

    fn loss_timeout(&self) -> Duration {
        let srtt = self.cca.srtt().unwrap_or(Duration::from_millis(250));
        srtt.mul_f64(self.cfg.engine.loss_timeout_srtt)
    }

    fn arm_loss_check(&mut self) {
        if !self.loss_detection_timeout || self.loss_check_pending {
            return;
        }
        // the packet in service has not departed; only departed ones age
        let Some(oldest) = self
            .cca
            .oldest_in_flight()
            .filter(|&id| (id as usize) < self.packets.len())
        else {
            return;
        };
        let sent = SimTime::from_millis_f64(self.packets[oldest as usize].sent_ms);
        let at = (sent + self.loss_timeout()).max(self.now + Duration::from_micros(1));
        self.loss_check_pending = true;
        self.schedule(at, Event::LossCheck);
    }

    fn on_loss_check(&mut self) {
        self.loss_check_pending = false;
        let now = self.now;
        let timeout = self.loss_timeout();
        while let Some(id) = self.cca.oldest_in_flight() {
            if id as usize >= self.packets.len() {
                break;
            }
            let sent = SimTime::from_millis_f64(self.packets[id as usize].sent_ms);
            if sent + timeout > now {
                break;
            }
            self.declare_lost(id);
        }
        self.arm_loss_check();
        self.pump();
    }

    fn finish(mut self) -> RunResult {
        fill_latencies(&mut self.frames);
        RunResult {
            link_counters: self.link.counters(),
            pacer: self.pacer.counters(),
            cca: self.cca.counters(),
            final_inflight: self.cca.inflight(),
            end_time: self.end,
            config: self.cfg,
            link: self.link_model,
            frames: self.frames,
            packets: self.packets,
            alpha: self.alpha,
            service_samples: self.samples,
            rates: self.rates,
            sent_bins: self.sent_bins,
            delivered_bins: self.delivered_bins,
            bin: self.bin,
            events: self.events,
            pauses: self.pauses,
            last_event_time: self.last_event_time,
            time_ordered: self.time_ordered,
        }
    }
}

/// Latency per frame: display minus read time, and for frames that were
/// never displayed, the display time of the next displayed frame minus
/// their read time.
pub fn fill_latencies(frames: &mut [FrameRecord]) {
    let mut next_display: Option<f64> = None;
    for f in frames.iter_mut().rev() {
        match f.display_time_ms {
            Some(d) => {
                f.latency_ms = Some(d - f.read_time_ms);
                next_display = Some(d);
            }
            None => f.latency_ms = next_display.map(|d| d - f.read_time_ms),
        }
    }
}
