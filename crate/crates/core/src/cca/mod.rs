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

//! Window-based, delay-controlling congestion control.
//!
//! [`CongestionController`] owns the shared bookkeeping (in-flight bytes,
//! RTT estimation, the sent-packet registry) and delegates the window rule
//! to [`Copa`] or [`Rocc`]. The pacing rate handed to the pacer and the
//! encoder rate controller is [`CongestionController::cc_rate`].

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

pub mod copa;
pub mod rocc;
pub mod rtt;

pub use copa::{Copa, CopaStep};
pub use rocc::Rocc;
pub use rtt::{RttEstimator, RTT_MIN_WINDOW};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcaAlgorithm {
    #[default]
    Copa,
    Rocc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CopaParams {
    pub delta: f64,
}

impl Default for CopaParams {
    fn default() -> Self {
        Self { delta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoccParams {
    pub gamma: f64,
    pub headroom_mtu: f64,
}

impl Default for RoccParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            headroom_mtu: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcaConfig {
    pub algorithm: CcaAlgorithm,
    pub copa: CopaParams,
    pub rocc: RoccParams,
    /// Pacing rate before the first RTT sample.
    pub initial_rate_bps: f64,
    pub initial_cwnd_mtu: u32,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self {
            algorithm: CcaAlgorithm::Copa,
            copa: CopaParams::default(),
            rocc: RoccParams::default(),
            initial_rate_bps: 300_000.0,
            initial_cwnd_mtu: 10,
        }
    }
}

impl CcaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.copa.delta > 0.0) {
            return Err("cca.copa.delta must be positive".into());
        }
        if !(self.rocc.gamma > 0.0) {
            return Err("cca.rocc.gamma must be positive".into());
        }
        if !(self.rocc.headroom_mtu >= 1.0) {
            return Err("cca.rocc.headroom_mtu must be at least 1".into());
        }
        if !(self.initial_rate_bps > 0.0) {
            return Err("cca.initial_rate_bps must be positive".into());
        }
        if self.initial_cwnd_mtu == 0 {
            return Err("cca.initial_cwnd_mtu must be positive".into());
        }
        Ok(())
    }
}

/// Acknowledgment of one packet as seen by the sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckEvent {
    pub packet_id: u64,
    pub bytes_acked: u64,
    pub send_time: SimTime,
    pub recv_ack_time: SimTime,
}

impl AckEvent {
    pub fn rtt(&self) -> Duration {
        self.recv_ack_time - self.send_time
    }
}

/// Snapshot of the controller state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcaState {
    pub cwnd: u64,
    pub srtt: Option<Duration>,
    pub rtt_min: Option<Duration>,
    pub inflight: u64,
    pub algorithm: CcaAlgorithm,
}

#[derive(Clone, Copy, Debug)]
struct SentPacket {
    size: u64,
    app_limited: bool,
}

#[derive(Clone, Debug)]
enum Window {
    Copa(Copa),
    Rocc(Rocc),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CcaCounters {
    pub acks: u64,
    pub duplicate_acks: u64,
    pub losses: u64,
}

#[derive(Clone, Debug)]
pub struct CongestionController {
    algorithm: CcaAlgorithm,
    mtu: u64,
    initial_rate_bps: f64,
    rtt: RttEstimator,
    window: Window,
    cwnd: u64,
    inflight: u64,
    sent: BTreeMap<u64, SentPacket>,
    app_limited_at: Option<SimTime>,
    counters: CcaCounters,
}

impl CongestionController {
    pub fn new(config: &CcaConfig, mtu: u32) -> Self {
        let initial_cwnd = config.initial_cwnd_mtu as u64 * mtu as u64;
        let window = match config.algorithm {
            CcaAlgorithm::Copa => Window::Copa(Copa::new(
                config.copa.delta,
                mtu,
                initial_cwnd,
                2 * mtu as u64,
            )),
            CcaAlgorithm::Rocc => Window::Rocc(Rocc::new(
                config.rocc.gamma,
                (config.rocc.headroom_mtu * mtu as f64).round() as u64,
            )),
        };
        Self {
            algorithm: config.algorithm,
            mtu: mtu as u64,
            initial_rate_bps: config.initial_rate_bps,
            rtt: RttEstimator::new(),
            window,
            cwnd: initial_cwnd,
            inflight: 0,
            sent: BTreeMap::new(),
            app_limited_at: None,
            counters: CcaCounters::default(),
        }
    }

    pub fn state(&self) -> CcaState {
        CcaState {
            cwnd: self.cwnd,
            srtt: self.rtt.srtt(),
            rtt_min: self.rtt.rtt_min(),
            inflight: self.inflight,
            algorithm: self.algorithm,
        }
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn inflight(&self) -> u64 {
        self.inflight
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.rtt.srtt()
    }

    pub fn counters(&self) -> CcaCounters {
        self.counters
    }

    pub fn can_send(&self, packet_size: u64) -> bool {
        self.inflight + packet_size <= self.cwnd
    }

    /// Pacing rate `cwnd / srtt` in bits per second, or the configured
    /// initial rate before the first RTT sample.
    pub fn cc_rate(&self) -> f64 {
        match self.rtt.srtt() {
            Some(srtt) if !srtt.is_zero() => self.cwnd as f64 * 8.0 / srtt.as_secs_f64(),
            _ => self.initial_rate_bps,
        }
    }

    /// Notes that the sender had room to send but nothing to send.
    pub fn on_app_limited(&mut self, now: SimTime) {
        self.app_limited_at = Some(now);
    }

    fn app_limited_recently(&self, now: SimTime) -> bool {
        let horizon = self.rtt.srtt().unwrap_or(Duration::from_millis(100));
        matches!(self.app_limited_at, Some(t) if now - t <= horizon)
    }

    /// Registers a packet as in flight.
    pub fn on_send(&mut self, now: SimTime, packet_id: u64, size: u64) {
        let app_limited = self.app_limited_recently(now);
        self.inflight += size;
        self.sent
            .insert(packet_id, SentPacket { size, app_limited });
    }

    /// Processes an ACK. Returns `false` for an ACK of a packet that is not
    /// in flight (duplicate or already declared lost), which is counted and
    /// otherwise ignored.
    pub fn on_ack(&mut self, ack: &AckEvent) -> bool {
        let Some(sent) = self.sent.remove(&ack.packet_id) else {
            self.counters.duplicate_acks += 1;
            return false;
        };
        self.counters.acks += 1;
        self.inflight -= sent.size;
        let now = ack.recv_ack_time;
        let rtt = ack.rtt().max(Duration::from_micros(1));
        self.rtt.update(now, rtt);
        let srtt = self.rtt.srtt().unwrap_or(rtt);
        let rtt_min = self.rtt.rtt_min().unwrap_or(rtt);
        self.cwnd = match &mut self.window {
            Window::Copa(copa) => {
                copa.on_ack(now, rtt, srtt, rtt_min, ack.bytes_acked, sent.app_limited);
                copa.cwnd()
            }
            Window::Rocc(rocc) => rocc.on_ack(now, ack.bytes_acked, rtt_min),
        }
        .max(self.mtu);
        true
    }

    /// Removes a lost packet from flight. Neither window rule reacts to loss
    /// beyond that. Returns the size released, `None` if not in flight.
    pub fn on_loss(&mut self, packet_id: u64) -> Option<u64> {
        let sent = self.sent.remove(&packet_id)?;
        self.inflight -= sent.size;
        self.counters.losses += 1;
        Some(sent.size)
    }

    /// In-flight packet ids sent before `packet_id`, oldest first.
    pub fn unacked_before(&self, packet_id: u64) -> Vec<u64> {
        self.sent.range(..packet_id).map(|(&id, _)| id).collect()
    }

    /// Oldest packet still in flight.
    pub fn oldest_in_flight(&self) -> Option<u64> {
        self.sent.keys().next().copied()
    }

    pub fn packets_in_flight(&self) -> usize {
        self.sent.len()
    }
}
