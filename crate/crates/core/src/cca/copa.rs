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

//! Copa in its default (delay-only) mode.
//!
//! The target rate is `1 / (delta * d_q)` packets per second where `d_q` is
//! the standing RTT minus the minimum RTT. Each ACK moves the window toward
//! that target by `v / (delta * cwnd)` packets, scaled by the number of
//! bytes acknowledged, and the velocity `v` doubles once the window has
//! moved in the same direction for three consecutive rounds.
//!
//! See <https://web.mit.edu/copa/>.

use std::time::Duration;

use crate::stats::WindowedMin;
use crate::time::SimTime;

/// Rounds in the same direction before the velocity starts doubling.
const SPEED_UP_THRESHOLD: u32 = 3;

const MAX_VELOCITY: f64 = 1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

#[derive(Clone, Debug)]
pub struct Copa {
    delta: f64,
    mtu: f64,
    min_cwnd: f64,
    cwnd: f64,
    slow_start: bool,
    standing: WindowedMin,
    velocity: f64,
    direction: Direction,
    same_direction_rounds: u32,
    round_start: Option<SimTime>,
    round_start_cwnd: f64,
}

/// What one ACK did to the window, for logging and tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CopaStep {
    pub queueing_delay: Duration,
    pub standing_rtt: Duration,
    pub increase: bool,
}

impl Copa {
    pub fn new(delta: f64, mtu: u32, initial_cwnd: u64, min_cwnd: u64) -> Self {
        Self {
            delta,
            mtu: mtu as f64,
            min_cwnd: min_cwnd as f64,
            cwnd: initial_cwnd as f64,
            slow_start: true,
            standing: WindowedMin::new(),
            velocity: 1.0,
            direction: Direction::Up,
            same_direction_rounds: 0,
            round_start: None,
            round_start_cwnd: initial_cwnd as f64,
        }
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd.round() as u64
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    pub fn in_slow_start(&self) -> bool {
        self.slow_start
    }

    /// Processes one ACK. `app_limited` packets never grow the window.
    pub fn on_ack(
        &mut self,
        now: SimTime,
        rtt: Duration,
        srtt: Duration,
        rtt_min: Duration,
        bytes_acked: u64,
        app_limited: bool,
    ) -> CopaStep {
        self.standing.update(now, rtt);
        let standing = self
            .standing
            .get(now, (srtt / 2).max(Duration::from_micros(1)))
            .unwrap_or(rtt)
            .max(rtt_min);
        let queueing = standing - rtt_min;
        let dq = queueing.as_secs_f64();
        // current rate cwnd / standing versus target mtu / (delta * dq)
        let increase =
            dq <= 0.0 || self.cwnd * self.delta * dq <= self.mtu * standing.as_secs_f64();

        self.update_velocity(now, srtt, increase);

        let acked = bytes_acked as f64;
        if self.slow_start {
            if increase {
                if !app_limited {
                    self.cwnd += acked;
                }
            } else {
                self.slow_start = false;
            }
        }
        if !self.slow_start {
            let step = self.velocity * acked * self.mtu / (self.delta * self.cwnd);
            if increase {
                if !app_limited {
                    self.cwnd += step;
                }
            } else {
                self.cwnd -= step;
            }
        }
        self.cwnd = self.cwnd.max(self.min_cwnd);
        CopaStep {
            queueing_delay: queueing,
            standing_rtt: standing,
            increase,
        }
    }

    fn update_velocity(&mut self, now: SimTime, srtt: Duration, increase: bool) {
        let wanted = if increase {
            Direction::Up
        } else {
            Direction::Down
        };
        // A large velocity built up for the other direction is stale.
        if wanted != self.direction && self.velocity > 1.0 {
            self.velocity = 1.0;
            self.same_direction_rounds = 0;
        }
        let start = *self.round_start.get_or_insert(now);
        if now < start + srtt {
            return;
        }
        let moved = if self.cwnd > self.round_start_cwnd {
            Direction::Up
        } else {
            Direction::Down
        };
        if moved == self.direction {
            self.same_direction_rounds += 1;
            if self.same_direction_rounds >= SPEED_UP_THRESHOLD {
                self.velocity = (self.velocity * 2.0).min(MAX_VELOCITY);
            }
        } else {
            self.direction = moved;
            self.velocity = 1.0;
            self.same_direction_rounds = 0;
        }
        self.round_start = Some(now);
        self.round_start_cwnd = self.cwnd;
    }
}
