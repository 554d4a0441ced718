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

//! RoCC: the window is a small constant more than the bytes acknowledged
//! during the last `(1 + gamma) * rtt_min`, which holds a standing queue of
//! about `gamma * rtt_min`.

use std::time::Duration;

use crate::stats::SlidingSum;
use crate::time::SimTime;

const HISTORY: Duration = Duration::from_secs(20);

#[derive(Clone, Debug)]
pub struct Rocc {
    gamma: f64,
    headroom_bytes: u64,
    received: SlidingSum,
}

impl Rocc {
    pub fn new(gamma: f64, headroom_bytes: u64) -> Self {
        Self {
            gamma,
            headroom_bytes,
            received: SlidingSum::new(HISTORY),
        }
    }

    pub fn window(&self, rtt_min: Duration) -> Duration {
        rtt_min.mul_f64(1.0 + self.gamma)
    }

    /// Records `bytes_acked` at `now` and returns the new window in bytes.
    pub fn on_ack(&mut self, now: SimTime, bytes_acked: u64, rtt_min: Duration) -> u64 {
        self.received.record(now, bytes_acked);
        self.cwnd(now, rtt_min)
    }

    pub fn cwnd(&self, now: SimTime, rtt_min: Duration) -> u64 {
        self.received.sum(now, self.window(rtt_min)) + self.headroom_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_headroom() {
        let r = Rocc::new(0.5, 4 * 1500);
        assert_eq!(
            r.cwnd(SimTime::from_millis(500), Duration::from_millis(50)),
            6000
        );
    }

    #[test]
    fn sums_bytes_in_window() {
        let mut r = Rocc::new(0.5, 6000);
        let rtt_min = Duration::from_millis(50);
        // 2500 B every 3 ms from t=0 to t=200 ms
        let acks: Vec<(u64, u64)> = (0..=66).map(|i| (i * 3_000, 2500)).collect();
        let mut cwnd = 0;
        for &(t, b) in &acks {
            cwnd = r.on_ack(SimTime::from_micros(t), b, rtt_min);
        }
        let now = acks.last().unwrap().0;
        // brute force: acks in (now - 75 ms, now]
        let expected: u64 = acks
            .iter()
            .filter(|&&(t, _)| t + 75_000 > now && t <= now)
            .map(|&(_, b)| b)
            .sum();
        assert_eq!(expected, 62_500);
        assert_eq!(cwnd, 68_500);
    }
}
