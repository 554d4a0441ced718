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

use std::time::Duration;

use crate::stats::WindowedMin;
use crate::time::SimTime;

/// Window of the minimum-RTT filter.
pub const RTT_MIN_WINDOW: Duration = Duration::from_secs(10);

/// Smoothed RTT (gain 1/8) and windowed minimum RTT.
#[derive(Clone, Debug, Default)]
pub struct RttEstimator {
    srtt: Option<Duration>,
    latest: Option<Duration>,
    min_filter: WindowedMin,
    rtt_min: Option<Duration>,
}

impl RttEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, now: SimTime, rtt: Duration) {
        self.latest = Some(rtt);
        self.srtt = Some(match self.srtt {
            None => rtt,
            Some(s) => (s * 7 + rtt) / 8,
        });
        self.min_filter.update(now, rtt);
        self.rtt_min = self.min_filter.get(now, RTT_MIN_WINDOW);
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt
    }

    pub fn rtt_min(&self) -> Option<Duration> {
        self.rtt_min
    }

    pub fn latest(&self) -> Option<Duration> {
        self.latest
    }
}
