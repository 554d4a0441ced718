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

//! Synthetic cellular-style traces.
//!
//! Each profile drives an Ornstein-Uhlenbeck process on the log of the link
//! rate, punctuated by outages, and draws Poisson opportunity counts per
//! millisecond. Output is a Mahimahi trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::link::{LinkError, Trace};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceProfile {
    pub name: &'static str,
    pub mean_rate_bps: f64,
    /// Stationary standard deviation of the log rate.
    pub log_sigma: f64,
    /// Mean-reversion time of the log rate in seconds.
    pub reversion_s: f64,
    /// Outages per second.
    pub outage_rate: f64,
    pub outage_mean_ms: f64,
}

impl TraceProfile {
    const fn new(
        name: &'static str,
        mean_mbps: f64,
        log_sigma: f64,
        reversion_s: f64,
        outage_rate: f64,
        outage_mean_ms: f64,
    ) -> Self {
        Self {
            name,
            mean_rate_bps: mean_mbps * 1e6,
            log_sigma,
            reversion_s,
            outage_rate,
            outage_mean_ms,
        }
    }
}

/// Fifteen profiles spanning slow, variable and fast cellular links.
pub const CELLULAR_SUITE: [TraceProfile; 15] = [
    TraceProfile::new("lte-driving-1", 2.5, 0.8, 1.0, 0.05, 400.0),
    TraceProfile::new("lte-driving-2", 4.0, 0.7, 1.5, 0.03, 300.0),
    TraceProfile::new("lte-walking", 6.0, 0.5, 3.0, 0.01, 200.0),
    TraceProfile::new("lte-stationary", 8.0, 0.25, 5.0, 0.0, 0.0),
    TraceProfile::new("lte-bus", 3.0, 0.9, 0.8, 0.08, 500.0),
    TraceProfile::new("lte-train", 1.5, 1.0, 0.6, 0.1, 700.0),
    TraceProfile::new("3g-stationary", 1.0, 0.3, 4.0, 0.0, 0.0),
    TraceProfile::new("3g-walking", 0.8, 0.5, 2.0, 0.02, 300.0),
    TraceProfile::new("3g-driving", 1.2, 0.8, 1.0, 0.06, 600.0),
    TraceProfile::new("5g-stationary", 12.0, 0.3, 4.0, 0.0, 0.0),
    TraceProfile::new("5g-walking", 10.0, 0.6, 2.0, 0.02, 200.0),
    TraceProfile::new("wifi-shared", 5.0, 0.4, 0.5, 0.01, 150.0),
    TraceProfile::new("lte-congested", 2.0, 0.6, 0.4, 0.02, 250.0),
    TraceProfile::new("lte-edge", 1.8, 0.7, 2.5, 0.04, 800.0),
    TraceProfile::new("lte-mixed", 5.0, 0.9, 1.2, 0.03, 350.0),
];

/// Generates `duration_ms` of trace for `profile`. The final timestamp is
/// pinned to `duration_ms` so the trace loops with that period.
pub fn generate(
    profile: &TraceProfile,
    duration_ms: u64,
    mtu: u32,
    seed: u64,
) -> Result<Trace, LinkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1e-3;
    let theta = 1.0 / profile.reversion_s;
    let innovation = profile.log_sigma * (2.0 * theta * dt).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let outage_gap = (profile.outage_rate > 0.0)
        .then(|| Exp::new(profile.outage_rate / 1e3).expect("positive rate"));
    let outage_len = (profile.outage_mean_ms > 0.0)
        .then(|| Exp::new(1.0 / profile.outage_mean_ms).expect("positive mean"));
    // log-rate offset so the lognormal has the requested mean
    let bias = -profile.log_sigma.powi(2) / 2.0;
    let pkts_per_ms = profile.mean_rate_bps / (mtu as f64 * 8.0) / 1e3;

    let mut x = profile.log_sigma * normal.sample(&mut rng);
    let mut next_outage = outage_gap.map(|g| g.sample(&mut rng));
    let mut outage_until = 0.0f64;
    let mut stamps = Vec::with_capacity((pkts_per_ms * duration_ms as f64) as usize + 1);
    for ms in 0..duration_ms {
        let t = ms as f64;
        x += -theta * x * dt + innovation * normal.sample(&mut rng);
        if let (Some(at), Some(len)) = (next_outage, &outage_len) {
            if t >= at {
                outage_until = t + len.sample(&mut rng);
                next_outage = outage_gap.map(|g| t + g.sample(&mut rng));
            }
        }
        if t < outage_until {
            continue;
        }
        let lambda = pkts_per_ms * (x + bias).exp();
        let n = if lambda > 0.0 {
            Poisson::new(lambda)
                .map(|p| p.sample(&mut rng) as u64)
                .unwrap_or(0)
        } else {
            0
        };
        stamps.extend(std::iter::repeat_n(ms, n as usize));
    }
    stamps.push(duration_ms);
    Trace::from_timestamps(&stamps)
}

/// The full suite, seeded per profile from `seed`.
pub fn cellular_suite(
    duration_ms: u64,
    mtu: u32,
    seed: u64,
) -> Result<Vec<(&'static str, Trace)>, LinkError> {
    CELLULAR_SUITE
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok((
                p.name,
                generate(p, duration_ms, mtu, seed ^ (i as u64 + 1))?,
            ))
        })
        .collect()
}
