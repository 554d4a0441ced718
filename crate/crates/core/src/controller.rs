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

//! Encoder rate controller.
//!
//! Every `T` seconds the controller picks the fraction `α` of the
//! congestion controller's rate to hand to the encoder. Each frame's service
//! time `d_i` is rescaled to what it would have been at the current rate,
//! `d_i * cc_rate / tr_i`, and `α` is chosen so that the `λ`-percentile of
//! the rescaled times lands on the target `P`:
//!
//! ```text
//! α = min(P / Percentile_λ(d_i * cc_rate / tr_i), 1)
//! ```
//!
//! The raw value is smoothed by an EWMA and clamped to `[alpha_floor, 1]`.
//! A separate safeguard pauses the encoder once the pacer head has waited
//! longer than `τ` and resumes it when the pacer drains.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::stats::percentile_in_place;
use crate::time::SimTime;
use crate::transport::ServiceTimeSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub lambda: f64,
    #[serde(rename = "P_ms", alias = "p_ms")]
    pub p_ms: f64,
    #[serde(rename = "T_s", alias = "t_s")]
    pub t_s: f64,
    pub tau_ms: f64,
    pub ewma_weight: f64,
    pub alpha_floor: f64,
    pub bitrate_selection_enabled: bool,
    pub safeguard_enabled: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            p_ms: 33.0,
            t_s: 1.0,
            tau_ms: 33.0,
            ewma_weight: 0.5,
            alpha_floor: 0.1,
            bitrate_selection_enabled: true,
            safeguard_enabled: true,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err("controller.lambda must be in (0, 1)".into());
        }
        if !(self.p_ms > 0.0) {
            return Err("controller.P_ms must be positive".into());
        }
        if !(self.t_s > 0.0) {
            return Err("controller.T_s must be positive".into());
        }
        if !(self.tau_ms > 0.0) {
            return Err("controller.tau_ms must be positive".into());
        }
        if !(self.ewma_weight > 0.0 && self.ewma_weight <= 1.0) {
            return Err("controller.ewma_weight must be in (0, 1]".into());
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor <= 1.0) {
            return Err("controller.alpha_floor must be in (0, 1]".into());
        }
        Ok(())
    }

    pub fn update_interval(&self) -> Duration {
        Duration::from_secs_f64(self.t_s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("sample for frame {frame_id} has non-positive target bitrate")]
    NonPositiveTarget { frame_id: u64 },
    #[error("congestion-control rate must be positive")]
    NonPositiveRate,
}

/// Raw `α` from a sample set, without smoothing or the lower clamp. Returns
/// `current` when there are no samples.
pub fn compute_alpha<S: Scalar>(
    samples: &[ServiceTimeSample<S>],
    cc_rate: S,
    lambda: S,
    target_ms: S,
    current: S,
) -> Result<S, ControllerError> {
    if !(cc_rate > S::zero()) {
        return Err(ControllerError::NonPositiveRate);
    }
    if let Some(bad) = samples.iter().find(|s| !(s.target_bps > S::zero())) {
        return Err(ControllerError::NonPositiveTarget {
            frame_id: bad.frame_id,
        });
    }
    let mut normalized: Vec<S> = samples
        .iter()
        .map(|s| s.counterfactual_ms(cc_rate))
        .collect();
    let Some(pct) = percentile_in_place(&mut normalized, lambda) else {
        return Ok(current);
    };
    if !(pct > S::zero()) {
        return Ok(S::one());
    }
    Ok((target_ms / pct).min(S::one()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SafeguardAction {
    Pause,
    Resume,
    NoChange,
}

pub fn safeguard_check(
    oldest_age: Duration,
    paused: bool,
    pacer_empty: bool,
    tau: Duration,
) -> SafeguardAction {
    if !paused && oldest_age > tau {
        SafeguardAction::Pause
    } else if paused && pacer_empty {
        SafeguardAction::Resume
    } else {
        SafeguardAction::NoChange
    }
}

/// Result of one periodic update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaUpdate<S> {
    pub time: SimTime,
    pub raw: S,
    pub alpha: S,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct RateController<S: Scalar = f64> {
    lambda: S,
    target_ms: S,
    window: Duration,
    weight: S,
    floor: S,
    bitrate_selection: bool,
    samples: VecDeque<ServiceTimeSample<S>>,
    alpha: S,
    last_update: SimTime,
}

impl<S: Scalar> RateController<S> {
    pub fn new(config: &ControllerConfig) -> Self {
        Self {
            lambda: S::lit(config.lambda),
            target_ms: S::lit(config.p_ms),
            window: config.update_interval(),
            weight: S::lit(config.ewma_weight),
            floor: S::lit(config.alpha_floor),
            bitrate_selection: config.bitrate_selection_enabled,
            samples: VecDeque::new(),
            alpha: S::one(),
            last_update: SimTime::ZERO,
        }
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn push_sample(&mut self, sample: ServiceTimeSample<S>) {
        self.samples.push_back(sample);
    }

    fn evict(&mut self, now: SimTime) {
        while let Some(s) = self.samples.front() {
            if s.completion_time + self.window <= now {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    /// Periodic update: solves for the raw `α` over the samples of the last
    /// `T`, smooths and clamps it, then clears the window.
    pub fn on_update_tick(
        &mut self,
        cc_rate: S,
        now: SimTime,
    ) -> Result<AlphaUpdate<S>, ControllerError> {
        self.evict(now);
        let samples: Vec<_> = self.samples.drain(..).collect();
        let raw = compute_alpha(&samples, cc_rate, self.lambda, self.target_ms, self.alpha)?;
        if !samples.is_empty() {
            let smoothed = (S::one() - self.weight) * self.alpha + self.weight * raw;
            self.alpha = smoothed.max(self.floor).min(S::one());
        }
        self.last_update = now;
        Ok(AlphaUpdate {
            time: now,
            raw,
            alpha: self.alpha,
            samples: samples.len(),
        })
    }

    /// Target bitrate for the encoder at the current rate.
    pub fn target_bitrate(&self, cc_rate: S) -> S {
        if self.bitrate_selection {
            self.alpha * cc_rate
        } else {
            cc_rate
        }
    }
}
