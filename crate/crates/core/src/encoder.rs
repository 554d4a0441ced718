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

//! Parametric synthetic video encoder.
//!
//! Frame sizes follow the commanded target bitrate through a first-order
//! lag (separate time constants for rising and falling targets) and are
//! perturbed by mean-one lognormal noise:
//!
//! ```text
//! eff   <- target + (eff - target) * exp(-Δ / lag)
//! size   = max(min_frame_bytes, eff * Δ * noise / 8)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderPreset {
    /// Deterministic output: `noise_cv = 0`.
    Steady,
    #[default]
    LowMotion,
    HighMotion,
}

impl EncoderPreset {
    pub fn noise_cv(self) -> f64 {
        match self {
            EncoderPreset::Steady => 0.0,
            EncoderPreset::LowMotion => 0.3,
            EncoderPreset::HighMotion => 0.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub fps: f64,
    pub lag_up_s: f64,
    pub lag_down_s: f64,
    /// Overrides the preset's noise level when set.
    pub noise_cv: Option<f64>,
    pub min_frame_bytes: u32,
    pub preset: EncoderPreset,
    /// Bitrate of the first frame, before any target has been tracked.
    pub initial_bitrate_bps: Option<f64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            lag_up_s: 0.9,
            lag_down_s: 0.45,
            noise_cv: None,
            min_frame_bytes: 200,
            preset: EncoderPreset::LowMotion,
            initial_bitrate_bps: None,
        }
    }
}

impl EncoderConfig {
    pub fn with_preset(preset: EncoderPreset) -> Self {
        Self {
            preset,
            ..Self::default()
        }
    }

    /// Frame interval Δ in seconds.
    pub fn delta_s(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn delta_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    pub fn effective_noise_cv(&self) -> f64 {
        self.noise_cv.unwrap_or_else(|| self.preset.noise_cv())
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err("encoder.fps must be positive".into());
        }
        if !(self.lag_down_s >= 0.0) {
            return Err("encoder.lag_down_s must be non-negative".into());
        }
        if !(self.lag_up_s >= self.lag_down_s) {
            return Err("encoder.lag_up_s must be at least encoder.lag_down_s".into());
        }
        if !(self.effective_noise_cv() >= 0.0 && self.effective_noise_cv().is_finite()) {
            return Err("encoder.noise_cv must be non-negative".into());
        }
        Ok(())
    }
}

/// An encoded frame handed to the pacer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub read_time: SimTime,
    pub size_bytes: u32,
    pub target_bitrate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EncodeOutcome {
    Frame(Frame),
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("target bitrate must be a non-negative number, got {0}")]
    InvalidTarget(f64),
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    noise: Option<LogNormal<f64>>,
    rng: ChaCha8Rng,
    effective_bitrate: Option<f64>,
    paused: bool,
    encoded: u64,
    skipped: u64,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let cv = config.effective_noise_cv();
        let noise = (cv > 0.0).then(|| {
            let sigma2 = (1.0 + cv * cv).ln();
            LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("finite lognormal parameters")
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x22);
        Self {
            config,
            noise,
            rng,
            effective_bitrate: None,
            paused: false,
            encoded: 0,
            skipped: 0,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn effective_bitrate(&self) -> Option<f64> {
        self.effective_bitrate
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn pause(&mut self) {
        self.paused = true;
    }

    pub fn resume(&mut self) {
        self.paused = false;
    }

    pub fn encoded_frames(&self) -> u64 {
        self.encoded
    }

    pub fn skipped_frames(&self) -> u64 {
        self.skipped
    }

    /// Produces the frame for one camera tick. The tracker only advances on
    /// ticks that encode.
    pub fn encode(
        &mut self,
        frame_id: u64,
        target_bitrate: f64,
        now: SimTime,
    ) -> Result<EncodeOutcome, EncoderError> {
        if !(target_bitrate >= 0.0 && target_bitrate.is_finite()) {
            return Err(EncoderError::InvalidTarget(target_bitrate));
        }
        if self.paused || target_bitrate == 0.0 {
            self.skipped += 1;
            return Ok(EncodeOutcome::Skipped);
        }
        let delta = self.config.delta_s();
        let eff = match self.effective_bitrate {
            None => self.config.initial_bitrate_bps.unwrap_or(target_bitrate),
            Some(prev) => {
                let lag = if target_bitrate >= prev {
                    self.config.lag_up_s
                } else {
                    self.config.lag_down_s
                };
                track(prev, target_bitrate, delta, lag)
            }
        };
        self.effective_bitrate = Some(eff);
        let noise = match &self.noise {
            Some(d) => d.sample(&mut self.rng),
            None => 1.0,
        };
        let bytes = (eff * delta * noise / 8.0).round();
        let size = bytes
            .max(self.config.min_frame_bytes as f64)
            .min(u32::MAX as f64) as u32;
        self.encoded += 1;
        Ok(EncodeOutcome::Frame(Frame {
            frame_id,
            read_time: now,
            size_bytes: size.max(1),
            target_bitrate,
        }))
    }
}

/// One step of first-order tracking over `dt` seconds with time constant `lag`.
pub fn track(current: f64, target: f64, dt: f64, lag: f64) -> f64 {
    if lag <= 0.0 {
        return target;
    }
    target + (current - target) * (-dt / lag).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steady(lag: f64) -> Encoder {
        let cfg = EncoderConfig {
            lag_up_s: lag,
            lag_down_s: lag,
            preset: EncoderPreset::Steady,
            min_frame_bytes: 1,
            ..EncoderConfig::default()
        };
        Encoder::new(cfg, 1)
    }

    fn size(out: EncodeOutcome) -> Option<u32> {
        match out {
            EncodeOutcome::Frame(f) => Some(f.size_bytes),
            EncodeOutcome::Skipped => None,
        }
    }

    #[test]
    fn exact_size_without_noise_or_lag() {
        let mut enc = steady(0.0);
        let out = enc.encode(0, 1.5e6, SimTime::ZERO).unwrap();
        assert_eq!(size(out), Some(6250));
    }

    #[test]
    fn zero_target_and_pause_skip() {
        let mut enc = steady(0.0);
        assert_eq!(
            enc.encode(0, 0.0, SimTime::ZERO).unwrap(),
            EncodeOutcome::Skipped
        );
        enc.pause();
        let mut skipped = 0;
        for i in 1..=3 {
            if enc.encode(i, 1e6, SimTime::ZERO).unwrap() == EncodeOutcome::Skipped {
                skipped += 1;
            }
        }
        assert_eq!(skipped, 3);
        enc.resume();
        enc.resume();
        assert!(size(enc.encode(4, 1e6, SimTime::ZERO).unwrap()).is_some());
        assert_eq!(enc.encoded_frames() + enc.skipped_frames(), 5);
    }

    #[test]
    fn negative_target_is_rejected() {
        let mut enc = steady(0.0);
        assert!(enc.encode(0, -1.0, SimTime::ZERO).is_err());
        assert!(enc.encode(0, f64::NAN, SimTime::ZERO).is_err());
    }

    #[test]
    fn alternating_pause_halves_frame_rate() {
        let mut enc = steady(0.0);
        let mut encoded = 0;
        for i in 0..300 {
            if i % 2 == 0 {
                enc.resume();
            } else {
                enc.pause();
            }
            if size(enc.encode(i, 1e6, SimTime::ZERO).unwrap()).is_some() {
                encoded += 1;
            }
        }
        assert_eq!(encoded, 150);
    }

    #[test]
    fn lag_shrinks_the_gap_monotonically() {
        let mut enc = steady(0.9);
        enc.encode(0, 5e5, SimTime::ZERO).unwrap();
        let mut gap = f64::INFINITY;
        for i in 1..200 {
            enc.encode(i, 2e6, SimTime::ZERO).unwrap();
            let g = (enc.effective_bitrate().unwrap() - 2e6).abs();
            assert!(g < gap || g == 0.0);
            gap = g;
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let run = |seed| {
            let mut enc = Encoder::new(EncoderConfig::default(), seed);
            (0..50)
                .map(|i| size(enc.encode(i, 1e6, SimTime::ZERO).unwrap()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
