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

//! Property tests across the component APIs.

use std::time::Duration;

use proptest::prelude::*;
use videocc::cca::rocc::Rocc;
use videocc::cca::{AckEvent, CcaAlgorithm, CcaConfig, CongestionController};
use videocc::encoder::{EncodeOutcome, Encoder, EncoderConfig};
use videocc::link::{LinkModel, RateSegment};
use videocc::metrics::{ideal_transmission_analysis, CapacityCurve, Percentiles};
use videocc::SimTime;

const MTU: u32 = 1500;

fn controller(algorithm: CcaAlgorithm) -> CongestionController {
    let cfg = CcaConfig {
        algorithm,
        ..CcaConfig::default()
    };
    CongestionController::new(&cfg, MTU)
}

#[derive(Clone, Debug)]
enum Op {
    Send(u32),
    Ack { rtt_ms: u16 },
    Lose,
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            4 => (1u32..=MTU).prop_map(Op::Send),
            4 => (5u16..400).prop_map(|rtt_ms| Op::Ack { rtt_ms }),
            1 => Just(Op::Lose),
        ],
        1..400,
    )
}

proptest! {
    #[test]
    fn window_and_rtt_invariants(seq in ops(), rocc in any::<bool>()) {
        let algorithm = if rocc { CcaAlgorithm::Rocc } else { CcaAlgorithm::Copa };
        let mut cc = controller(algorithm);
        let mut now = SimTime::ZERO;
        let mut next_id = 0u64;
        let mut sent: std::collections::VecDeque<(u64, u64, SimTime)> = Default::default();
        for op in seq {
            now += Duration::from_millis(1);
            let before = cc.inflight();
            match op {
                Op::Send(size) => {
                    cc.on_send(now, next_id, size as u64);
                    sent.push_back((next_id, size as u64, now));
                    next_id += 1;
                    prop_assert_eq!(cc.inflight(), before + size as u64);
                }
                Op::Ack { rtt_ms } => {
                    if let Some((id, size, at)) = sent.pop_front() {
                        now = now.max(at + Duration::from_millis(rtt_ms as u64));
                        let ack = AckEvent { packet_id: id, bytes_acked: size, send_time: at, recv_ack_time: now };
                        prop_assert!(cc.on_ack(&ack));
                        prop_assert_eq!(cc.inflight(), before - size);
                    }
                }
                Op::Lose => {
                    if let Some((id, size, _)) = sent.pop_front() {
                        prop_assert_eq!(cc.on_loss(id), Some(size));
                        prop_assert_eq!(cc.inflight(), before - size);
                    }
                }
            }
            let s = cc.state();
            prop_assert!(s.cwnd >= MTU as u64);
            if let (Some(min), Some(srtt)) = (s.rtt_min, s.srtt) {
                prop_assert!(min <= srtt);
            }
        }
    }

    #[test]
    fn rocc_window_equals_brute_force_sum(
        acks in prop::collection::vec((0u64..20_000, 1u64..=1500), 1..300),
        rtt_min_ms in 5u64..200,
        gamma in 0.1f64..2.0,
    ) {
        let mut acks = acks;
        acks.sort_by_key(|a| a.0);
        let headroom = 4 * MTU as u64;
        let rtt_min = Duration::from_millis(rtt_min_ms);
        let mut rocc = Rocc::new(gamma, headroom);
        let mut seen: Vec<(SimTime, u64)> = Vec::new();
        for (t_us, bytes) in acks {
            let now = SimTime::from_micros(t_us * 100);
            seen.push((now, bytes));
            let cwnd = rocc.on_ack(now, bytes, rtt_min);
            let window = rtt_min.mul_f64(1.0 + gamma);
            let brute: u64 = seen
                .iter()
                .filter(|(t, _)| *t + window > now && *t <= now)
                .map(|(_, b)| b)
                .sum();
            prop_assert_eq!(cwnd - headroom, brute);
        }
    }

    #[test]
    fn encoder_is_deterministic_and_accounts_skips(
        seed in any::<u64>(),
        schedule in prop::collection::vec((0.0f64..5e6, any::<bool>()), 1..200),
    ) {
        let cfg = EncoderConfig::default();
        let mut a = Encoder::new(cfg.clone(), seed);
        let mut b = Encoder::new(cfg.clone(), seed);
        for (k, &(target, pause)) in schedule.iter().enumerate() {
            let now = SimTime::from_secs_f64(k as f64 * cfg.delta_s());
            if pause { a.pause(); b.pause(); } else { a.resume(); b.resume(); }
            let x = a.encode(k as u64, target, now).unwrap();
            let y = b.encode(k as u64, target, now).unwrap();
            prop_assert_eq!(&x, &y);
            if let EncodeOutcome::Frame(f) = x {
                prop_assert!(f.size_bytes >= cfg.min_frame_bytes);
            }
        }
        prop_assert_eq!(a.encoded_frames() + a.skipped_frames(), schedule.len() as u64);
    }

    #[test]
    fn ideal_time_monotone_in_alpha(
        segs in prop::collection::vec((50.0f64..2000.0, 1e5f64..2e7), 1..8),
    ) {
        let link = LinkModel::piecewise(segs.iter().map(|&(d, r)| RateSegment::new(d, r)).collect());
        let grid = [0.25, 0.5, 0.75, 0.9, 1.0];
        let a = ideal_transmission_analysis::<f64>(&link, &grid, 1000.0 / 30.0, None).unwrap();
        for k in 0..a.t_samples[0].len() {
            for j in 1..grid.len() {
                prop_assert!(a.t_samples[j][k] >= a.t_samples[j - 1][k]);
            }
            prop_assert!(a.t_samples[0][k] > 0.0);
        }
        prop_assert!(a.p95_of_t.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn capacity_curve_matches_byte_integral(
        segs in prop::collection::vec((1.0f64..500.0, 0.0f64..2e7), 1..6),
        t in 0.0f64..5000.0,
    ) {
        let link = LinkModel::piecewise(segs.iter().map(|&(d, r)| RateSegment::new(d, r)).collect());
        prop_assume!(segs.iter().any(|s| s.1 > 0.0));
        let curve = CapacityCurve::<f64>::from_link(&link).unwrap();
        // oracle: integrate segment by segment, looping
        let period: f64 = segs.iter().map(|s| s.0).sum();
        let mut remaining = t;
        let mut bytes = 0.0;
        'outer: loop {
            for &(d, r) in &segs {
                let take = remaining.min(d);
                bytes += take * r / 8e3;
                remaining -= take;
                if remaining <= 0.0 { break 'outer; }
            }
            if period <= 0.0 { break; }
        }
        prop_assert!((curve.cumulative(t) - bytes).abs() <= 1e-6 * bytes.max(1.0));
    }

    #[test]
    fn summary_percentiles_are_ordered(values in prop::collection::vec(0.0f64..1e4, 1..300)) {
        let p = Percentiles::of(&values).unwrap();
        prop_assert!(p.p5 <= p.p25 && p.p25 <= p.p50 && p.p50 <= p.p75);
        prop_assert!(p.p75 <= p.p90 && p.p90 <= p.p95);
    }
}

#[test]
fn encoder_mean_tracks_target_within_three_standard_errors() {
    let cfg = EncoderConfig {
        lag_up_s: 0.0,
        lag_down_s: 0.0,
        noise_cv: Some(0.3),
        initial_bitrate_bps: Some(2e6),
        ..EncoderConfig::default()
    };
    let target = 2e6;
    let mut enc = Encoder::new(cfg.clone(), 11);
    let sizes: Vec<f64> = (0..1000u64)
        .map(
            |k| match enc.encode(k, target, SimTime::from_secs_f64(k as f64 * cfg.delta_s())) {
                Ok(EncodeOutcome::Frame(f)) => f.size_bytes as f64,
                other => panic!("unexpected {other:?}"),
            },
        )
        .collect();
    let n = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let sd = (sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected = target * cfg.delta_s() / 8.0;
    assert!(
        (mean - expected).abs() <= 3.0 * sd / n.sqrt(),
        "mean {mean} vs {expected}"
    );
}
