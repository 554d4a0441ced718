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

//! Whole-run invariants of the simulator.

use std::sync::Arc;

use videocc::cca::CcaAlgorithm;
use videocc::config::LinkConfig;
use videocc::engine::{run_with_link, LogEntry, RunResult};
use videocc::link::{LinkModel, RateSegment};
use videocc::metrics::summarize;
use videocc::traces::{generate, CELLULAR_SUITE};
use videocc::{run, SimConfig};

fn cfg(duration_s: f64) -> SimConfig {
    SimConfig {
        duration_s,
        ..SimConfig::default()
    }
}

fn cellular(i: usize, duration_s: f64) -> Arc<LinkModel> {
    let t = generate(&CELLULAR_SUITE[i], (duration_s * 1e3) as u64, 1500, 77).unwrap();
    Arc::new(LinkModel::trace(t))
}

#[test]
fn events_are_time_ordered_and_inflight_drains() {
    let mut c = cfg(30.0);
    c.engine.event_log = true;
    let r = run_with_link(&c, cellular(0, 30.0));
    assert!(r.time_ordered);
    let log = r.events.as_ref().unwrap();
    assert!(log.windows(2).all(|w| w[0].time_us() <= w[1].time_us()));
    assert_eq!(r.final_inflight, 0);
    assert_eq!(r.cca.losses, 0);
    assert!(!log.iter().any(|e| matches!(e, LogEntry::Loss { .. })));
}

#[test]
fn identical_config_gives_identical_logs() {
    let mut c = cfg(20.0);
    c.engine.event_log = true;
    c.link = LinkConfig::poisson(3e6, 0.01);
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert_eq!(format!("{:?}", a.events), format!("{:?}", b.events));
    c.seed += 1;
    let d = run(&c).unwrap();
    assert_ne!(format!("{:?}", a.events), format!("{:?}", d.events));
}

#[test]
fn declared_losses_match_injected_drops() {
    let mut c = cfg(60.0);
    c.link = LinkConfig::poisson(4e6, 0.01);
    let r = run(&c).unwrap();
    let injected = r.link_counters.random_lost + r.link_counters.tail_dropped;
    let declared = r.cca.losses as f64;
    assert!(injected > 50);
    assert!(
        (declared - injected as f64).abs() <= 0.2 * injected as f64,
        "{declared} vs {injected}"
    );
    assert_eq!(r.final_inflight, 0);
}

#[test]
fn every_packet_is_accounted_for() {
    let mut c = cfg(30.0);
    c.link = LinkConfig {
        buffer_bytes: Some(30_000),
        ..LinkConfig::constant(2e6)
    };
    let r = run(&c).unwrap();
    let l = r.link_counters;
    assert_eq!(l.enqueued, l.delivered + l.random_lost);
    assert_eq!(r.packets.len() as u64, l.enqueued + l.tail_dropped);
    let lost = r.packets.iter().filter(|p| p.declared_lost).count() as u64;
    assert_eq!(lost, r.cca.losses);
    assert_eq!(r.final_inflight, 0);
}

#[test]
fn backlogged_utilization_for_both_controllers() {
    for algorithm in [CcaAlgorithm::Copa, CcaAlgorithm::Rocc] {
        let mut c = cfg(60.0);
        c.backlogged_source = true;
        c.cca.algorithm = algorithm;
        c.link = LinkConfig::constant(2e6);
        let r = run(&c).unwrap();
        let tail: u64 = r.delivered_bins[r.delivered_bins.len() - 300..]
            .iter()
            .sum();
        let util = tail as f64 * 8.0 / (2e6 * 30.0);
        assert!(util >= 0.85, "{algorithm:?}: {util}");
    }
}

#[test]
fn frame_records_follow_the_latency_convention() {
    let r = run_with_link(&cfg(60.0), cellular(5, 60.0));
    let frames = &r.frames;
    for (i, f) in frames.iter().enumerate() {
        match (f.display_time_ms, f.skipped || f.lost) {
            (Some(d), false) => assert_eq!(f.latency_ms, Some(d - f.read_time_ms)),
            _ => {
                let next = frames[i + 1..]
                    .iter()
                    .find_map(|g| g.display_time_ms.filter(|_| !g.skipped && !g.lost));
                assert_eq!(f.latency_ms, next.map(|d| d - f.read_time_ms));
            }
        }
    }
    let ticks = (60.0 * 30.0f64).ceil() as usize;
    assert_eq!(frames.len(), ticks);
}

fn outage_run(safeguard: bool) -> RunResult {
    let mut c = cfg(30.0);
    c.controller.safeguard_enabled = safeguard;
    c.link = LinkConfig::piecewise(vec![
        RateSegment::new(10_000.0, 2e6),
        RateSegment::new(2_000.0, 0.0),
        RateSegment::new(18_000.0, 2e6),
    ]);
    run(&c).unwrap()
}

fn frames_between(r: &RunResult, from_ms: f64, to_ms: f64) -> usize {
    r.frames
        .iter()
        .filter(|f| f.display_time_ms.is_some_and(|d| d >= from_ms && d < to_ms))
        .count()
}

#[test]
fn safeguard_pauses_through_an_outage_and_recovers() {
    let r = outage_run(true);
    let tau = r.config.controller.tau_ms;
    let violations = r
        .frames
        .iter()
        .filter(|f| !f.skipped && f.pacer_head_age_ms > tau)
        .count();
    assert_eq!(violations, 0);
    assert!(r.pauses >= 1);
    let before = frames_between(&r, 5_000.0, 10_000.0);
    let during = r
        .frames
        .iter()
        .filter(|f| f.read_time_ms >= 10_000.0 && f.read_time_ms < 12_000.0 && !f.skipped)
        .count();
    let after = frames_between(&r, 20_000.0, 25_000.0);
    assert!(during < 60 / 4, "encoded {during} frames during the outage");
    assert!(before > 120 && after > 120, "{before} {after}");
    // without the safeguard the outage backlog is encoded into
    let unguarded = outage_run(false);
    assert!(unguarded
        .frames
        .iter()
        .any(|f| !f.skipped && f.pacer_head_age_ms > tau));
}

#[test]
fn summaries_respect_their_bounds() {
    for i in [1, 6, 9] {
        let r = run_with_link(&cfg(40.0), cellular(i, 40.0));
        let s = summarize(&r).unwrap();
        assert!(
            s.utilization >= 0.0 && s.utilization <= 1.0 + 1e-3,
            "{}",
            s.utilization
        );
        assert!((0.0..=1.0).contains(&s.padding_ratio));
        let l = s.latency_ms;
        assert!(l.p5 <= l.p25 && l.p25 <= l.p50 && l.p50 <= l.p75 && l.p75 <= l.p95);
        assert!(s.alpha_min >= r.config.controller.alpha_floor - 1e-12);
        assert!(s.frame_rate <= 30.0 + 1e-9);
    }
}
