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

//! Small statistical building blocks shared by the controller, the
//! congestion controllers and the post-run metrics.

use std::collections::VecDeque;
use std::time::Duration;

use crate::scalar::{cmp_nan_last, Scalar};
use crate::time::SimTime;

/// Percentile by linear interpolation between the closest ranks.
///
/// For `n` values sorted ascending the fractional rank is `q * (n - 1)`
/// (zero based) and the result interpolates between the two neighbouring
/// order statistics. This is the estimator numpy calls `linear`.
///
/// Returns `None` for an empty input, a NaN value, or `q` outside `[0, 1]`.
/// The input slice is reordered in place.
pub fn percentile_in_place<S: Scalar>(values: &mut [S], q: S) -> Option<S> {
    let n = values.len();
    if n == 0 || !(q >= S::zero() && q <= S::one()) || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let rank = q * S::from_count(n - 1);
    let lo = rank.floor().to_usize().unwrap_or(0).min(n - 1);
    let frac = rank - S::from_count(lo);

    let (_, lo_val, upper) = values.select_nth_unstable_by(lo, cmp_nan_last);
    let lo_val = *lo_val;
    if frac == S::zero() || upper.is_empty() {
        return Some(lo_val);
    }
    // The next order statistic is the minimum of the upper partition.
    let hi_val = upper
        .iter()
        .copied()
        .fold(S::infinity(), |acc, v| if v < acc { v } else { acc });
    Some(lo_val + frac * (hi_val - lo_val))
}

/// Percentile of an unsorted slice; copies the input.
pub fn percentile<S: Scalar>(values: &[S], q: S) -> Option<S> {
    let mut buf = values.to_vec();
    percentile_in_place(&mut buf, q)
}

/// Percentile of an already sorted slice. Cheaper when several
/// percentiles of the same data are needed.
pub fn percentile_sorted<S: Scalar>(sorted: &[S], q: S) -> Option<S> {
    let n = sorted.len();
    if n == 0 || !(q >= S::zero() && q <= S::one()) {
        return None;
    }
    let rank = q * S::from_count(n - 1);
    let lo = rank.floor().to_usize().unwrap_or(0).min(n - 1);
    let frac = rank - S::from_count(lo);
    if frac == S::zero() || lo + 1 >= n {
        return Some(sorted[lo]);
    }
    Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Sorts a vector of floats ascending, NaN last.
pub fn sort_floats<S: Scalar>(values: &mut [S]) {
    values.sort_by(cmp_nan_last);
}

pub fn mean<S: Scalar>(values: &[S]) -> Option<S> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(S::zero(), |acc, &v| acc + v);
    Some(sum / S::from_count(values.len()))
}

/// Exponentially weighted moving average: `v <- (1 - w) * v + w * sample`.
#[derive(Clone, Copy, Debug)]
pub struct Ewma<S: Scalar = f64> {
    weight: S,
    value: Option<S>,
}

impl<S: Scalar> Ewma<S> {
    pub fn new(weight: S) -> Self {
        Self {
            weight,
            value: None,
        }
    }

    /// Starts from `value` instead of adopting the first sample.
    pub fn with_initial(weight: S, value: S) -> Self {
        Self {
            weight,
            value: Some(value),
        }
    }

    pub fn update(&mut self, sample: S) -> S {
        let next = match self.value {
            None => sample,
            Some(v) => (S::one() - self.weight) * v + self.weight * sample,
        };
        self.value = Some(next);
        next
    }

    pub fn get(&self) -> Option<S> {
        self.value
    }

    pub fn set(&mut self, value: S) {
        self.value = Some(value);
    }
}

/// Minimum of samples seen within a sliding time window.
///
/// Keeps a monotone deque so updates and queries are amortized O(1). The
/// newest sample is always retained so the filter never goes empty once fed.
#[derive(Clone, Debug, Default)]
pub struct WindowedMin {
    samples: VecDeque<(SimTime, Duration)>,
}

impl WindowedMin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, now: SimTime, sample: Duration) {
        while matches!(self.samples.back(), Some(&(_, v)) if v >= sample) {
            self.samples.pop_back();
        }
        self.samples.push_back((now, sample));
    }

    /// Minimum over samples taken in `(now - window, now]`. Samples that fall
    /// out of the window are discarded, so callers should use one filter per
    /// window length.
    pub fn get(&mut self, now: SimTime, window: Duration) -> Option<Duration> {
        while self.samples.len() > 1 && self.samples[0].0 + window <= now {
            self.samples.pop_front();
        }
        self.samples.front().map(|&(_, v)| v)
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// Sum of byte counts in a trailing time window, exact for any window up
/// to `horizon`.
#[derive(Clone, Debug)]
pub struct SlidingSum {
    horizon: Duration,
    // (time, cumulative bytes including this entry)
    entries: VecDeque<(SimTime, u64)>,
    // cumulative bytes of everything evicted so far
    base: u64,
    total: u64,
}

impl SlidingSum {
    pub fn new(horizon: Duration) -> Self {
        Self {
            horizon,
            entries: VecDeque::new(),
            base: 0,
            total: 0,
        }
    }

    pub fn record(&mut self, now: SimTime, bytes: u64) {
        self.total += bytes;
        self.entries.push_back((now, self.total));
        let cutoff = now.saturating_sub(self.horizon);
        while let Some(&(t, cum)) = self.entries.front() {
            if t >= cutoff {
                break;
            }
            self.base = cum;
            self.entries.pop_front();
        }
    }

    /// Bytes recorded at times in `(now - window, now]`. A window longer than
    /// the horizon is truncated to it.
    pub fn sum(&self, now: SimTime, window: Duration) -> u64 {
        let window = window.min(self.horizon);
        let cum_at = |t: SimTime| {
            let idx = self.entries.partition_point(|&(et, _)| et <= t);
            if idx == 0 {
                self.base
            } else {
                self.entries[idx - 1].1
            }
        };
        if now.as_micros() < window.as_micros() as u64 {
            return cum_at(now) - self.base;
        }
        cum_at(now) - cum_at(now.saturating_sub(window))
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle_percentile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = q * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    }

    #[test]
    fn percentile_ten_values() {
        let v = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0, 24.0, 26.0, 66.0];
        // rank 8.1 between 26 and 66
        let p: f64 = percentile(&v, 0.9).unwrap();
        assert!((p - 30.0).abs() < 1e-12, "{p}");
        assert_eq!(percentile(&v, 0.0), Some(10.0));
        assert_eq!(percentile(&v, 1.0), Some(66.0));
        assert_eq!(percentile(&v, 0.5), Some(19.0));
    }

    #[test]
    fn percentile_edge_cases() {
        assert_eq!(percentile::<f64>(&[], 0.5), None);
        assert_eq!(percentile(&[3.0], 0.9), Some(3.0));
        assert_eq!(percentile(&[1.0, f64::NAN], 0.5), None);
        assert_eq!(percentile(&[1.0], 1.5), None);
        let single: [f32; 2] = [1.0, 3.0];
        assert_eq!(percentile(&single, 0.5), Some(2.0));
    }

    proptest! {
        #[test]
        fn selection_matches_full_sort(
            values in proptest::collection::vec(-1e6f64..1e6, 1..200),
            q in 0.0f64..=1.0,
        ) {
            let fast = percentile(&values, q).unwrap();
            prop_assert_eq!(fast, oracle_percentile(&values, q));
            let mut sorted = values.clone();
            sort_floats(&mut sorted);
            prop_assert_eq!(percentile_sorted(&sorted, q).unwrap(), fast);
        }
    }

    #[test]
    fn ewma_steps() {
        let mut e = Ewma::with_initial(0.5, 1.0);
        assert_eq!(e.update(0.5), 0.75);
        let mut fresh = Ewma::new(0.125);
        assert_eq!(fresh.update(40.0), 40.0);
    }

    #[test]
    fn windowed_min_expires() {
        let mut f = WindowedMin::new();
        let w = Duration::from_millis(100);
        f.update(SimTime::from_millis(0), Duration::from_millis(5));
        f.update(SimTime::from_millis(50), Duration::from_millis(9));
        assert_eq!(
            f.get(SimTime::from_millis(60), w),
            Some(Duration::from_millis(5))
        );
        assert_eq!(
            f.get(SimTime::from_millis(120), w),
            Some(Duration::from_millis(9))
        );
        // last sample retained even when stale
        assert_eq!(
            f.get(SimTime::from_millis(900), w),
            Some(Duration::from_millis(9))
        );
    }

    #[test]
    fn sliding_sum_windows() {
        let mut s = SlidingSum::new(Duration::from_secs(1));
        for i in 0..20u64 {
            s.record(SimTime::from_millis(i * 100), 10);
        }
        let now = SimTime::from_millis(1900);
        assert_eq!(s.sum(now, Duration::from_millis(250)), 30);
        assert_eq!(s.sum(now, Duration::from_secs(1)), 100);
        assert_eq!(s.sum(now, Duration::from_secs(5)), 100);
        assert_eq!(s.total(), 200);
    }
}
