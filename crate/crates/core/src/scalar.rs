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

//! Scalar abstraction for the numeric parts of the crate.
//!
//! The percentile estimator, the bitrate-fraction solver and the ideal
//! transmission-time analysis are written against [`Scalar`] so they can be
//! run in `f32` or `f64`. The simulator itself runs in `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the generic numeric code.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

/// `partial_cmp` that orders NaN last, for sorting slices of floats.
pub(crate) fn cmp_nan_last<S: Scalar>(a: &S, b: &S) -> std::cmp::Ordering {
    match a.partial_cmp(b) {
        Some(o) => o,
        None => match (a.is_nan(), b.is_nan()) {
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Equal,
        },
    }
}
