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

//! Rate control for real-time video over delay-based congestion control.
//!
//! The crate simulates a sender that keeps its congestion controller fed
//! as if it were a backlogged flow: encoded video is paced out at the
//! controller's rate, padding fills the gaps, and the encoder target is a
//! fraction of that rate chosen so that a percentile of frame service
//! times stays at a configured target.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cca;
pub mod config;
pub mod controller;
pub mod encoder;
pub mod engine;
pub mod link;
pub mod metrics;
pub mod scalar;
pub mod stats;
pub mod time;
pub mod traces;
pub mod transport;

pub use config::{ConfigError, SimConfig};
pub use engine::{run, RunResult};
pub use scalar::Scalar;
pub use time::SimTime;

/// Double-precision instantiations used by the simulator.
pub type RateController = controller::RateController<f64>;
pub type AlphaUpdate = controller::AlphaUpdate<f64>;
pub type ServiceTimeSample = transport::ServiceTimeSample<f64>;
pub type CapacityCurve = metrics::CapacityCurve<f64>;
pub type TraceAnalysis = metrics::TraceAnalysis<f64>;
