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

//! Simulation configuration.
//!
//! Configs are TOML documents whose tables mirror the component configs.
//! Individual values can be overridden by dotted key (`controller.P_ms=20`);
//! an override takes the type of the value it replaces.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::cca::CcaConfig;
use crate::controller::ControllerConfig;
use crate::encoder::EncoderConfig;
use crate::link::{self, LinkError, LinkKind, LinkModel, LinkShape, RateSegment, Trace};
use crate::transport::{DummyConfig, PacerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("config key `{key}`: {reason}")]
    Key { key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub kind: LinkKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    pub owd_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_bytes: Option<u64>,
    pub mtu: u32,
    pub segments: Vec<RateSegment>,
    pub mean_rate_bps: f64,
    pub loss_prob: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            kind: LinkKind::PiecewiseConstant,
            trace_path: None,
            owd_ms: 25.0,
            buffer_bytes: None,
            mtu: link::DEFAULT_MTU,
            segments: vec![RateSegment::new(120_000.0, 2e6)],
            mean_rate_bps: 2e6,
            loss_prob: 0.0,
        }
    }
}

impl LinkConfig {
    pub fn constant(rate_bps: f64) -> Self {
        Self {
            kind: LinkKind::PiecewiseConstant,
            segments: vec![RateSegment::new(3_600_000.0, rate_bps)],
            ..Self::default()
        }
    }

    pub fn piecewise(segments: Vec<RateSegment>) -> Self {
        Self {
            kind: LinkKind::PiecewiseConstant,
            segments,
            ..Self::default()
        }
    }

    pub fn trace(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: LinkKind::TraceDriven,
            trace_path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn poisson(mean_rate_bps: f64, loss_prob: f64) -> Self {
        Self {
            kind: LinkKind::PoissonRate,
            mean_rate_bps,
            loss_prob,
            ..Self::default()
        }
    }

    /// Builds the link model, reading the trace file if needed.
    pub fn build(&self) -> Result<LinkModel, ConfigError> {
        let shape = match self.kind {
            LinkKind::TraceDriven => {
                let path = self.trace_path.as_ref().ok_or_else(|| ConfigError::Key {
                    key: "link.trace_path".into(),
                    reason: "required for trace-driven links".into(),
                })?;
                let text = std::fs::read_to_string(path).map_err(|source| LinkError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                LinkShape::TraceDriven(Trace::parse(&text)?)
            }
            LinkKind::PiecewiseConstant => LinkShape::PiecewiseConstant(self.segments.clone()),
            LinkKind::PoissonRate => LinkShape::PoissonRate {
                mean_rate_bps: self.mean_rate_bps,
            },
        };
        if !(self.owd_ms >= 0.0 && self.owd_ms.is_finite()) {
            return Err(ConfigError::Key {
                key: "link.owd_ms".into(),
                reason: "must be non-negative".into(),
            });
        }
        let model = LinkModel {
            shape,
            owd: Duration::from_secs_f64(self.owd_ms / 1e3),
            buffer_bytes: self.buffer_bytes,
            mtu: self.mtu,
            loss_prob: self.loss_prob,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Loss timeout as a multiple of srtt.
    pub loss_timeout_srtt: f64,
    /// Keep the per-event log.
    pub event_log: bool,
    /// Width of the wire-byte bins.
    pub bin_ms: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            loss_timeout_srtt: 4.0,
            event_log: false,
            bin_ms: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seed: u64,
    /// Replace the video source by an always-full queue of mtu packets.
    pub backlogged_source: bool,
    pub link: LinkConfig,
    pub cca: CcaConfig,
    pub encoder: EncoderConfig,
    pub controller: ControllerConfig,
    pub pacer: PacerConfig,
    pub dummy: DummyConfig,
    pub engine: EngineConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_s: 120.0,
            seed: 1,
            backlogged_source: false,
            link: LinkConfig::default(),
            cca: CcaConfig::default(),
            encoder: EncoderConfig::default(),
            controller: ControllerConfig::default(),
            pacer: PacerConfig::default(),
            dummy: DummyConfig::default(),
            engine: EngineConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn from_table(table: Table) -> Result<Self, ConfigError> {
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes to a TOML table")
    }

    pub fn duration(&self) -> Duration {
        Duration::from_secs_f64(self.duration_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = ConfigError::Invalid;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be positive".into()));
        }
        self.cca.validate().map_err(invalid)?;
        self.encoder.validate().map_err(invalid)?;
        self.controller.validate().map_err(invalid)?;
        if self.pacer.mtu == 0 {
            return Err(invalid("pacer.mtu must be positive".into()));
        }
        self.dummy.validate(self.pacer.mtu).map_err(invalid)?;
        if !(self.engine.loss_timeout_srtt > 1.0) {
            return Err(invalid("engine.loss_timeout_srtt must exceed 1".into()));
        }
        if self.engine.bin_ms == 0 {
            return Err(invalid("engine.bin_ms must be positive".into()));
        }
        Ok(())
    }

    /// Validates and builds the link model.
    pub fn build_link(&self) -> Result<Arc<LinkModel>, ConfigError> {
        self.validate()?;
        Ok(Arc::new(self.link.build()?))
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut table = self.to_table();
        set_dotted(&mut table, key, value)?;
        *self = Self::from_table(table).map_err(|e| ConfigError::Key {
            key: key.to_string(),
            reason: e.to_string(),
        })?;
        Ok(())
    }

    /// Applies overrides from environment variables: `PREFIX_A__B=v` sets
    /// key `a.b`, matched case-insensitively.
    pub fn apply_env<I>(&mut self, prefix: &str, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut pairs: Vec<_> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(prefix)?.strip_prefix('_')?;
                Some((rest.split("__").collect::<Vec<_>>().join("."), v))
            })
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }
}

/// Every value-bearing dotted key of a table.
pub fn keys(table: &Table) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(prefix: &str, t: &Table, out: &mut Vec<String>) {
        for (k, v) in t {
            let key = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match v {
                Value::Table(inner) => walk(&key, inner, out),
                _ => out.push(key),
            }
        }
    }
    walk("", table, &mut out);
    out
}

fn find_key<'a>(table: &'a Table, name: &str) -> Option<&'a String> {
    table
        .keys()
        .find(|k| k.as_str() == name)
        .or_else(|| table.keys().find(|k| k.eq_ignore_ascii_case(name)))
}

fn set_dotted(table: &mut Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |reason: &str| ConfigError::Key {
        key: key.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let name = find_key(cur, part)
            .cloned()
            .ok_or_else(|| err("unknown key"))?;
        cur = match cur.get_mut(&name) {
            Some(Value::Table(t)) => t,
            _ => return Err(err("not a table")),
        };
    }
    let leaf = parts[parts.len() - 1];
    let name = find_key(cur, leaf)
        .cloned()
        .unwrap_or_else(|| leaf.to_ascii_lowercase());
    let value = match cur.get(&name) {
        Some(existing) => parse_like(existing, raw).map_err(|r| err(&r))?,
        None => infer_value(raw),
    };
    cur.insert(name, value);
    Ok(())
}

fn parse_like(existing: &Value, raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    match existing {
        Value::Integer(_) => raw
            .parse::<i64>()
            .map(Value::Integer)
            .map_err(|_| format!("expected an integer, got `{raw}`")),
        Value::Float(_) => raw
            .parse::<f64>()
            .map(Value::Float)
            .map_err(|_| format!("expected a number, got `{raw}`")),
        Value::Boolean(_) => match raw.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(Value::Boolean(true)),
            "false" | "0" | "no" | "off" => Ok(Value::Boolean(false)),
            _ => Err(format!("expected a boolean, got `{raw}`")),
        },
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Array(_) | Value::Table(_) | Value::Datetime(_) => {
            let wrapped = format!("v = {raw}");
            let mut t: Table = wrapped
                .parse()
                .map_err(|e: toml::de::Error| e.message().to_string())?;
            t.remove("v").ok_or_else(|| "missing value".to_string())
        }
    }
}

fn infer_value(raw: &str) -> Value {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        Value::Boolean(b)
    } else {
        Value::String(raw.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = SimConfig::default();
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_document_uses_defaults() {
        let cfg = SimConfig::from_toml_str(
            "duration_s = 10\n[controller]\nP_ms = 20\n[link]\nkind = \"trace\"\ntrace_path = \"x\"\n",
        )
        .unwrap();
        assert_eq!(cfg.controller.p_ms, 20.0);
        assert_eq!(cfg.duration_s, 10.0);
        assert_eq!(cfg.link.kind, LinkKind::TraceDriven);
        assert_eq!(cfg.controller.lambda, 0.9);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = SimConfig::from_toml_str("[controller]\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let mut cfg = SimConfig::default();
        let e = cfg.set("controller.bogus", "1").unwrap_err();
        assert!(e.to_string().contains("controller.bogus"), "{e}");
        let e = cfg.set("nosuch.table", "1").unwrap_err();
        assert!(e.to_string().contains("nosuch.table"), "{e}");
    }

    #[test]
    fn overrides_follow_existing_types() {
        let mut cfg = SimConfig::default();
        cfg.set("controller.P_ms", "66").unwrap();
        cfg.set("cca.algorithm", "rocc").unwrap();
        cfg.set("dummy.enabled", "false").unwrap();
        cfg.set("link.buffer_bytes", "30000").unwrap();
        cfg.set("seed", "9").unwrap();
        cfg.set("link.segments", "[{duration_ms = 1000, rate_bps = 5e6}]")
            .unwrap();
        assert_eq!(cfg.controller.p_ms, 66.0);
        assert_eq!(cfg.cca.algorithm, crate::cca::CcaAlgorithm::Rocc);
        assert!(!cfg.dummy.enabled);
        assert_eq!(cfg.link.buffer_bytes, Some(30000));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.link.segments, vec![RateSegment::new(1000.0, 5e6)]);
        assert!(cfg.set("seed", "nine").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = SimConfig::default();
        let vars = vec![
            ("VIDEOCC_CONTROLLER__P_MS".to_string(), "20".to_string()),
            ("VIDEOCC_DURATION_S".to_string(), "5".to_string()),
            ("OTHER_SEED".to_string(), "3".to_string()),
        ];
        cfg.apply_env("VIDEOCC", vars).unwrap();
        assert_eq!(cfg.controller.p_ms, 20.0);
        assert_eq!(cfg.duration_s, 5.0);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = SimConfig::default();
        cfg.controller.lambda = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.link.kind = LinkKind::TraceDriven;
        assert!(cfg.build_link().is_err());
    }
}
