// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BudgetSpec, DegradationPolicy};
use crate::detection::{DedupPolicy, DetectorProfile};
use crate::inspect::DefectClass;
use crate::quant::ModelConfig;
use crate::summarize::SummarizerBinding;

pub const CONFIG_ENV: &str = "CULVERTD_CONFIG";

/// When deficiency records are handed to the summarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerPolicy {
    /// Records are summarized once the robot passes the end of their segment.
    pub segment_length_m: f64,
    /// Records at or above this confidence are summarized immediately.
    pub significance_threshold: f64,
    /// Classes summarized immediately regardless of confidence.
    pub critical_classes: Vec<DefectClass>,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        TriggerPolicy {
            segment_length_m: 6.0,
            significance_threshold: 0.9,
            critical_classes: vec![DefectClass::Holes, DefectClass::Fracture, DefectClass::Deformation],
        }
    }
}

impl TriggerPolicy {
    pub fn is_significant(&self, class: DefectClass, confidence: f64) -> bool {
        confidence >= self.significance_threshold || self.critical_classes.contains(&class)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.segment_length_m > 0.0 && self.segment_length_m.is_finite()) {
            return Err("segment length must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.significance_threshold) {
            return Err("significance threshold must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Nominal deployed configuration: INT8 language model with 67M trainable
/// adapter parameters.
pub fn default_model() -> ModelConfig {
    ModelConfig {
        name: "int8".into(),
        param_count: 67e6,
        latency_s: 2.3,
        memory_gb: 4.2,
        nlg_loss: 0.0,
        quality_ratio: None,
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub budgets: BudgetSpec,
    pub trigger: TriggerPolicy,
    pub dedup: DedupPolicy,
    pub degradation: DegradationPolicy,
    pub detector: DetectorProfile,
    pub summarizer: SummarizerBinding,
    pub model: ModelConfig,
    pub frame_queue_capacity: usize,
    pub telemetry_period_s: f64,
    pub bus_retain: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budgets: BudgetSpec::default(),
            trigger: TriggerPolicy::default(),
            dedup: DedupPolicy::default(),
            degradation: DegradationPolicy::default(),
            detector: DetectorProfile::noiseless(),
            summarizer: SummarizerBinding::default(),
            model: default_model(),
            frame_queue_capacity: 8,
            telemetry_period_s: 1.0,
            bus_retain: 4096,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = ConfigError::Invalid;
        self.budgets.validate().map_err(inv)?;
        self.trigger.validate().map_err(inv)?;
        self.detector.validate().map_err(inv)?;
        self.summarizer.validate().map_err(|e| inv(e.to_string()))?;
        if !(self.dedup.proximity_threshold_m >= 0.0) {
            return Err(inv("proximity threshold must be non-negative".into()));
        }
        if self.frame_queue_capacity == 0 {
            return Err(inv("frame queue capacity must be at least 1".into()));
        }
        if !(self.telemetry_period_s > 0.0 && self.telemetry_period_s <= 1.0) {
            return Err(inv("telemetry period must lie in (0, 1] seconds".into()));
        }
        if !(self.degradation.window_s >= self.telemetry_period_s) || !(0.0..1.0).contains(&self.degradation.hysteresis) {
            return Err(inv("degradation window must cover a sample and hysteresis lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Explicit path, else `CULVERTD_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}

/// Time source for the pipeline. Event times are seconds since run start.
pub trait Clock: Send {
    /// Blocks until `t_s` in realtime mode; returns immediately in virtual mode.
    fn wait_until(&mut self, t_s: f64);
}

/// Discrete-event time: never sleeps.
#[derive(Debug, Default, Clone, Copy)]
pub struct VirtualClock;

impl Clock for VirtualClock {
    fn wait_until(&mut self, _t_s: f64) {}
}

/// Wall-clock pacing anchored at the first call.
#[derive(Debug, Default, Clone)]
pub struct WallClock {
    start: Option<Instant>,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock { start: None }
    }
}

impl Clock for WallClock {
    fn wait_until(&mut self, t_s: f64) {
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + Duration::from_secs_f64(t_s.max(0.0));
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}
