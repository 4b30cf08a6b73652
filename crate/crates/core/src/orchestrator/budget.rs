// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::TelemetrySample;
use crate::quant::ModelConfig;

/// Hard deployment limits plus the operational latency target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub t_max_s: f64,
    pub m_max_gb: f64,
    /// Limit on trainable parameters.
    pub p_max: f64,
    pub latency_target_s: f64,
    /// Recorded for completeness; never measured at desk scale.
    #[serde(default = "default_thermal")]
    pub thermal_limit_c: f64,
}

fn default_thermal() -> f64 {
    75.0
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec { t_max_s: 5.0, m_max_gb: 8.0, p_max: 100e6, latency_target_s: 3.0, thermal_limit_c: default_thermal() }
    }
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.t_max_s, self.m_max_gb, self.p_max, self.latency_target_s];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("budgets must be positive and finite".into());
        }
        if self.latency_target_s > self.t_max_s {
            return Err("latency target exceeds the latency budget".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetStatus {
    pub latency_s: f64,
    pub memory_gb: f64,
    pub params: f64,
    pub latency_ok: bool,
    pub memory_ok: bool,
    pub params_ok: bool,
}

impl BudgetStatus {
    pub fn all_ok(&self) -> bool {
        self.latency_ok && self.memory_ok && self.params_ok
    }
}

/// Checks a telemetry sample and model configuration against the budgets.
/// Latency is the measured per-summary inference time when the sample has
/// one, otherwise the configuration's nominal latency. All limits are strict.
pub fn budget_check(sample: &TelemetrySample, cfg: &ModelConfig, budgets: &BudgetSpec) -> BudgetStatus {
    let latency_s = sample.summarize_ms.map_or(cfg.latency_s, |ms| ms / 1000.0);
    let memory_gb = sample.memory_gb;
    let params = cfg.param_count;
    BudgetStatus {
        latency_s,
        memory_gb,
        params,
        latency_ok: latency_s < budgets.t_max_s,
        memory_ok: memory_gb < budgets.m_max_gb,
        params_ok: params < budgets.p_max,
    }
}
