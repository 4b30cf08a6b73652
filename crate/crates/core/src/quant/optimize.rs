// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Three-stage post-training optimization:
//!
//! 1. merge adapters into their base layers,
//! 2. symmetric per-channel INT8 for compatible weights plus per-tensor
//!    absmax activation scales from the calibration set,
//! 3. a precision-policy descriptor (which layer groups run reduced precision).
//!
//! A quality gate inspects every candidate; failing candidates trigger a
//! re-calibration with the gate's failing samples added, bounded by
//! [`MAX_GATE_RETRIES`].

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use super::{calibrate_symmetric_per_channel, merge_lora, LoraAdapter, QuantError, QuantizedTensor, Tensor};
use crate::metrics::{gate_ratio_passes, QUALITY_GATE_THRESHOLD};

pub const MAX_GATE_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    VisionEncoder,
    Projection,
    Language,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub name: String,
    pub group: LayerGroup,
    pub weight: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub layers: Vec<LayerWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAdapter {
    pub layer: String,
    pub adapter: LoraAdapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedLayer {
    pub name: String,
    pub group: LayerGroup,
    pub weights: QuantizedTensor,
    pub activation_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPolicy {
    pub entries: Vec<(String, LayerGroup, Precision)>,
}

impl PrecisionPolicy {
    pub fn precision_of(&self, layer: &str) -> Option<Precision> {
        self.entries.iter().find(|(n, _, _)| n == layer).map(|(_, _, p)| *p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedArtifact {
    pub model: String,
    pub merged_adapters: usize,
    pub quantized: Vec<QuantizedLayer>,
    pub full_precision: Vec<LayerWeights>,
    pub policy: PrecisionPolicy,
    pub calibration_passes: u32,
    pub calibration_samples: usize,
    pub gate_ratio: Option<f64>,
}

/// Quality-gate verdict on a candidate: the ROUGE-L ratio against the
/// full-precision baseline and the samples that scored worst.
#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub ratio: f64,
    pub failing_samples: Vec<Tensor>,
}

impl GateReport {
    pub fn pass(ratio: f64) -> Self {
        GateReport { ratio, failing_samples: Vec::new() }
    }
}

fn int8_compatible(layer: &LayerWeights) -> bool {
    layer.group == LayerGroup::Language && layer.weight.shape().len() == 2
}

fn activation_scale(in_dim: usize, calib: &[Tensor], global_absmax: f64) -> f64 {
    let matched = calib
        .iter()
        .filter(|t| t.shape().last() == Some(&in_dim))
        .map(Tensor::absmax)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
    let absmax = matched.unwrap_or(global_absmax);
    if absmax > 0.0 {
        absmax / 127.0
    } else {
        1.0
    }
}

fn calibrate(
    merged: &[LayerWeights],
    calib: &[Tensor],
) -> Result<(Vec<QuantizedLayer>, Vec<LayerWeights>), QuantError> {
    let global = calib.iter().map(Tensor::absmax).fold(0.0f64, f64::max);
    let mut quantized = Vec::new();
    let mut full = Vec::new();
    for layer in merged {
        if int8_compatible(layer) {
            let (_, weights) = calibrate_symmetric_per_channel(&layer.weight, 8)?;
            let in_dim = layer.weight.shape()[1];
            quantized.push(QuantizedLayer {
                name: layer.name.clone(),
                group: layer.group,
                weights,
                activation_scale: activation_scale(in_dim, calib, global),
            });
        } else {
            full.push(layer.clone());
        }
    }
    Ok((quantized, full))
}

fn precision_policy(merged: &[LayerWeights]) -> PrecisionPolicy {
    PrecisionPolicy {
        entries: merged
            .iter()
            .map(|l| {
                let p = if int8_compatible(l) { Precision::Int8 } else { Precision::Fp16 };
                (l.name.clone(), l.group, p)
            })
            .collect(),
    }
}

/// Runs the merge → calibrate → policy pipeline under a quality gate.
///
/// The gate is consulted once per calibration pass. A ratio below the
/// threshold re-runs calibration with the failing samples appended; after
/// [`MAX_GATE_RETRIES`] retries the call fails.
pub fn optimize_pipeline<G>(
    base: &ModelDescriptor,
    adapters: &[LayerAdapter],
    calib: &[Tensor],
    mut gate: G,
) -> Result<OptimizedArtifact, QuantError>
where
    G: FnMut(&OptimizedArtifact) -> GateReport,
{
    if calib.is_empty() {
        return Err(QuantError::EmptyCalibration);
    }
    let mut merged = base.layers.clone();
    for la in adapters {
        let layer = merged
            .iter_mut()
            .find(|l| l.name == la.layer)
            .ok_or_else(|| QuantError::InvalidAdapter(format!("no layer named `{}`", la.layer)))?;
        layer.weight = merge_lora(&layer.weight, &la.adapter)?;
    }
    let policy = precision_policy(&merged);

    let mut calib_set: Vec<Tensor> = calib.to_vec();
    let mut retries = 0u32;
    loop {
        let (quantized, full_precision) = calibrate(&merged, &calib_set)?;
        let mut artifact = OptimizedArtifact {
            model: base.name.clone(),
            merged_adapters: adapters.len(),
            quantized,
            full_precision,
            policy: policy.clone(),
            calibration_passes: retries + 1,
            calibration_samples: calib_set.len(),
            gate_ratio: None,
        };
        let report = gate(&artifact);
        artifact.gate_ratio = Some(report.ratio);
        if gate_ratio_passes(report.ratio, QUALITY_GATE_THRESHOLD) {
            return Ok(artifact);
        }
        if retries == MAX_GATE_RETRIES {
            return Err(QuantError::GateFailedAfterRetries { retries, last_ratio: report.ratio });
        }
        retries += 1;
        calib_set.extend(report.failing_samples);
    }
}

type Slot<T> = Arc<(Mutex<Option<T>>, Condvar)>;

/// Collapses concurrent calls with the same key into one execution; every
/// caller receives a clone of the leader's result.
#[derive(Default)]
pub struct SingleFlight<T: Clone> {
    inflight: Mutex<HashMap<String, Slot<T>>>,
}

impl<T: Clone> SingleFlight<T> {
    pub fn new() -> Self {
        SingleFlight { inflight: Mutex::new(HashMap::new()) }
    }

    pub fn run<F: FnOnce() -> T>(&self, key: &str, f: F) -> T {
        let (slot, leader) = {
            let mut map = self.inflight.lock().unwrap();
            match map.get(key) {
                Some(slot) => (slot.clone(), false),
                None => {
                    let slot: Slot<T> = Arc::new((Mutex::new(None), Condvar::new()));
                    map.insert(key.to_string(), slot.clone());
                    (slot, true)
                }
            }
        };
        if leader {
            let value = f();
            *slot.0.lock().unwrap() = Some(value.clone());
            slot.1.notify_all();
            self.inflight.lock().unwrap().remove(key);
            value
        } else {
            let mut guard = slot.0.lock().unwrap();
            while guard.is_none() {
                guard = slot.1.wait(guard).unwrap();
            }
            guard.clone().unwrap()
        }
    }
}
