// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{dequantize, QuantError, QuantizedTensor, Tensor};

/// Low-rank update `B (d×r) · A (r×k)` scaled by `alpha / r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAdapter")]
pub struct LoraAdapter {
    b: Tensor,
    a: Tensor,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawAdapter {
    b: Tensor,
    a: Tensor,
    alpha: f64,
}

impl TryFrom<RawAdapter> for LoraAdapter {
    type Error = QuantError;

    fn try_from(raw: RawAdapter) -> Result<Self, Self::Error> {
        LoraAdapter::new(raw.b, raw.a, raw.alpha)
    }
}

impl LoraAdapter {
    pub fn new(b: Tensor, a: Tensor, alpha: f64) -> Result<Self, QuantError> {
        let (d, r) = b.dims2()?;
        let (r2, k) = a.dims2()?;
        if r != r2 {
            return Err(QuantError::ShapeMismatch(format!("B is {d}x{r} but A is {r2}x{k}")));
        }
        if r == 0 || r > d.min(k) {
            return Err(QuantError::InvalidAdapter(format!("rank {r} must be in 1..={}", d.min(k))));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(QuantError::InvalidAdapter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(LoraAdapter { b, a, alpha })
    }

    pub fn rank(&self) -> usize {
        self.b.shape()[1]
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn b(&self) -> &Tensor {
        &self.b
    }

    pub fn a(&self) -> &Tensor {
        &self.a
    }

    /// Trainable parameter count `r·(d + k)`.
    pub fn param_count(&self) -> usize {
        self.b.len() + self.a.len()
    }
}

/// `W0 + (alpha/r)·B·A` in full precision.
pub fn merge_lora(w0: &Tensor, adapter: &LoraAdapter) -> Result<Tensor, QuantError> {
    let (d, k) = w0.dims2()?;
    let (bd, _) = adapter.b.dims2()?;
    let (_, ak) = adapter.a.dims2()?;
    if (bd, ak) != (d, k) {
        return Err(QuantError::ShapeMismatch(format!("base is {d}x{k}, update is {bd}x{ak}")));
    }
    let delta = adapter.b.matmul(&adapter.a)?;
    let scale = adapter.scaling();
    let values = w0
        .values()
        .iter()
        .zip(delta.values())
        .map(|(w, u)| if *u == 0.0 { *w } else { w + scale * u })
        .collect();
    Tensor::new(w0.shape().to_vec(), values)
}

/// Dequantizes the base first, then merges.
pub fn merge_lora_quantized(w0: &QuantizedTensor, adapter: &LoraAdapter) -> Result<Tensor, QuantError> {
    merge_lora(&dequantize(w0), adapter)
}
