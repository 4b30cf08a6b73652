// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Model-optimization math.
//!
//! - affine quantization `round(W/s) + z` and its inverse
//! - symmetric per-channel INT8 calibration
//! - NF4 block quantization with the 16 NormalFloat levels
//! - low-rank adapter merge `W0 + (alpha/r)·B·A`
//! - the composite objective and budget-constrained configuration selection
//! - the three-stage merge → calibrate → precision-policy loop with a quality gate
//!
//! Rounding is half-away-from-zero everywhere.

mod affine;
pub mod artifact;
mod lora;
mod nf4;
mod objective;
mod optimize;
mod tensor;

pub use affine::{
    affine_dequantize, affine_quantize, calibrate_affine, calibrate_symmetric_per_channel, code_range, dequantize,
    round_half_away,
};
pub use lora::{merge_lora, merge_lora_quantized, LoraAdapter};
pub use nf4::{nf4_dequantize, nf4_quantize, NF4_CODEBOOK, NF4_ZERO_INDEX};
pub use objective::{
    is_feasible, nlg_loss, select_configuration, total_objective, ModelConfig, ObjectiveWeights,
};
pub use optimize::{
    optimize_pipeline, GateReport, LayerAdapter, LayerGroup, LayerWeights, ModelDescriptor,
    OptimizedArtifact, Precision, PrecisionPolicy, QuantizedLayer, SingleFlight,
    MAX_GATE_RETRIES,
};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("unsupported bit width {0} (expected 4 or 8)")]
    UnsupportedBits(u8),
    #[error("block size must be at least 1")]
    InvalidBlockSize,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid tensor: {0}")]
    BadTensor(String),
    #[error("invalid adapter: {0}")]
    InvalidAdapter(String),
    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("no candidate configuration was supplied")]
    EmptyCandidates,
    #[error("every candidate violates a deployment constraint")]
    NoFeasibleCandidate,
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("quality gate still failing after {retries} retries (last ratio {last_ratio:.4})")]
    GateFailedAfterRetries { retries: u32, last_ratio: f64 },
    #[error("quantized artifact: {0}")]
    Artifact(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantScheme {
    Affine,
    SymmetricPerChannel,
    Nf4Block,
}

impl QuantScheme {
    pub fn parse(s: &str) -> Option<QuantScheme> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "affine" => Some(QuantScheme::Affine),
            "symmetric" | "symmetric_per_channel" | "int8" => Some(QuantScheme::SymmetricPerChannel),
            "nf4" | "nf4_block" => Some(QuantScheme::Nf4Block),
            _ => None,
        }
    }
}

/// Quantization parameters.
///
/// `scales`/`zero_points` hold one entry for per-tensor affine and one per
/// channel (leading dimension) for the symmetric scheme. NF4 keeps its
/// per-block absmax on the [`QuantizedTensor`] and the level table in
/// `codebook`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub scheme: QuantScheme,
    pub bits: u8,
    pub scales: Vec<f64>,
    pub zero_points: Vec<i32>,
    pub block_size: Option<usize>,
    pub codebook: Option<Vec<f64>>,
}

/// Integer codes plus the metadata needed to reconstruct the source tensor.
/// Affine/symmetric codes are signed values; NF4 codes are level indices 0..=15.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub spec: QuantSpec,
    pub shape: Vec<usize>,
    pub codes: Vec<i8>,
    pub absmax: Vec<f64>,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Checks code ranges, parameter positivity and shape bookkeeping.
    pub fn validate(&self) -> Result<(), QuantError> {
        let n: usize = self.shape.iter().product();
        if n != self.codes.len() {
            return Err(QuantError::ShapeMismatch(format!(
                "shape {:?} holds {n} values but {} codes are present",
                self.shape,
                self.codes.len()
            )));
        }
        if let Some(s) = self.spec.scales.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(QuantError::NonPositiveScale(*s));
        }
        match self.spec.scheme {
            QuantScheme::Affine | QuantScheme::SymmetricPerChannel => {
                let (lo, hi) = code_range(self.spec.bits)?;
                if self.codes.iter().any(|c| (*c as i32) < lo || (*c as i32) > hi) {
                    return Err(QuantError::Artifact("code outside declared range".into()));
                }
                if self.spec.scheme == QuantScheme::SymmetricPerChannel {
                    if self.spec.zero_points.iter().any(|z| *z != 0) {
                        return Err(QuantError::Artifact("symmetric zero point must be 0".into()));
                    }
                    let channels = self.shape.first().copied().unwrap_or(0);
                    if self.spec.scales.len() != channels {
                        return Err(QuantError::ShapeMismatch("one scale per channel expected".into()));
                    }
                } else if self.spec.scales.len() != 1 || self.spec.zero_points.len() != 1 {
                    return Err(QuantError::ShapeMismatch("affine expects one scale and zero point".into()));
                }
            }
            QuantScheme::Nf4Block => {
                let bs = self.spec.block_size.ok_or(QuantError::InvalidBlockSize)?;
                if bs == 0 {
                    return Err(QuantError::InvalidBlockSize);
                }
                if self.absmax.len() != n.div_ceil(bs) {
                    return Err(QuantError::ShapeMismatch("one absmax per block expected".into()));
                }
                if self.absmax.iter().any(|a| !(*a > 0.0)) {
                    return Err(QuantError::NonPositiveScale(0.0));
                }
                if self.codes.iter().any(|c| !(0..16).contains(c)) {
                    return Err(QuantError::Artifact("nf4 index outside 0..=15".into()));
                }
            }
        }
        Ok(())
    }
}
