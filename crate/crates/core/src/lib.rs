// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Edge inspection pipeline runtime.
//!
//! Frames are segmented by a detector, repeated sightings are consolidated
//! into deficiency records, and records are summarized into four-field
//! narratives under latency and memory budgets. The `quant` module covers
//! the model-side optimization (quantization, adapter merge, configuration
//! selection), `metrics` the text-quality measures used to gate it, and
//! `sim` a deterministic mission simulator for desk-scale runs.

pub mod detection;
pub mod inspect;
pub mod metrics;
pub mod orchestrator;
pub mod quant;
pub mod sim;
pub mod summarize;

pub use inspect::{
    DefectClass, DeficiencyRecord, Detection, Frame, InspectionReport, Pose, Region, ReportEntry, SeverityLevel,
    StructuredSummary, SummarySource, TelemetryDigest, API_VERSION,
};
pub use orchestrator::{BudgetSpec, RunConfig, TelemetrySample};
pub use quant::{ModelConfig, QuantScheme, QuantSpec, QuantizedTensor, Tensor};
