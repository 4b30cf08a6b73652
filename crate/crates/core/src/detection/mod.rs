// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Stage one: frames in, detections out, then spatial consolidation of
//! repeated sightings into unique deficiency records.

mod dedup;
mod detector;

pub use dedup::{consolidate, finalize_log, ConsolidateOutcome, DedupPolicy, DeficiencyLog};
pub use detector::{mix_seed, ClassRates, Detector, DetectorProfile, StubDetector, RAPID_SCAN_PARAMS};
