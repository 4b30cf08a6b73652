// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Bus, DegradationLevel, TelemetrySample};
use crate::inspect::{
    DeficiencyRecord, InspectionReport, ReportEntry, SegmentDescriptor, StructuredSummary, TelemetryDigest, API_VERSION,
};
use crate::summarize::PipeDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    #[default]
    Idle,
    Running,
    Finished,
    Failed,
}

/// Point-in-time view of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub run_id: String,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub segment: SegmentDescriptor,
    pub pipe: PipeDescriptor,
    pub records: Vec<DeficiencyRecord>,
    pub summaries: BTreeMap<u64, StructuredSummary>,
    pub level: DegradationLevel,
    pub digest: TelemetryDigest,
    #[serde(default)]
    pub latest: Option<TelemetrySample>,
}

impl RunSnapshot {
    pub fn new(run_id: impl Into<String>, pipe: PipeDescriptor) -> Self {
        RunSnapshot {
            run_id: run_id.into(),
            status: RunStatus::Idle,
            error: None,
            segment: SegmentDescriptor { pipe_length_m: pipe.length_m, material: pipe.material.clone() },
            pipe,
            records: Vec::new(),
            summaries: BTreeMap::new(),
            level: DegradationLevel::Normal,
            digest: TelemetryDigest::default(),
            latest: None,
        }
    }

    pub fn record(&self, record_id: u64) -> Option<&DeficiencyRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }
}

/// Report ordered by first chainage (ties by record id). Records without a
/// summary are marked pending.
pub fn compile_report(snap: &RunSnapshot) -> InspectionReport {
    let mut records: Vec<&DeficiencyRecord> = snap.records.iter().collect();
    records.sort_by(|a, b| a.first_pose.chainage.total_cmp(&b.first_pose.chainage).then(a.record_id.cmp(&b.record_id)));
    let entries = records
        .into_iter()
        .map(|r| {
            let summary = snap.summaries.get(&r.record_id).cloned();
            ReportEntry { pending: summary.is_none(), record: r.clone(), summary }
        })
        .collect();
    InspectionReport {
        api_version: API_VERSION,
        run_id: snap.run_id.clone(),
        segment: snap.segment.clone(),
        entries,
        telemetry: snap.digest.clone(),
    }
}

/// Run state shared between the pipeline (single writer) and readers such
/// as the gateway.
#[derive(Debug)]
pub struct LiveRun {
    bus: Bus,
    state: Mutex<RunSnapshot>,
}

impl LiveRun {
    pub fn new(snapshot: RunSnapshot, bus: Bus) -> Arc<Self> {
        Arc::new(LiveRun { bus, state: Mutex::new(snapshot) })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn snapshot(&self) -> RunSnapshot {
        self.state.lock().expect("run state lock").clone()
    }

    pub fn update<R>(&self, f: impl FnOnce(&mut RunSnapshot) -> R) -> R {
        f(&mut self.state.lock().expect("run state lock"))
    }

    /// Replaces the run under observation, keeping the bus.
    pub fn reset(&self, snapshot: RunSnapshot) {
        *self.state.lock().expect("run state lock") = snapshot;
    }

    pub fn report(&self) -> InspectionReport {
        compile_report(&self.state.lock().expect("run state lock"))
    }
}
