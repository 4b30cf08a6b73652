// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Real-time run loop: message bus, summarization triggers, budget checks,
//! adaptive degradation and telemetry.

mod budget;
mod bus;
mod config;
mod degrade;
mod live;
mod pipeline;
mod query;
mod telemetry;

pub use budget::{budget_check, BudgetSpec, BudgetStatus};
pub use bus::{Bus, BusError, Envelope, Topic};
pub use config::{default_model, Clock, ConfigError, RunConfig, TriggerPolicy, VirtualClock, WallClock, CONFIG_ENV};
pub use degrade::{adapt, window_median_ms, DegradationLevel, DegradationPolicy, DegradationState};
pub use live::{compile_report, LiveRun, RunSnapshot, RunStatus};
pub use pipeline::{
    run_id_for, run_pipeline, run_scenario_live, Pipeline, PipelineError, RunOutput, RunStats, Stage, SummaryTiming,
    TriggerKind,
};
pub use query::{answer_query, QueryAnswer, QueryError, QueryMode, QueryRequest, QueryTarget};
pub use telemetry::{read_ndjson, write_ndjson, QueueDepths, TelemetrySample, Transition};
