// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Stage two: structured prompt construction, summarizer backends and the
//! four-section summary parser.
//!
//! The vision encoder / projection / language model chain sits behind the
//! [`Summarizer`] trait. Locally a deterministic template engine fills the
//! four fields; a remote backend speaks newline-delimited JSON over TCP.

mod parse;
mod prompt;
mod remote;
mod template;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inspect::{DeficiencyRecord, StructuredSummary};

pub use parse::{parse_summary, parse_summary_with_source, severity_from_text};
pub use prompt::{build_prompt, ConditioningContext, PipeDescriptor, Prompt};
pub use remote::{RemoteSummarizer, SummaryRequest, SummaryResponse};
pub use template::{clock_position, class_median_area, location_phrase, severity_for, template_summarize, TemplateSummarizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummarizeError {
    #[error("conditioning context labels do not match the record class")]
    InconsistentContext,
    #[error("summary text is missing sections: {}", .0.join(", "))]
    MissingSection(Vec<String>),
    #[error("summarizer timed out after {0:.2} s")]
    Timeout(f64),
    #[error("malformed summarizer response: {0}")]
    MalformedResponse(String),
    #[error("summarizer transport error: {0}")]
    Transport(String),
    #[error("invalid summarizer binding: {0}")]
    InvalidBinding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarizerKind {
    Template,
    Remote,
}

/// Temporarily overrides the template summarizer's emulated delay, used to
/// inject load for degradation drills.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayInjection {
    pub from_s: f64,
    pub to_s: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizerBinding {
    pub kind: SummarizerKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Emulated inference time of the template backend.
    #[serde(default = "default_stub_delay")]
    pub stub_delay_s: f64,
    #[serde(default)]
    pub injected_delays: Vec<DelayInjection>,
}

fn default_timeout() -> f64 {
    10.0
}

fn default_stub_delay() -> f64 {
    2.3
}

impl Default for SummarizerBinding {
    fn default() -> Self {
        SummarizerBinding {
            kind: SummarizerKind::Template,
            endpoint: None,
            timeout_s: 10.0,
            stub_delay_s: default_stub_delay(),
            injected_delays: Vec::new(),
        }
    }
}

impl SummarizerBinding {
    pub fn validate(&self) -> Result<(), SummarizeError> {
        if !(self.timeout_s > 0.0) {
            return Err(SummarizeError::InvalidBinding("timeout must be positive".into()));
        }
        if self.stub_delay_s < 0.0 {
            return Err(SummarizeError::InvalidBinding("stub delay must be non-negative".into()));
        }
        if self.kind == SummarizerKind::Remote && self.endpoint.as_deref().unwrap_or("").is_empty() {
            return Err(SummarizeError::InvalidBinding("remote binding needs an endpoint".into()));
        }
        Ok(())
    }

    /// Instantiates the configured backend.
    pub fn build(&self) -> Result<Box<dyn Summarizer>, SummarizeError> {
        self.validate()?;
        Ok(match self.kind {
            SummarizerKind::Template => Box::new(
                TemplateSummarizer::new(Duration::from_secs_f64(self.stub_delay_s))
                    .with_injections(self.injected_delays.clone()),
            ),
            SummarizerKind::Remote => Box::new(RemoteSummarizer::new(
                self.endpoint.clone().unwrap_or_default(),
                Duration::from_secs_f64(self.timeout_s),
            )),
        })
    }
}

/// How the pipeline clock charges a summarization call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    /// Charge this much virtual time regardless of wall time.
    Emulated(Duration),
    /// Charge the measured wall time of the call.
    Measured,
}

pub trait Summarizer: Send {
    fn summarize(
        &mut self,
        record: &DeficiencyRecord,
        ctx: &ConditioningContext,
    ) -> Result<StructuredSummary, SummarizeError>;

    /// Cost of a call started at pipeline time `now_s`.
    fn cost_model(&self, now_s: f64) -> CostModel;
}
