// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Client for an external summarization model.
//!
//! Wire format: one JSON request line, one JSON response line, over a fresh
//! TCP connection per call.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{build_prompt, parse_summary, ConditioningContext, CostModel, SummarizeError, Summarizer};
use crate::inspect::{DeficiencyRecord, StructuredSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub prompt: String,
    pub image_path: String,
    pub mask_path: String,
    pub context: ConditioningContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct RemoteSummarizer {
    endpoint: String,
    timeout: Duration,
}

fn io_error(e: std::io::Error, timeout: Duration) -> SummarizeError {
    match e.kind() {
        ErrorKind::TimedOut | ErrorKind::WouldBlock => SummarizeError::Timeout(timeout.as_secs_f64()),
        _ => SummarizeError::Transport(e.to_string()),
    }
}

impl RemoteSummarizer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RemoteSummarizer { endpoint: endpoint.into(), timeout }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one request and returns the raw response text.
    pub fn call(&self, req: &SummaryRequest) -> Result<String, SummarizeError> {
        let started = Instant::now();
        let addr = self
            .endpoint
            .to_socket_addrs()
            .map_err(|e| SummarizeError::Transport(e.to_string()))?
            .next()
            .ok_or_else(|| SummarizeError::Transport(format!("cannot resolve {}", self.endpoint)))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| io_error(e, self.timeout))?;
        let remaining = self.timeout.saturating_sub(started.elapsed()).max(Duration::from_millis(1));
        stream.set_read_timeout(Some(remaining)).map_err(|e| io_error(e, self.timeout))?;
        stream.set_write_timeout(Some(remaining)).map_err(|e| io_error(e, self.timeout))?;

        let mut line = serde_json::to_vec(req).map_err(|e| SummarizeError::Transport(e.to_string()))?;
        line.push(b'\n');
        (&stream).write_all(&line).map_err(|e| io_error(e, self.timeout))?;

        let mut reader = BufReader::new(&stream);
        let mut buf = String::new();
        let n = reader.read_line(&mut buf).map_err(|e| io_error(e, self.timeout))?;
        if n == 0 {
            return Err(SummarizeError::MalformedResponse("connection closed without a response".into()));
        }
        let resp: SummaryResponse =
            serde_json::from_str(buf.trim_end()).map_err(|e| SummarizeError::MalformedResponse(e.to_string()))?;
        Ok(resp.text)
    }
}

impl Summarizer for RemoteSummarizer {
    fn summarize(
        &mut self,
        record: &DeficiencyRecord,
        ctx: &ConditioningContext,
    ) -> Result<StructuredSummary, SummarizeError> {
        let prompt = build_prompt(record, ctx)?;
        let req = SummaryRequest {
            prompt: prompt.instruction,
            image_path: prompt.image_ref,
            mask_path: prompt.mask_ref,
            context: prompt.context,
        };
        let text = self.call(&req)?;
        parse_summary(&text).map_err(|e| SummarizeError::MalformedResponse(e.to_string()))
    }

    fn cost_model(&self, _now_s: f64) -> CostModel {
        CostModel::Measured
    }
}
