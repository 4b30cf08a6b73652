// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Inspector queries over a run. Without a remote model, freeform questions
//! are answered by retrieval: the most severe record in the target range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunSnapshot;
use crate::inspect::{DeficiencyRecord, StructuredSummary, SummarySource, API_VERSION};
use crate::summarize::{
    build_prompt, parse_summary, severity_for, template_summarize, ConditioningContext, RemoteSummarizer, SummaryRequest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryTarget {
    RecordId(u64),
    Segment { start_m: f64, end_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    Structured,
    Freeform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub target: QueryTarget,
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub mode: QueryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub api_version: u32,
    /// Records the answer draws on; the first is the one described.
    pub record_ids: Vec<u64>,
    pub answer: StructuredSummary,
    pub text: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("no record with id {0}")]
    NotFound(u64),
    #[error("no records between {0} m and {1} m")]
    EmptyRange(f64, f64),
    #[error("invalid range {0} m to {1} m")]
    InvalidRange(f64, f64),
}

fn in_range(snap: &RunSnapshot, start: f64, end: f64) -> Result<Vec<&DeficiencyRecord>, QueryError> {
    if !(start <= end) {
        return Err(QueryError::InvalidRange(start, end));
    }
    let mut v: Vec<&DeficiencyRecord> = snap
        .records
        .iter()
        .filter(|r| (start..=end).contains(&r.representative.pose.chainage))
        .collect();
    if v.is_empty() {
        return Err(QueryError::EmptyRange(start, end));
    }
    v.sort_by(|a, b| {
        a.representative.pose.chainage.total_cmp(&b.representative.pose.chainage).then(a.record_id.cmp(&b.record_id))
    });
    Ok(v)
}

fn summary_of(snap: &RunSnapshot, r: &DeficiencyRecord) -> StructuredSummary {
    snap.summaries
        .get(&r.record_id)
        .cloned()
        .unwrap_or_else(|| template_summarize(r, &ConditioningContext::for_record(r, &snap.pipe)))
}

/// Severity, then confidence, then earlier chainage.
fn most_severe<'a>(snap: &RunSnapshot, records: &[&'a DeficiencyRecord]) -> &'a DeficiencyRecord {
    let key = |r: &DeficiencyRecord| {
        let level = snap
            .summaries
            .get(&r.record_id)
            .map(|s| s.severity.level)
            .unwrap_or_else(|| severity_for(r.class, r.representative.confidence, r.representative.region.area));
        (level, r.representative.confidence)
    };
    let mut best = records[0];
    for &r in &records[1..] {
        let (kb, kr) = (key(best), key(r));
        if kr.0 > kb.0 || (kr.0 == kb.0 && kr.1 > kb.1) {
            best = r;
        }
    }
    best
}

pub fn answer_query(
    snap: &RunSnapshot,
    req: &QueryRequest,
    remote: Option<&RemoteSummarizer>,
) -> Result<QueryAnswer, QueryError> {
    let candidates = match req.target {
        QueryTarget::RecordId(id) => vec![snap.record(id).ok_or(QueryError::NotFound(id))?],
        QueryTarget::Segment { start_m, end_m } => in_range(snap, start_m, end_m)?,
    };
    let mut record_ids: Vec<u64> = candidates.iter().map(|r| r.record_id).collect();

    if req.mode == QueryMode::Structured {
        let r = candidates[0];
        let answer = summary_of(snap, r);
        let text = answer.full_text.clone();
        return Ok(QueryAnswer { api_version: API_VERSION, record_ids, answer, text });
    }

    let r = most_severe(snap, &candidates);
    record_ids.retain(|id| *id != r.record_id);
    record_ids.insert(0, r.record_id);
    let base = summary_of(snap, r);
    let text = format!(
        "Record {} ({} at {:.1} m) is the most severe of {} record(s) in range, rated {}. {}",
        r.record_id,
        r.class.name(),
        r.representative.pose.chainage,
        candidates.len(),
        base.severity.level,
        base.condition
    );
    if let Some(client) = remote {
        if let Some(answer) = ask_remote(client, snap, r, &req.question) {
            let text = answer.full_text.clone();
            return Ok(QueryAnswer { api_version: API_VERSION, record_ids, answer, text });
        }
    }
    Ok(QueryAnswer { api_version: API_VERSION, record_ids, answer: base, text })
}

fn ask_remote(
    client: &RemoteSummarizer,
    snap: &RunSnapshot,
    r: &DeficiencyRecord,
    question: &str,
) -> Option<StructuredSummary> {
    let ctx = ConditioningContext::for_record(r, &snap.pipe);
    let prompt = build_prompt(r, &ctx).ok()?;
    let req = SummaryRequest {
        prompt: format!("Inspector question: {question}\n{}", prompt.instruction),
        image_path: prompt.image_ref,
        mask_path: prompt.mask_ref,
        context: prompt.context,
    };
    let text = client.call(&req).ok()?;
    let mut s = parse_summary(&text).ok()?;
    s.source = SummarySource::RemoteModel;
    Some(s)
}
