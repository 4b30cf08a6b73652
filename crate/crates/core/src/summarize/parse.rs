// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use super::SummarizeError;
use crate::inspect::{Severity, SeverityLevel, StructuredSummary, SummarySource};

const HEADERS: [&str; 4] = ["condition:", "location:", "severity:", "implications:"];

/// Byte offset of the first occurrence of `header` that starts a word.
fn find_header(lower: &str, header: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(pos) = lower[from..].find(header) {
        let at = from + pos;
        let starts_word = lower[..at].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        if starts_word {
            return Some(at);
        }
        from = at + header.len();
    }
    None
}

/// Severity level named by the first level keyword in `text`, medium if none.
pub fn severity_from_text(text: &str) -> SeverityLevel {
    text.split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| match tok.to_ascii_lowercase().as_str() {
            "low" | "minor" => Some(SeverityLevel::Low),
            "medium" | "moderate" => Some(SeverityLevel::Medium),
            "high" | "severe" | "critical" => Some(SeverityLevel::High),
            _ => None,
        })
        .unwrap_or(SeverityLevel::Medium)
}

/// Splits labeled model output into the four summary fields. Headers are
/// case-insensitive and may appear in any order.
pub fn parse_summary(text: &str) -> Result<StructuredSummary, SummarizeError> {
    parse_summary_with_source(text, SummarySource::RemoteModel)
}

pub fn parse_summary_with_source(text: &str, source: SummarySource) -> Result<StructuredSummary, SummarizeError> {
    // ASCII lowercasing keeps byte offsets aligned with `text`.
    let lower = text.to_ascii_lowercase();
    let found: Vec<Option<usize>> = HEADERS.iter().map(|h| find_header(&lower, h)).collect();

    let mut starts: Vec<usize> = found.iter().flatten().copied().collect();
    starts.sort_unstable();

    let mut fields: [String; 4] = Default::default();
    let mut missing = Vec::new();
    for (i, start) in found.iter().enumerate() {
        let name = HEADERS[i].trim_end_matches(':');
        let Some(start) = *start else {
            missing.push(name.to_string());
            continue;
        };
        let body_start = start + HEADERS[i].len();
        let end = starts.iter().copied().find(|&s| s > start).unwrap_or(text.len());
        let body = text[body_start..end].trim();
        if body.is_empty() {
            missing.push(name.to_string());
        }
        fields[i] = body.to_string();
    }
    if !missing.is_empty() {
        return Err(SummarizeError::MissingSection(missing));
    }

    let [condition, location, severity, implications] = fields;
    let level = severity_from_text(&severity);
    Ok(StructuredSummary {
        condition,
        location,
        severity: Severity { level, text: severity },
        implications,
        full_text: text.to_string(),
        source,
    })
}
