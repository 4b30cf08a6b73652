// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::DegradationLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueDepths {
    pub frames: usize,
    pub summaries: usize,
    pub deferred: usize,
}

/// A degradation level change, carried by the sample taken when it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: DegradationLevel,
    pub to: DegradationLevel,
    pub at_s: f64,
    pub window_median_ms: Option<f64>,
}

/// Periodic measurement. Latencies are `None` when nothing was observed in
/// the sampling period.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t_s: f64,
    /// Mean frame latency through detection (queue wait plus inference).
    pub detect_ms: Option<f64>,
    /// Mean inference time of summaries completed in the period.
    pub summarize_ms: Option<f64>,
    /// Worst trigger-to-completion latency seen in the period, including the
    /// age of a summary still in flight. Deferred work, and time live work
    /// spends queued behind it, is excluded.
    pub end_to_end_ms: Option<f64>,
    pub memory_gb: f64,
    pub queue: QueueDepths,
    pub summaries_per_s: f64,
    pub fps: f64,
    pub frames_dropped: u64,
    pub frames_skipped: u64,
    pub level: DegradationLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Transition>,
}

pub fn write_ndjson<W: Write>(mut w: W, samples: &[TelemetrySample]) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_ndjson<R: BufRead>(r: R) -> io::Result<Vec<TelemetrySample>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip() {
        let a = TelemetrySample { t_s: 1.0, end_to_end_ms: Some(2350.0), ..Default::default() };
        let b = TelemetrySample {
            t_s: 2.0,
            level: DegradationLevel::ReducedFps,
            transition: Some(Transition {
                from: DegradationLevel::Normal,
                to: DegradationLevel::ReducedFps,
                at_s: 2.0,
                window_median_ms: Some(4000.0),
            }),
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"reduced_fps\""));
        assert_eq!(read_ndjson(&buf[..]).unwrap(), vec![a, b]);
    }
}
