// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{BudgetSpec, TelemetrySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationLevel {
    #[default]
    Normal,
    /// Every other frame is skipped before detection.
    ReducedFps,
    /// Only significance-triggered summaries run; the rest wait.
    DeferNoncritical,
}

impl DegradationLevel {
    pub fn up(self) -> Self {
        match self {
            DegradationLevel::Normal => DegradationLevel::ReducedFps,
            _ => DegradationLevel::DeferNoncritical,
        }
    }

    pub fn down(self) -> Self {
        match self {
            DegradationLevel::DeferNoncritical => DegradationLevel::ReducedFps,
            _ => DegradationLevel::Normal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DegradationLevel::Normal => "normal",
            DegradationLevel::ReducedFps => "reduced_fps",
            DegradationLevel::DeferNoncritical => "defer_noncritical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationPolicy {
    pub enabled: bool,
    pub window_s: f64,
    pub hysteresis: f64,
}

impl Default for DegradationPolicy {
    fn default() -> Self {
        DegradationPolicy { enabled: true, window_s: 10.0, hysteresis: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationState {
    pub level: DegradationLevel,
    pub since: f64,
}

/// Median of the end-to-end latencies observed in `window`, in ms.
pub fn window_median_ms(window: &[TelemetrySample]) -> Option<f64> {
    let mut v: Vec<f64> = window.iter().filter_map(|s| s.end_to_end_ms).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// One adaptation step at time `now`. Escalates one level when the window
/// median exceeds the latency target, de-escalates one level when it is below
/// `hysteresis * target` or the window saw no summarization at all. At most
/// one transition per window.
pub fn adapt(
    state: &DegradationState,
    window: &[TelemetrySample],
    budgets: &BudgetSpec,
    policy: &DegradationPolicy,
    now: f64,
) -> DegradationState {
    if !policy.enabled || now - state.since < policy.window_s - 1e-9 {
        return *state;
    }
    let target_ms = budgets.latency_target_s * 1000.0;
    let next = match window_median_ms(window) {
        Some(m) if m > target_ms => state.level.up(),
        Some(m) if m < policy.hysteresis * target_ms => state.level.down(),
        Some(_) => state.level,
        None => state.level.down(),
    };
    if next == state.level {
        *state
    } else {
        DegradationState { level: next, since: now }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(ms: &[f64]) -> Vec<TelemetrySample> {
        ms.iter()
            .enumerate()
            .map(|(i, &v)| TelemetrySample { t_s: i as f64, end_to_end_ms: Some(v), ..Default::default() })
            .collect()
    }

    fn at(level: DegradationLevel) -> DegradationState {
        DegradationState { level, since: 0.0 }
    }

    #[test]
    fn steady_under_target_holds_normal() {
        let s = adapt(&at(DegradationLevel::Normal), &window(&[2000.0; 10]), &BudgetSpec::default(), &DegradationPolicy::default(), 10.0);
        assert_eq!(s.level, DegradationLevel::Normal);
    }

    #[test]
    fn median_over_target_escalates() {
        let s = adapt(&at(DegradationLevel::Normal), &window(&[4000.0; 10]), &BudgetSpec::default(), &DegradationPolicy::default(), 10.0);
        assert_eq!(s, DegradationState { level: DegradationLevel::ReducedFps, since: 10.0 });
    }

    #[test]
    fn single_step_down() {
        let s = adapt(
            &at(DegradationLevel::DeferNoncritical),
            &window(&[1000.0; 10]),
            &BudgetSpec::default(),
            &DegradationPolicy::default(),
            10.0,
        );
        assert_eq!(s.level, DegradationLevel::ReducedFps);
    }

    #[test]
    fn hysteresis_band_holds() {
        let p = DegradationPolicy::default();
        let b = BudgetSpec::default();
        let s = adapt(&at(DegradationLevel::ReducedFps), &window(&[2500.0; 5]), &b, &p, 10.0);
        assert_eq!(s.level, DegradationLevel::ReducedFps);
        let s = adapt(&at(DegradationLevel::ReducedFps), &window(&[3000.0; 5]), &b, &p, 10.0);
        assert_eq!(s.level, DegradationLevel::ReducedFps);
    }

    #[test]
    fn rate_limited_to_one_transition_per_window() {
        let s = DegradationState { level: DegradationLevel::ReducedFps, since: 5.0 };
        let out = adapt(&s, &window(&[9000.0; 10]), &BudgetSpec::default(), &DegradationPolicy::default(), 10.0);
        assert_eq!(out, s);
    }

    #[test]
    fn empty_window_relaxes() {
        let s = adapt(&at(DegradationLevel::ReducedFps), &[], &BudgetSpec::default(), &DegradationPolicy::default(), 10.0);
        assert_eq!(s.level, DegradationLevel::Normal);
    }

    #[test]
    fn median_even_count() {
        assert_eq!(window_median_ms(&window(&[1.0, 3.0, 2.0, 10.0])), Some(2.5));
        assert_eq!(window_median_ms(&[]), None);
    }

    proptest! {
        #[test]
        fn never_skips_levels(level in 0usize..3, ms in prop::collection::vec(0.0f64..20_000.0, 0..20)) {
            let levels = [DegradationLevel::Normal, DegradationLevel::ReducedFps, DegradationLevel::DeferNoncritical];
            let s = at(levels[level]);
            let out = adapt(&s, &window(&ms), &BudgetSpec::default(), &DegradationPolicy::default(), 10.0);
            let j = levels.iter().position(|l| *l == out.level).unwrap();
            prop_assert!(j.abs_diff(level) <= 1);
        }
    }
}
