// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::inspect::{pose_distance, DefectClass, InspectionReport, Pose};
use crate::metrics::{evaluate_corpus, CorpusItem, MetricReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub true_positives: u32,
    pub false_positives: u32,
    pub false_negatives: u32,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub precision: f64,
    pub recall: f64,
    /// Set when the run produced no records; precision is then reported as 1.0.
    pub zero_predictions: bool,
    pub matched: u32,
    pub planted: u32,
    pub records: u32,
    /// Records produced minus defects planted.
    pub record_count_error: i64,
    pub localization_mae_m: Option<f64>,
    pub per_class: BTreeMap<DefectClass, ClassScore>,
    pub summary_metrics: Option<MetricReport>,
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching, nearest pair first. Pairs must share a class
/// and lie within `radius`. Returns (prediction index, truth index) pairs.
pub fn greedy_match(pred: &[(DefectClass, Pose)], truth: &[(DefectClass, Pose)], radius: f64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (pc, pp)) in pred.iter().enumerate() {
        for (j, (tc, tp)) in truth.iter().enumerate() {
            let d = pose_distance(pp, tp);
            if pc == tc && d <= radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn score_run(report: &InspectionReport, scenario: &Scenario, match_radius: f64) -> RunScore {
    let pred: Vec<(DefectClass, Pose)> =
        report.entries.iter().map(|e| (e.record.class, e.record.representative.pose)).collect();
    let truth: Vec<(DefectClass, Pose)> = scenario.defects.iter().map(|d| (d.class, d.pose)).collect();
    let matches = greedy_match(&pred, &truth, match_radius);

    let mut per_class = BTreeMap::new();
    for class in DefectClass::DEFECTS {
        let n_pred = pred.iter().filter(|p| p.0 == class).count() as u32;
        let n_truth = truth.iter().filter(|t| t.0 == class).count() as u32;
        if n_pred == 0 && n_truth == 0 {
            continue;
        }
        let tp = matches.iter().filter(|(i, _)| pred[*i].0 == class).count() as u32;
        per_class.insert(
            class,
            ClassScore {
                true_positives: tp,
                false_positives: n_pred - tp,
                false_negatives: n_truth - tp,
                precision: ratio(tp, n_pred),
                recall: ratio(tp, n_truth),
            },
        );
    }

    let mae = (!matches.is_empty()).then(|| {
        matches.iter().map(|&(i, j)| pose_distance(&pred[i].1, &truth[j].1)).sum::<f64>() / matches.len() as f64
    });

    let items: Vec<CorpusItem> = matches
        .iter()
        .filter_map(|&(i, j)| {
            let s = report.entries[i].summary.as_ref()?;
            Some(CorpusItem { hyp: s.full_text.clone(), refs: vec![scenario.defects[j].canonical.full_text.clone()] })
        })
        .collect();

    let matched = matches.len() as u32;
    RunScore {
        precision: ratio(matched, pred.len() as u32),
        recall: ratio(matched, truth.len() as u32),
        zero_predictions: pred.is_empty(),
        matched,
        planted: truth.len() as u32,
        records: pred.len() as u32,
        record_count_error: pred.len() as i64 - truth.len() as i64,
        localization_mae_m: mae,
        per_class,
        summary_metrics: evaluate_corpus(&items).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{finalize_log, DedupPolicy};
    use crate::inspect::{ReportEntry, TelemetryDigest, API_VERSION};
    use crate::sim::lab_60ft;

    fn report_from(s: &Scenario, with_summaries: bool) -> InspectionReport {
        let records = finalize_log(s.defects.iter().map(|d| s.visible_truth(0, &d.pose).remove(0)), &DedupPolicy::default());
        let entries = records
            .into_iter()
            .zip(&s.defects)
            .map(|(record, d)| ReportEntry { record, summary: with_summaries.then(|| d.canonical.clone()), pending: false })
            .collect();
        InspectionReport {
            api_version: API_VERSION,
            run_id: "t".into(),
            segment: s.segment(),
            entries,
            telemetry: TelemetryDigest::default(),
        }
    }

    #[test]
    fn perfect_run() {
        let s = lab_60ft();
        let sc = score_run(&report_from(&s, true), &s, 0.5);
        assert_eq!((sc.precision, sc.recall), (1.0, 1.0));
        assert_eq!(sc.localization_mae_m, Some(0.0));
        assert_eq!(sc.record_count_error, 0);
        let m = sc.summary_metrics.unwrap();
        assert!((m.rouge_l.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_records_flagged() {
        let s = lab_60ft();
        let mut r = report_from(&s, false);
        r.entries.clear();
        let sc = score_run(&r, &s, 0.5);
        assert_eq!(sc.recall, 0.0);
        assert_eq!(sc.precision, 1.0);
        assert!(sc.zero_predictions);
        assert!(sc.summary_metrics.is_none());
    }

    #[test]
    fn greedy_prefers_nearest() {
        let c = DefectClass::Cracks;
        let pred = [(c, Pose::at(1.0, 0.0, 0.0)), (c, Pose::at(1.3, 0.0, 0.0))];
        let truth = [(c, Pose::at(1.25, 0.0, 0.0))];
        assert_eq!(greedy_match(&pred, &truth, 0.5), vec![(1, 0)]);
        assert!(greedy_match(&pred, &[(DefectClass::Roots, Pose::at(1.0, 0.0, 0.0))], 0.5).is_empty());
    }
}
