// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Spatial consolidation.
//!
//! A record's membership is a connected component of the proximity graph
//! (edges between same-class detections at most `proximity_threshold_m`
//! apart). A detection that bridges several records merges them.

use serde::{Deserialize, Serialize};

use crate::inspect::{pose_distance, DeficiencyRecord, Detection, MemberRef, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DedupPolicy {
    pub proximity_threshold_m: f64,
    pub require_same_class: bool,
}

impl Default for DedupPolicy {
    fn default() -> Self {
        DedupPolicy { proximity_threshold_m: 0.5, require_same_class: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsolidateOutcome {
    pub record_id: u64,
    pub created: bool,
    /// Records folded into `record_id` because the detection bridged them.
    pub absorbed: Vec<u64>,
    pub representative_changed: bool,
}

/// Single-writer deficiency log.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DeficiencyLog {
    records: Vec<DeficiencyRecord>,
    next_id: u64,
}

/// True when `a` should be the representative over `b`:
/// higher confidence, then earlier timestamp.
fn outranks(a: &Detection, b: &Detection) -> bool {
    a.confidence > b.confidence || (a.confidence == b.confidence && a.pose.timestamp < b.pose.timestamp)
}

fn extend_span(first: &mut Pose, last: &mut Pose, p: &Pose) {
    if p.chainage < first.chainage {
        *first = *p;
    }
    if p.chainage > last.chainage {
        *last = *p;
    }
}

fn image_ref(d: &Detection) -> String {
    format!("frames/{:08}.ppm", d.frame_id)
}

fn mask_ref(d: &Detection) -> String {
    format!("masks/{:08}-{}.json", d.frame_id, d.class.index().unwrap_or(0))
}

impl DeficiencyLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[DeficiencyRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DeficiencyRecord> {
        self.records
    }

    pub fn get(&self, record_id: u64) -> Option<&DeficiencyRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_members(&self) -> u64 {
        self.records.iter().map(|r| r.member_count as u64).sum()
    }

    pub fn consolidate(&mut self, d: Detection, policy: &DedupPolicy) -> ConsolidateOutcome {
        let hits: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| !policy.require_same_class || r.class == d.class)
            .filter(|(_, r)| r.members.iter().any(|m| pose_distance(&m.pose, &d.pose) <= policy.proximity_threshold_m))
            .map(|(i, _)| i)
            .collect();

        let member = MemberRef { frame_id: d.frame_id, pose: d.pose, confidence: d.confidence };
        let Some((&target, rest)) = hits.split_first() else {
            let record_id = self.next_id;
            self.next_id += 1;
            self.records.push(DeficiencyRecord {
                record_id,
                class: d.class,
                image_ref: image_ref(&d),
                mask_ref: mask_ref(&d),
                first_pose: d.pose,
                last_pose: d.pose,
                member_count: 1,
                members: vec![member],
                representative: d,
            });
            return ConsolidateOutcome { record_id, created: true, absorbed: Vec::new(), representative_changed: true };
        };

        let old_rep = self.records[target].representative.clone();
        let mut absorbed = Vec::with_capacity(rest.len());
        for &i in rest.iter().rev() {
            let other = self.records.remove(i);
            absorbed.push(other.record_id);
            let t = &mut self.records[target];
            t.member_count += other.member_count;
            t.members.extend(other.members);
            extend_span(&mut t.first_pose, &mut t.last_pose, &other.first_pose);
            extend_span(&mut t.first_pose, &mut t.last_pose, &other.last_pose);
            if outranks(&other.representative, &t.representative) {
                t.representative = other.representative;
                t.image_ref = other.image_ref;
                t.mask_ref = other.mask_ref;
            }
        }
        absorbed.reverse();

        let t = &mut self.records[target];
        t.member_count += 1;
        t.members.push(member);
        extend_span(&mut t.first_pose, &mut t.last_pose, &d.pose);
        if outranks(&d, &t.representative) {
            t.image_ref = image_ref(&d);
            t.mask_ref = mask_ref(&d);
            t.representative = d;
        }
        let representative_changed = t.representative != old_rep;
        ConsolidateOutcome { record_id: t.record_id, created: false, absorbed, representative_changed }
    }
}

/// Functional form: folds one detection into a record list.
pub fn consolidate(log: Vec<DeficiencyRecord>, d: Detection, policy: &DedupPolicy) -> Vec<DeficiencyRecord> {
    let next_id = log.iter().map(|r| r.record_id + 1).max().unwrap_or(0);
    let mut l = DeficiencyLog { records: log, next_id };
    l.consolidate(d, policy);
    l.records
}

/// Folds [`consolidate`] over an arrival sequence.
pub fn finalize_log<I: IntoIterator<Item = Detection>>(detections: I, policy: &DedupPolicy) -> Vec<DeficiencyRecord> {
    let mut log = DeficiencyLog::new();
    for d in detections {
        log.consolidate(d, policy);
    }
    log.records
}
