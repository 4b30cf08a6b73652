// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::template::severity_for;
use super::SummarizeError;
use crate::inspect::{DefectClass, DeficiencyRecord, Pose, SeverityLevel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeDescriptor {
    pub length_m: f64,
    pub material: String,
    pub diameter_class: String,
}

impl Default for PipeDescriptor {
    fn default() -> Self {
        PipeDescriptor { length_m: 18.3, material: "corrugated metal".into(), diameter_class: "900 mm".into() }
    }
}

/// Conditioning context handed to the language model alongside the image and mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningContext {
    pub labels: Vec<DefectClass>,
    pub span_start: Pose,
    pub span_end: Pose,
    pub pipe: PipeDescriptor,
    pub severity_hint: SeverityLevel,
}

impl ConditioningContext {
    pub fn for_record(record: &DeficiencyRecord, pipe: &PipeDescriptor) -> Self {
        let rep = &record.representative;
        ConditioningContext {
            labels: vec![record.class],
            span_start: record.first_pose,
            span_end: record.last_pose,
            pipe: pipe.clone(),
            severity_hint: severity_for(rep.class, rep.confidence, rep.region.area),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub instruction: String,
    pub image_ref: String,
    pub mask_ref: String,
    pub context: ConditioningContext,
}

impl Prompt {
    pub fn text(&self) -> &str {
        &self.instruction
    }
}

/// Deterministic prompt: one instruction line per summary aspect plus the
/// serialized context.
pub fn build_prompt(record: &DeficiencyRecord, ctx: &ConditioningContext) -> Result<Prompt, SummarizeError> {
    let labels: BTreeSet<DefectClass> = ctx.labels.iter().copied().collect();
    if labels.len() != 1 || !labels.contains(&record.class) {
        return Err(SummarizeError::InconsistentContext);
    }
    let chainage = record.representative.pose.chainage;
    let context_json = serde_json::to_string(ctx).expect("context serializes");
    let instruction = format!(
        "You are assisting a sewer and culvert inspection. Write a structured summary of the {class} deficiency \
         recorded at chainage {chainage:.1} m ({members} sightings, peak confidence {conf:.2}). \
         The attached image and segmentation mask show the defect.\n\
         Condition: describe the current state of the pipe at the defect.\n\
         Location: give the position within the pipe using the chainage and clock position.\n\
         Severity: rate the urgency as low, medium or high and justify the rating.\n\
         Implications: state the likely short- to medium-term consequences if it is left unaddressed.\n\
         Context: {context_json}",
        class = record.class.name().to_lowercase(),
        members = record.member_count,
        conf = record.representative.confidence,
    );
    Ok(Prompt {
        instruction,
        image_ref: record.image_ref.clone(),
        mask_ref: record.mask_ref.clone(),
        context: ctx.clone(),
    })
}
