// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use super::{ConditioningContext, CostModel, DelayInjection, SummarizeError, Summarizer};
use crate::inspect::{DefectClass, DeficiencyRecord, Pose, Severity, SeverityLevel, StructuredSummary, SummarySource};

/// Typical mask area in pixels per class, used to judge whether a region is large.
pub fn class_median_area(class: DefectClass) -> u32 {
    match class {
        DefectClass::Cracks => 40,
        DefectClass::Roots => 120,
        DefectClass::Holes => 30,
        DefectClass::JointProblems => 90,
        DefectClass::Deformation => 200,
        DefectClass::Fracture => 80,
        DefectClass::ErosionDeposits => 150,
        DefectClass::LooseGasket => 60,
        DefectClass::NoDefect => 1,
    }
}

pub fn severity_for(class: DefectClass, confidence: f64, area: u32) -> SeverityLevel {
    if confidence >= 0.9 && area >= 2 * class_median_area(class) {
        SeverityLevel::High
    } else if confidence >= 0.6 {
        SeverityLevel::Medium
    } else {
        SeverityLevel::Low
    }
}

/// Clock position (1..=12) looking downstream, 12 at the crown, 3 on the right.
pub fn clock_position(pose: &Pose) -> u32 {
    let deg = pose.lateral.atan2(pose.vertical).to_degrees().rem_euclid(360.0);
    let h = (deg / 30.0).round() as u32 % 12;
    if h == 0 {
        12
    } else {
        h
    }
}

pub fn location_phrase(pose: &Pose) -> String {
    let hour = clock_position(pose);
    let side = match hour {
        11 | 12 | 1 => "crown",
        2..=4 => "right wall",
        5..=7 => "invert",
        _ => "left wall",
    };
    format!(
        "On the {side} of the pipe near the {hour} o'clock position, {:.1} m from the entry point.",
        pose.chainage
    )
}

fn condition_phrase(class: DefectClass) -> &'static str {
    match class {
        DefectClass::Cracks => "Cracking is visible in the pipe wall",
        DefectClass::Roots => "Root intrusion is present inside the barrel",
        DefectClass::Holes => "A hole penetrates the pipe wall",
        DefectClass::JointProblems => "A joint shows misalignment or separation between sections",
        DefectClass::Deformation => "The pipe cross-section is visibly deformed",
        DefectClass::Fracture => "The pipe wall is fractured",
        DefectClass::ErosionDeposits => "Erosion of the wall and deposit buildup are present",
        DefectClass::LooseGasket => "A gasket is loose or displaced at the joint",
        DefectClass::NoDefect => "No deficiency is visible",
    }
}

fn implications_phrase(class: DefectClass) -> &'static str {
    match class {
        DefectClass::Cracks => "Cracks tend to widen and admit infiltration, weakening the wall over time.",
        DefectClass::Roots => "Continued root growth obstructs flow and opens joints further, leading to blockages.",
        DefectClass::Holes => "Soil and water can pass through the opening and undermine the surrounding backfill.",
        DefectClass::JointProblems => {
            "Deteriorating joints can leak and draw in soil, risking contamination and service interruptions."
        }
        DefectClass::Deformation => "Further deformation reduces flow capacity and can progress to collapse.",
        DefectClass::Fracture => "A fractured wall can fail suddenly under load and cause surface subsidence.",
        DefectClass::ErosionDeposits => "Deposits reduce capacity while wall loss accelerates deterioration.",
        DefectClass::LooseGasket => "A displaced gasket lets water in or out at the joint under pressure.",
        DefectClass::NoDefect => "No action is required.",
    }
}

fn severity_text(level: SeverityLevel) -> &'static str {
    match level {
        SeverityLevel::High => "High priority. A confident detection over a large area warrants prompt repair.",
        SeverityLevel::Medium => "Medium priority. Schedule a follow-up assessment and plan repair.",
        SeverityLevel::Low => "Low priority. Monitor during the next scheduled inspection.",
    }
}

/// Deterministic four-field summary of a record.
pub fn template_summarize(record: &DeficiencyRecord, ctx: &ConditioningContext) -> StructuredSummary {
    let rep = &record.representative;
    let condition = format!(
        "{} in a {} {} pipe; seen in {} frames with peak confidence {:.2}.",
        condition_phrase(record.class),
        ctx.pipe.diameter_class,
        ctx.pipe.material,
        record.member_count,
        rep.confidence
    );
    let level = severity_for(record.class, rep.confidence, rep.region.area);
    StructuredSummary::new(
        condition,
        location_phrase(&rep.pose),
        Severity { level, text: severity_text(level).to_string() },
        implications_phrase(record.class).to_string(),
        SummarySource::Template,
    )
}

/// Template backend with an emulated inference cost.
#[derive(Debug, Clone)]
pub struct TemplateSummarizer {
    delay: Duration,
    injections: Vec<DelayInjection>,
}

impl TemplateSummarizer {
    pub fn new(delay: Duration) -> Self {
        TemplateSummarizer { delay, injections: Vec::new() }
    }

    pub fn with_injections(mut self, injections: Vec<DelayInjection>) -> Self {
        self.injections = injections;
        self
    }
}

impl Summarizer for TemplateSummarizer {
    fn summarize(
        &mut self,
        record: &DeficiencyRecord,
        ctx: &ConditioningContext,
    ) -> Result<StructuredSummary, SummarizeError> {
        Ok(template_summarize(record, ctx))
    }

    fn cost_model(&self, now_s: f64) -> CostModel {
        let injected = self.injections.iter().find(|w| now_s >= w.from_s && now_s < w.to_s);
        CostModel::Emulated(injected.map_or(self.delay, |w| Duration::from_secs_f64(w.delay_s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{finalize_log, DedupPolicy};
    use crate::inspect::{Detection, Region};
    use crate::summarize::{parse_summary, PipeDescriptor};

    fn record(class: DefectClass, conf: f64, side: usize, pose: Pose) -> DeficiencyRecord {
        let d = Detection::new(1, class, conf, Region::rect(0, 0, side - 1, side - 1), pose).unwrap();
        finalize_log([d], &DedupPolicy::default()).remove(0)
    }

    #[test]
    fn clock_positions() {
        assert_eq!(clock_position(&Pose::at(0.0, 0.0, 1.0)), 12);
        assert_eq!(clock_position(&Pose::at(0.0, 1.0, 0.0)), 3);
        assert_eq!(clock_position(&Pose::at(0.0, 0.0, -1.0)), 6);
        assert_eq!(clock_position(&Pose::at(0.0, -1.0, 0.0)), 9);
        assert_eq!(clock_position(&Pose::at(0.0, 0.5, 0.866)), 1);
    }

    #[test]
    fn severity_rules() {
        assert_eq!(severity_for(DefectClass::Holes, 0.95, 60), SeverityLevel::High);
        assert_eq!(severity_for(DefectClass::Holes, 0.95, 59), SeverityLevel::Medium);
        assert_eq!(severity_for(DefectClass::Holes, 0.6, 500), SeverityLevel::Medium);
        assert_eq!(severity_for(DefectClass::Holes, 0.59, 500), SeverityLevel::Low);
    }

    #[test]
    fn template_round_trips_through_parser() {
        for (i, class) in DefectClass::DEFECTS.into_iter().enumerate() {
            let pose = Pose::at(1.0 + i as f64 * 2.1, (i as f64).sin() * 0.4, (i as f64).cos() * 0.4);
            let r = record(class, 0.5 + i as f64 * 0.07, 3 + i * 3, pose);
            let ctx = ConditioningContext::for_record(&r, &PipeDescriptor::default());
            let s = template_summarize(&r, &ctx);
            assert!(s.fields_non_empty());
            assert!(s.location.contains(&format!("{:.1}", pose.chainage)));
            let back = parse_summary(&s.full_text).unwrap();
            assert_eq!(back.condition, s.condition);
            assert_eq!(back.location, s.location);
            assert_eq!(back.severity, s.severity);
            assert_eq!(back.implications, s.implications);
        }
    }

    #[test]
    fn injected_delay_window() {
        let t = TemplateSummarizer::new(Duration::from_millis(2300))
            .with_injections(vec![DelayInjection { from_s: 10.0, to_s: 20.0, delay_s: 6.0 }]);
        assert_eq!(t.cost_model(5.0), CostModel::Emulated(Duration::from_millis(2300)));
        assert_eq!(t.cost_model(10.0), CostModel::Emulated(Duration::from_secs(6)));
        assert_eq!(t.cost_model(20.0), CostModel::Emulated(Duration::from_millis(2300)));
    }
}
