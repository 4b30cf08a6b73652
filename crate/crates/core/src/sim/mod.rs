// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Mission simulator: synthetic culvert runs with planted deficiencies,
//! frame replay and scoring against ground truth.

mod replay;
mod score;

use std::f64::consts::TAU;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{finalize_log, DedupPolicy};
use crate::inspect::{DefectClass, Detection, Pose, Region, SegmentDescriptor, StructuredSummary};
use crate::summarize::{template_summarize, ConditioningContext, PipeDescriptor};

pub use replay::{frame_count, procedural_image, replay, Replay, ReplayFrame, FRAME_HEIGHT, FRAME_WIDTH};
pub use score::{greedy_match, score_run, ClassScore, RunScore};

pub const SCENARIO_VERSION: u32 = 1;

/// Defect counts per class in the training corpus, in [`DefectClass::DEFECTS`] order.
pub const CLASS_FREQUENCIES: [u32; 8] = [1661, 295, 87, 1631, 131, 1661, 106, 133];

/// Planted defects sit on the pipe wall at this radius.
pub const WALL_RADIUS_M: f64 = 0.45;

/// Half-width in metres of the band ahead of the robot in which a defect is in view.
pub const VIEW_AHEAD_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unsupported scenario_version {0}")]
    Version(u32),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    #[default]
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    fn confidence_range(self) -> (f64, f64) {
        match self {
            Difficulty::Easy => (0.75, 0.98),
            Difficulty::Moderate => (0.6, 0.95),
            Difficulty::Hard => (0.45, 0.9),
        }
    }

    fn tags(self) -> Vec<String> {
        match self {
            Difficulty::Easy => vec!["clear".into()],
            Difficulty::Moderate => vec!["dim-lighting".into()],
            Difficulty::Hard => vec!["dim-lighting".into(), "debris".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDefect {
    pub defect_id: u64,
    pub class: DefectClass,
    pub pose: Pose,
    /// Physical extent along the wall in metres.
    pub extent_m: f64,
    /// Mask region the defect occupies in frames where it is visible.
    pub region: Region,
    /// Confidence the noiseless detector reports.
    pub confidence: f64,
    pub canonical: StructuredSummary,
}

impl PlantedDefect {
    pub fn visible_from(&self, robot_chainage: f64) -> bool {
        let c = self.pose.chainage;
        robot_chainage >= c - VIEW_AHEAD_M - 1e-9 && robot_chainage <= c + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_version: u32,
    pub name: String,
    pub seed: u64,
    pub length_m: f64,
    pub fps: f64,
    pub speed_mps: f64,
    pub pipe: PipeDescriptor,
    #[serde(default)]
    pub difficulty: Vec<String>,
    pub defects: Vec<PlantedDefect>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.scenario_version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(self.scenario_version));
        }
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return bad("length must be positive");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return bad("speed must be positive");
        }
        for d in &self.defects {
            if !(0.0..=self.length_m).contains(&d.pose.chainage) {
                return bad("planted defect outside the pipe");
            }
            if !d.class.is_defect() {
                return bad("planted class must be a defect");
            }
            if !(0.0..=1.0).contains(&d.confidence) || d.region.area == 0 {
                return bad("planted defect needs a confidence in [0, 1] and a non-empty region");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn segment(&self) -> SegmentDescriptor {
        SegmentDescriptor { pipe_length_m: self.length_m, material: self.pipe.material.clone() }
    }

    /// Ground-truth detections visible from a frame at `robot`.
    pub fn visible_truth(&self, frame_id: u64, robot: &Pose) -> Vec<Detection> {
        self.defects
            .iter()
            .filter(|d| d.visible_from(robot.chainage))
            .map(|d| Detection {
                frame_id,
                class: d.class,
                confidence: d.confidence,
                region: d.region,
                pose: d.pose.with_timestamp(robot.timestamp),
            })
            .collect()
    }
}

fn region_for_extent(extent_m: f64) -> Region {
    let w = ((extent_m * 60.0).round() as usize).clamp(2, FRAME_WIDTH - 2);
    let h = ((extent_m * 45.0).round() as usize).clamp(2, FRAME_HEIGHT - 2);
    let r0 = (FRAME_HEIGHT - h) / 2;
    let c0 = (FRAME_WIDTH - w) / 2;
    Region::rect(r0, c0, r0 + h - 1, c0 + w - 1)
}

/// Builds a planted defect and its canonical reference summary.
pub fn plant(
    defect_id: u64,
    class: DefectClass,
    pose: Pose,
    extent_m: f64,
    confidence: f64,
    pipe: &PipeDescriptor,
) -> PlantedDefect {
    let region = region_for_extent(extent_m);
    let truth = Detection { frame_id: 0, class, confidence, region, pose };
    let record = finalize_log([truth], &DedupPolicy::default()).remove(0);
    let canonical = template_summarize(&record, &ConditioningContext::for_record(&record, pipe));
    PlantedDefect { defect_id, class, pose, extent_m, region, confidence, canonical }
}

fn wall_pose(chainage: f64, angle: f64) -> Pose {
    Pose::at(chainage, WALL_RADIUS_M * angle.sin(), WALL_RADIUS_M * angle.cos())
}

/// Deterministic synthetic run. Defect count is Poisson with mean
/// `density_per_10m * length / 10`; classes follow [`CLASS_FREQUENCIES`];
/// defects are kept at least 1 m apart along the pipe.
pub fn generate_scenario(seed: u64, length_m: f64, density_per_10m: f64, difficulty: Difficulty) -> Scenario {
    assert!(density_per_10m >= 0.0, "density must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pipe = PipeDescriptor { length_m, ..PipeDescriptor::default() };
    let mean = density_per_10m * length_m / 10.0;
    let count = if mean > 0.0 { Poisson::new(mean).expect("finite mean").sample(&mut rng) as usize } else { 0 };
    let classes = WeightedIndex::new(CLASS_FREQUENCIES).expect("positive weights");
    let (lo, hi) = difficulty.confidence_range();

    let mut chainages: Vec<f64> = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..1000 {
            let c = rng.random_range(0.0..=length_m);
            if chainages.iter().all(|o| (o - c).abs() >= 1.0) {
                chainages.push(c);
                break;
            }
        }
    }
    chainages.sort_by(f64::total_cmp);

    let defects = chainages
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let class = DefectClass::DEFECTS[classes.sample(&mut rng)];
            let pose = wall_pose(c, rng.random_range(0.0..TAU));
            let extent = rng.random_range(0.05..0.4);
            let conf = rng.random_range(lo..=hi);
            plant(i as u64, class, pose, extent, conf, &pipe)
        })
        .collect();

    Scenario {
        scenario_version: SCENARIO_VERSION,
        name: format!("generated-{seed}"),
        seed,
        length_m,
        fps: 15.0,
        speed_mps: 0.3,
        pipe,
        difficulty: difficulty.tags(),
        defects,
    }
}

/// 60 ft laboratory pipe with four hand-placed defects, one per segment
/// except the last, which also carries a critical fracture.
pub fn lab_60ft() -> Scenario {
    let pipe = PipeDescriptor { length_m: 18.3, material: "corrugated metal".into(), diameter_class: "900 mm".into() };
    let specs = [
        (DefectClass::Cracks, 2.4, 0.4, 0.20, 0.86),
        (DefectClass::JointProblems, 7.5, 3.1, 0.25, 0.82),
        (DefectClass::Roots, 13.1, 5.5, 0.30, 0.78),
        (DefectClass::Fracture, 15.9, 1.6, 0.35, 0.93),
    ];
    preset("lab-60ft", 60, pipe, &specs)
}

/// 65 ft field pipe with six defects spread along the run.
pub fn field_65ft() -> Scenario {
    let pipe = PipeDescriptor { length_m: 19.8, material: "reinforced concrete".into(), diameter_class: "1200 mm".into() };
    let specs = [
        (DefectClass::ErosionDeposits, 1.8, 3.0, 0.35, 0.81),
        (DefectClass::Cracks, 4.6, 0.3, 0.15, 0.77),
        (DefectClass::JointProblems, 8.2, 2.5, 0.25, 0.84),
        (DefectClass::LooseGasket, 11.0, 4.5, 0.20, 0.72),
        (DefectClass::Holes, 15.3, 1.0, 0.20, 0.91),
        (DefectClass::Roots, 18.4, 5.8, 0.30, 0.80),
    ];
    preset("field-65ft", 65, pipe, &specs)
}

fn preset(name: &str, seed: u64, pipe: PipeDescriptor, specs: &[(DefectClass, f64, f64, f64, f64)]) -> Scenario {
    let defects = specs
        .iter()
        .enumerate()
        .map(|(i, &(class, chainage, hour, extent, conf))| {
            plant(i as u64, class, wall_pose(chainage, hour / 12.0 * TAU), extent, conf, &pipe)
        })
        .collect();
    Scenario {
        scenario_version: SCENARIO_VERSION,
        name: name.into(),
        seed,
        length_m: pipe.length_m,
        fps: 15.0,
        speed_mps: 0.3,
        pipe,
        difficulty: vec!["clear".into()],
        defects,
    }
}

pub fn preset_by_name(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "lab-60ft" => Ok(lab_60ft()),
        "field-65ft" => Ok(field_65ft()),
        other => Err(ScenarioError::UnknownPreset(other.to_string())),
    }
}
