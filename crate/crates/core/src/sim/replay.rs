// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use super::Scenario;
use crate::inspect::{DefectClass, Detection, Frame, Pose, RgbImage};

pub const FRAME_WIDTH: usize = 64;
pub const FRAME_HEIGHT: usize = 48;

/// A frame plus the ground truth visible in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayFrame {
    pub frame: Frame,
    pub truth: Vec<Detection>,
}

/// Number of frames the robot captures while traversing the pipe.
pub fn frame_count(s: &Scenario) -> u64 {
    (s.length_m / s.speed_mps * s.fps + 1e-9).floor() as u64
}

fn class_tint(class: DefectClass) -> [u8; 3] {
    match class {
        DefectClass::Cracks => [200, 40, 40],
        DefectClass::Roots => [60, 160, 60],
        DefectClass::Holes => [20, 20, 20],
        DefectClass::JointProblems => [210, 150, 40],
        DefectClass::Deformation => [150, 60, 200],
        DefectClass::Fracture => [240, 0, 90],
        DefectClass::ErosionDeposits => [120, 90, 50],
        DefectClass::LooseGasket => [40, 120, 220],
        DefectClass::NoDefect => [128, 128, 128],
    }
}

/// Placeholder raster: a radial-ish wall texture with visible defects painted
/// into their regions.
pub fn procedural_image(frame_id: u64, truth: &[Detection]) -> RgbImage {
    let mut img = RgbImage::filled(FRAME_WIDTH, FRAME_HEIGHT, [0, 0, 0]).expect("fixed dimensions");
    let phase = (frame_id % 16) as usize;
    for r in 0..FRAME_HEIGHT {
        for c in 0..FRAME_WIDTH {
            let dr = r.abs_diff(FRAME_HEIGHT / 2);
            let dc = c.abs_diff(FRAME_WIDTH / 2);
            let ring = ((dr + dc + phase) % 16) as u8;
            let v = 90 + ring * 6;
            img.set_pixel(r, c, [v, v.saturating_sub(10), v.saturating_sub(25)]);
        }
    }
    for d in truth {
        let b = d.region.bbox;
        for r in b.min_row..=b.max_row.min(FRAME_HEIGHT - 1) {
            for c in b.min_col..=b.max_col.min(FRAME_WIDTH - 1) {
                img.set_pixel(r, c, class_tint(d.class));
            }
        }
    }
    img
}

/// Frame source for a scenario. Poses advance by `speed / fps` per frame.
/// Realtime mode sleeps so frame `i` is yielded no earlier than `i / fps`
/// seconds after the first call to `next`.
#[derive(Debug, Clone)]
pub struct Replay {
    scenario: Scenario,
    next: u64,
    count: u64,
    realtime: bool,
    with_images: bool,
    started: Option<Instant>,
}

pub fn replay(scenario: &Scenario, realtime: bool) -> Replay {
    Replay {
        scenario: scenario.clone(),
        next: 0,
        count: frame_count(scenario),
        realtime,
        with_images: false,
        started: None,
    }
}

impl Replay {
    /// Attach procedural rasters to each frame.
    pub fn with_images(mut self, on: bool) -> Self {
        self.with_images = on;
        self
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl Iterator for Replay {
    type Item = ReplayFrame;

    fn next(&mut self) -> Option<ReplayFrame> {
        if self.next >= self.count {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let s = &self.scenario;
        let t = i as f64 / s.fps;
        if self.realtime {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(t);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let pose = Pose::at(i as f64 * s.speed_mps / s.fps, 0.0, 0.0).with_timestamp(t);
        let truth = s.visible_truth(i, &pose);
        let image = self.with_images.then(|| procedural_image(i, &truth));
        let frame = Frame { frame_id: i, image, image_ref: format!("frames/{i:08}.ppm"), pose, capture_time: t };
        Some(ReplayFrame { frame, truth })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::lab_60ft;

    #[test]
    fn lab_run_has_915_frames() {
        let s = lab_60ft();
        assert_eq!(frame_count(&s), 915);
        assert_eq!(replay(&s, false).count(), 915);
    }

    #[test]
    fn chainage_non_decreasing_and_truth_consistent() {
        let s = lab_60ft();
        let frames: Vec<_> = replay(&s, false).collect();
        for w in frames.windows(2) {
            assert!(w[1].frame.pose.chainage >= w[0].frame.pose.chainage);
        }
        for f in &frames {
            for t in &f.truth {
                let c = t.pose.chainage;
                assert!(f.frame.pose.chainage >= c - 1.0 - 1e-9 && f.frame.pose.chainage <= c + 1e-9);
            }
        }
        assert!(frames.iter().any(|f| !f.truth.is_empty()));
    }

    #[test]
    fn images_paint_truth_regions() {
        let s = lab_60ft();
        let f = replay(&s, false).with_images(true).find(|f| !f.truth.is_empty()).unwrap();
        let img = f.frame.image.as_ref().unwrap();
        let t = &f.truth[0];
        assert_eq!(img.pixel(t.region.bbox.min_row, t.region.bbox.min_col), class_tint(t.class));
    }

    #[test]
    fn realtime_matches_fast_content() {
        let mut s = lab_60ft();
        s.length_m = 0.1;
        s.defects.clear();
        let fast: Vec<_> = replay(&s, false).collect();
        let started = Instant::now();
        let slow: Vec<_> = replay(&s, true).collect();
        assert_eq!(fast, slow);
        let expect = (fast.len() - 1) as f64 / s.fps;
        assert!(started.elapsed().as_secs_f64() >= expect * 0.95);
    }
}
