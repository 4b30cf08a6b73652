// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::inspect::{DefectClass, Detection, Frame, Pose, Region};

/// Parameter count recorded for the segmentation network the stub stands in for.
/// Some sources quote a 0.17M-0.64M range; the larger configuration is used.
pub const RAPID_SCAN_PARAMS: f64 = 0.64e6;

/// One rate per deficiency class, serialized as a class-name map or a single
/// number applied to every class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRates(pub [f64; 8]);

impl ClassRates {
    pub fn uniform(v: f64) -> Self {
        ClassRates([v; 8])
    }

    pub fn get(&self, class: DefectClass) -> f64 {
        class.index().map_or(0.0, |i| self.0[i])
    }

    pub fn set(&mut self, class: DefectClass, v: f64) {
        if let Some(i) = class.index() {
            self.0[i] = v;
        }
    }
}

impl Serialize for ClassRates {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<DefectClass, f64> =
            DefectClass::DEFECTS.iter().map(|c| (*c, self.get(*c))).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassRates {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Uniform(f64),
            Map(BTreeMap<DefectClass, f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Uniform(v) => Ok(ClassRates::uniform(v)),
            Raw::Map(m) => {
                let mut rates = ClassRates::uniform(0.0);
                for c in DefectClass::DEFECTS {
                    let v = m.get(&c).copied().ok_or_else(|| {
                        serde::de::Error::custom(format!("missing rate for class {c:?}"))
                    })?;
                    rates.set(c, v);
                }
                Ok(rates)
            }
        }
    }
}

/// Behavioural profile of the stub detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub name: String,
    pub recall: ClassRates,
    /// Expected false positives per frame, per class.
    pub false_positive_rate: ClassRates,
    pub confidence_sigma: f64,
    pub delay_s: f64,
    pub seed: u64,
    #[serde(default = "default_params")]
    pub param_count: f64,
}

fn default_params() -> f64 {
    RAPID_SCAN_PARAMS
}

impl DetectorProfile {
    /// Perfect recall, no false positives, no confidence noise, 50 ms per frame.
    pub fn noiseless() -> Self {
        DetectorProfile {
            name: "stub-noiseless".into(),
            recall: ClassRates::uniform(1.0),
            false_positive_rate: ClassRates::uniform(0.0),
            confidence_sigma: 0.0,
            delay_s: 0.05,
            seed: 0,
            param_count: RAPID_SCAN_PARAMS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.recall.0.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err("recall must lie in [0, 1]".into());
        }
        if self.false_positive_rate.0.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err("false-positive rates must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.confidence_sigma) {
            return Err("confidence sigma must lie in [0, 1]".into());
        }
        if !(self.delay_s >= 0.0 && self.delay_s.is_finite()) {
            return Err("delay must be non-negative".into());
        }
        Ok(())
    }
}

/// A stage-one detector. `inference_delay` is the cost the pipeline clock
/// charges per frame.
pub trait Detector: Send {
    fn name(&self) -> &str;
    fn detect(&mut self, frame: &Frame, truth: &[Detection]) -> Vec<Detection>;
    fn inference_delay(&self) -> Duration;
}

/// SplitMix64 finalizer over (seed, stream) so every frame gets an
/// independent, reproducible random stream.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ground-truth driven detector: emits each visible truth with probability
/// `recall`, jitters confidence, and adds Poisson false positives.
#[derive(Debug, Clone)]
pub struct StubDetector {
    profile: DetectorProfile,
}

impl StubDetector {
    pub fn new(profile: DetectorProfile) -> Self {
        StubDetector { profile }
    }

    pub fn profile(&self) -> &DetectorProfile {
        &self.profile
    }

    /// Deterministic in (seed, frame_id, truth).
    pub fn run(&self, frame: &Frame, truth: &[Detection]) -> Vec<Detection> {
        let p = &self.profile;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(p.seed, frame.frame_id));
        let mut out = Vec::with_capacity(truth.len());
        let jitter = (p.confidence_sigma > 0.0).then(|| Normal::new(0.0, p.confidence_sigma).unwrap());
        for t in truth {
            let keep: f64 = rng.random();
            if keep >= p.recall.get(t.class) {
                continue;
            }
            let mut d = t.clone();
            d.frame_id = frame.frame_id;
            if let Some(n) = &jitter {
                d.confidence = (d.confidence + n.sample(&mut rng)).clamp(0.0, 1.0);
            }
            out.push(d);
        }
        let (w, h) = frame.image.as_ref().map_or((64, 48), |im| (im.width(), im.height()));
        for class in DefectClass::DEFECTS {
            let rate = p.false_positive_rate.get(class);
            if rate <= 0.0 {
                continue;
            }
            let count = Poisson::new(rate).map(|d| d.sample(&mut rng) as u64).unwrap_or(0);
            for _ in 0..count {
                let rw = rng.random_range(1..=w.min(8));
                let rh = rng.random_range(1..=h.min(8));
                let r0 = rng.random_range(0..=h - rh);
                let c0 = rng.random_range(0..=w - rw);
                let region = Region::rect(r0, c0, r0 + rh - 1, c0 + rw - 1);
                let pose = Pose {
                    chainage: frame.pose.chainage + rng.random_range(0.0..1.0),
                    lateral: rng.random_range(-0.45..0.45),
                    vertical: rng.random_range(-0.45..0.45),
                    heading: frame.pose.heading,
                    timestamp: frame.capture_time,
                };
                out.push(Detection {
                    frame_id: frame.frame_id,
                    class,
                    confidence: rng.random_range(0.0..=1.0),
                    region,
                    pose,
                });
            }
        }
        out
    }
}

impl Detector for StubDetector {
    fn name(&self) -> &str {
        &self.profile.name
    }

    fn detect(&mut self, frame: &Frame, truth: &[Detection]) -> Vec<Detection> {
        self.run(frame, truth)
    }

    fn inference_delay(&self) -> Duration {
        Duration::from_secs_f64(self.profile.delay_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(id: u64) -> Frame {
        Frame { frame_id: id, image: None, image_ref: String::new(), pose: Pose::at(id as f64 * 0.02, 0.0, 0.0), capture_time: id as f64 / 15.0 }
    }

    fn truth(id: u64, class: DefectClass) -> Detection {
        Detection::new(id, class, 0.8, Region::rect(4, 4, 9, 9), Pose::at(1.0 + id as f64, 0.2, 0.3)).unwrap()
    }

    #[test]
    fn noiseless_is_identity() {
        let det = StubDetector::new(DetectorProfile::noiseless());
        let t = vec![truth(3, DefectClass::Cracks), truth(3, DefectClass::Roots)];
        assert_eq!(det.run(&frame(3), &t), t);
    }

    #[test]
    fn zero_recall_is_empty() {
        let mut p = DetectorProfile::noiseless();
        p.recall = ClassRates::uniform(0.0);
        let det = StubDetector::new(p);
        assert!(det.run(&frame(1), &[truth(1, DefectClass::Holes)]).is_empty());
    }

    #[test]
    fn recall_fraction_monte_carlo() {
        let mut p = DetectorProfile::noiseless();
        p.recall = ClassRates::uniform(0.8);
        p.seed = 11;
        let det = StubDetector::new(p);
        let mut emitted = 0usize;
        let mut total = 0usize;
        for id in 0..2500u64 {
            let t: Vec<Detection> = DefectClass::DEFECTS[..4].iter().map(|c| truth(id, *c)).collect();
            total += t.len();
            emitted += det.run(&frame(id), &t).len();
        }
        assert_eq!(total, 10_000);
        let frac = emitted as f64 / total as f64;
        assert!((frac - 0.8).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn reproducible_with_noise_and_false_positives() {
        let mut p = DetectorProfile::noiseless();
        p.recall = ClassRates::uniform(0.7);
        p.false_positive_rate = ClassRates::uniform(0.3);
        p.confidence_sigma = 0.1;
        p.seed = 99;
        let det = StubDetector::new(p.clone());
        let other = StubDetector::new(p);
        let mut fp = 0;
        for id in 0..200 {
            let t = vec![truth(id, DefectClass::Fracture)];
            let a = det.run(&frame(id), &t);
            let b = other.run(&frame(id), &t);
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            assert!(a.iter().all(|d| (0.0..=1.0).contains(&d.confidence) && d.region.area >= 1));
            fp += a.len();
        }
        assert!(fp > 200);
    }

    #[test]
    fn class_rates_serde() {
        let r: ClassRates = serde_json::from_str("0.5").unwrap();
        assert_eq!(r, ClassRates::uniform(0.5));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ClassRates>(&json).unwrap(), r);
        assert!(serde_json::from_str::<ClassRates>(r#"{"Cracks": 1.0}"#).is_err());
        assert!(DetectorProfile::noiseless().validate().is_ok());
    }
}
