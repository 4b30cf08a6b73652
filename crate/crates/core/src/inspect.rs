// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

//! Domain vocabulary shared by every stage: defect classes, poses, frames,
//! segmentation masks, detections, consolidated deficiency records,
//! structured summaries and the compiled inspection report.
//!
//! All types are plain data and serialize to JSON with the field names used
//! throughout the gateway and the on-disk run artifacts. Images are never
//! inlined in JSON; frames and records carry a content path instead.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing or parsing core domain values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InspectError {
    #[error("unknown defect class label `{0}`")]
    UnknownClass(String),
    #[error("invalid image dimensions {width}x{height} for {len} bytes")]
    BadImage { width: usize, height: usize, len: usize },
    #[error("invalid portable pixmap: {0}")]
    BadPixmap(String),
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("region area must be at least one pixel")]
    EmptyRegion,
    #[error("a detection cannot carry the NoDefect class")]
    NoDefectDetection,
    #[error("mask planes have {got} cells, expected {expected}")]
    BadMask { expected: usize, got: usize },
}

/// Inspection classes: eight deficiency types plus the no-defect label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectClass {
    Cracks,
    Roots,
    Holes,
    JointProblems,
    Deformation,
    Fracture,
    ErosionDeposits,
    LooseGasket,
    NoDefect,
}

impl DefectClass {
    /// The eight deficiency classes in mask-plane order.
    pub const DEFECTS: [DefectClass; 8] = [
        DefectClass::Cracks,
        DefectClass::Roots,
        DefectClass::Holes,
        DefectClass::JointProblems,
        DefectClass::Deformation,
        DefectClass::Fracture,
        DefectClass::ErosionDeposits,
        DefectClass::LooseGasket,
    ];

    pub const ALL: [DefectClass; 9] = [
        DefectClass::Cracks,
        DefectClass::Roots,
        DefectClass::Holes,
        DefectClass::JointProblems,
        DefectClass::Deformation,
        DefectClass::Fracture,
        DefectClass::ErosionDeposits,
        DefectClass::LooseGasket,
        DefectClass::NoDefect,
    ];

    /// Mask plane index, `None` for [`DefectClass::NoDefect`].
    pub fn index(self) -> Option<usize> {
        Self::DEFECTS.iter().position(|c| *c == self)
    }

    pub fn from_index(index: usize) -> Option<DefectClass> {
        Self::DEFECTS.get(index).copied()
    }

    /// Human-readable canonical name, e.g. `Joint Problems`.
    pub fn name(self) -> &'static str {
        match self {
            DefectClass::Cracks => "Cracks",
            DefectClass::Roots => "Roots",
            DefectClass::Holes => "Holes",
            DefectClass::JointProblems => "Joint Problems",
            DefectClass::Deformation => "Deformation",
            DefectClass::Fracture => "Fracture",
            DefectClass::ErosionDeposits => "Erosion/Deposits",
            DefectClass::LooseGasket => "Loose Gasket",
            DefectClass::NoDefect => "No Defect",
        }
    }

    pub fn is_defect(self) -> bool {
        self != DefectClass::NoDefect
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_label(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Case- and separator-insensitive class lookup.
pub fn parse_defect_class(label: &str) -> Result<DefectClass, InspectError> {
    let key = normalize_label(label);
    DefectClass::ALL
        .iter()
        .copied()
        .find(|c| normalize_label(c.name()) == key)
        .ok_or_else(|| InspectError::UnknownClass(label.to_string()))
}

impl FromStr for DefectClass {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_defect_class(s)
    }
}

/// Robot pose along the pipe. Chainage is the distance from the entry point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub chainage: f64,
    pub lateral: f64,
    pub vertical: f64,
    pub heading: f64,
    pub timestamp: f64,
}

impl Pose {
    pub fn at(chainage: f64, lateral: f64, vertical: f64) -> Self {
        Pose { chainage, lateral, vertical, heading: 0.0, timestamp: 0.0 }
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }
}

/// Euclidean distance over (chainage, lateral, vertical). Heading and time are ignored.
pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    let dc = a.chainage - b.chainage;
    let dl = a.lateral - b.lateral;
    let dv = a.vertical - b.vertical;
    (dc * dc + dl * dl + dv * dv).sqrt()
}

/// Interleaved 8-bit RGB buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, InspectError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(InspectError::BadImage { width, height, len: data.len() });
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, InspectError> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Builds an image from separate R, G and B planes.
    pub fn from_planar(width: usize, height: usize, planes: &[u8]) -> Result<Self, InspectError> {
        let n = width * height;
        if width == 0 || height == 0 || planes.len() != n * 3 {
            return Err(InspectError::BadImage { width, height, len: planes.len() });
        }
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.extend_from_slice(&[planes[i], planes[n + i], planes[2 * n + i]]);
        }
        Self::new(width, height, data)
    }

    /// Parses a binary (`P6`) or ASCII (`P3`) portable pixmap with maxval 255.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, InspectError> {
        let bad = |m: &str| InspectError::BadPixmap(m.to_string());
        let mut pos = 0usize;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
        }
        let magic = header[0];
        let width: usize = header[1].parse().map_err(|_| bad("width"))?;
        let height: usize = header[2].parse().map_err(|_| bad("height"))?;
        let maxval: usize = header[3].parse().map_err(|_| bad("maxval"))?;
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        let n = width * height * 3;
        match magic {
            "P6" => {
                // exactly one whitespace byte separates the header from the raster
                let body = bytes.get(pos + 1..pos + 1 + n).ok_or_else(|| bad("truncated raster"))?;
                Self::new(width, height, body.to_vec())
            }
            "P3" => {
                let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("non-ascii raster"))?;
                let data = text
                    .split_ascii_whitespace()
                    .take(n)
                    .map(|t| t.parse::<u8>().map_err(|_| bad("sample")))
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(width, height, data)
            }
            _ => Err(bad("unsupported magic")),
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

/// One camera frame. The raster itself is not serialized; `image_ref` names it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: u64,
    #[serde(skip)]
    pub image: Option<RgbImage>,
    pub image_ref: String,
    pub pose: Pose,
    pub capture_time: f64,
}

/// Per-class binary occupancy planes, plane-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    planes: Vec<bool>,
}

impl SegmentationMask {
    pub fn empty(width: usize, height: usize) -> Self {
        let classes = DefectClass::DEFECTS.len();
        SegmentationMask { width, height, classes, planes: vec![false; width * height * classes] }
    }

    pub fn from_planes(width: usize, height: usize, planes: Vec<bool>) -> Result<Self, InspectError> {
        let classes = DefectClass::DEFECTS.len();
        let expected = width * height * classes;
        if planes.len() != expected {
            return Err(InspectError::BadMask { expected, got: planes.len() });
        }
        Ok(SegmentationMask { width, height, classes, planes })
    }

    fn offset(&self, plane: usize, row: usize, col: usize) -> usize {
        (plane * self.height + row) * self.width + col
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> bool {
        self.planes[self.offset(plane, row, col)]
    }

    pub fn set(&mut self, plane: usize, row: usize, col: usize, on: bool) {
        let i = self.offset(plane, row, col);
        self.planes[i] = on;
    }

    pub fn popcount(&self, plane: usize) -> usize {
        let n = self.width * self.height;
        self.planes[plane * n..(plane + 1) * n].iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

/// A connected pixel region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub centroid_row: f64,
    pub centroid_col: f64,
    pub bbox: BoundingBox,
    pub area: u32,
}

impl Region {
    /// Solid rectangle region, inclusive bounds.
    pub fn rect(min_row: usize, min_col: usize, max_row: usize, max_col: usize) -> Self {
        let h = max_row - min_row + 1;
        let w = max_col - min_col + 1;
        Region {
            centroid_row: (min_row + max_row) as f64 / 2.0,
            centroid_col: (min_col + max_col) as f64 / 2.0,
            bbox: BoundingBox { min_row, min_col, max_row, max_col },
            area: (h * w) as u32,
        }
    }
}

/// Extracts 4-connected components of every class plane with at least
/// `min_area` pixels, ordered by (class index, centroid row, centroid col).
pub fn mask_to_regions(mask: &SegmentationMask, min_area: u32) -> Vec<(DefectClass, Region)> {
    let (w, h) = (mask.width, mask.height);
    let mut out = Vec::new();
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for plane in 0..mask.classes.min(DefectClass::DEFECTS.len()) {
        seen.iter_mut().for_each(|s| *s = false);
        let mut regions = Vec::new();
        for r0 in 0..h {
            for c0 in 0..w {
                if seen[r0 * w + c0] || !mask.get(plane, r0, c0) {
                    continue;
                }
                seen[r0 * w + c0] = true;
                queue.push_back((r0, c0));
                let (mut area, mut sr, mut sc) = (0u32, 0f64, 0f64);
                let mut bbox = BoundingBox { min_row: r0, min_col: c0, max_row: r0, max_col: c0 };
                while let Some((r, c)) = queue.pop_front() {
                    area += 1;
                    sr += r as f64;
                    sc += c as f64;
                    bbox.min_row = bbox.min_row.min(r);
                    bbox.max_row = bbox.max_row.max(r);
                    bbox.min_col = bbox.min_col.min(c);
                    bbox.max_col = bbox.max_col.max(c);
                    let mut visit = |rr: usize, cc: usize| {
                        if !seen[rr * w + cc] && mask.get(plane, rr, cc) {
                            seen[rr * w + cc] = true;
                            queue.push_back((rr, cc));
                        }
                    };
                    if r > 0 {
                        visit(r - 1, c);
                    }
                    if r + 1 < h {
                        visit(r + 1, c);
                    }
                    if c > 0 {
                        visit(r, c - 1);
                    }
                    if c + 1 < w {
                        visit(r, c + 1);
                    }
                }
                if area >= min_area {
                    regions.push(Region {
                        centroid_row: sr / area as f64,
                        centroid_col: sc / area as f64,
                        bbox,
                        area,
                    });
                }
            }
        }
        regions.sort_by(|a, b| {
            a.centroid_row
                .total_cmp(&b.centroid_row)
                .then(a.centroid_col.total_cmp(&b.centroid_col))
        });
        let class = DefectClass::DEFECTS[plane];
        out.extend(regions.into_iter().map(|r| (class, r)));
    }
    out
}

/// Default minimum region area used to suppress single-pixel noise.
pub const DEFAULT_MIN_AREA: u32 = 4;

/// A classified defect sighting in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: u64,
    pub class: DefectClass,
    pub confidence: f64,
    pub region: Region,
    pub pose: Pose,
}

impl Detection {
    pub fn new(
        frame_id: u64,
        class: DefectClass,
        confidence: f64,
        region: Region,
        pose: Pose,
    ) -> Result<Self, InspectError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(InspectError::BadConfidence(confidence));
        }
        if region.area == 0 {
            return Err(InspectError::EmptyRegion);
        }
        if !class.is_defect() {
            return Err(InspectError::NoDefectDetection);
        }
        Ok(Detection { frame_id, class, confidence, region, pose })
    }
}

/// Member bookkeeping kept on a record so merges stay transitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberRef {
    pub frame_id: u64,
    pub pose: Pose,
    pub confidence: f64,
}

/// A unique structural issue after spatial consolidation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficiencyRecord {
    pub record_id: u64,
    pub class: DefectClass,
    pub representative: Detection,
    pub member_count: u32,
    pub first_pose: Pose,
    pub last_pose: Pose,
    pub image_ref: String,
    pub mask_ref: String,
    #[serde(default)]
    pub members: Vec<MemberRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityLevel {
    Low,
    Medium,
    High,
}

impl SeverityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLevel::Low => "low",
            SeverityLevel::Medium => "medium",
            SeverityLevel::High => "high",
        }
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Severity {
    pub level: SeverityLevel,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummarySource {
    Template,
    RemoteModel,
}

/// Four-field inspection narrative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSummary {
    pub condition: String,
    pub location: String,
    pub severity: Severity,
    pub implications: String,
    pub full_text: String,
    pub source: SummarySource,
}

impl StructuredSummary {
    /// Builds a summary whose `full_text` is the canonical labeled rendering.
    pub fn new(
        condition: String,
        location: String,
        severity: Severity,
        implications: String,
        source: SummarySource,
    ) -> Self {
        let full_text = render_sections(&condition, &location, &severity.text, &implications);
        StructuredSummary { condition, location, severity, implications, full_text, source }
    }

    pub fn fields_non_empty(&self) -> bool {
        [&self.condition, &self.location, &self.severity.text, &self.implications]
            .iter()
            .all(|s| !s.trim().is_empty())
    }
}

/// Canonical labeled rendering with one section per line.
pub fn render_sections(condition: &str, location: &str, severity: &str, implications: &str) -> String {
    format!("Condition: {condition}\nLocation: {location}\nSeverity: {severity}\nImplications: {implications}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub pipe_length_m: f64,
    pub material: String,
}

/// Run-level digest of telemetry carried in the report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryDigest {
    pub frames_captured: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub frames_skipped: u64,
    pub detections: u64,
    pub summaries: u64,
    pub summary_failures: u64,
    pub median_end_to_end_s: Option<f64>,
    pub mean_end_to_end_s: Option<f64>,
    pub saturated_throughput: Option<f64>,
    pub degradation_transitions: u32,
    pub peak_memory_gb: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub record: DeficiencyRecord,
    pub summary: Option<StructuredSummary>,
    #[serde(default)]
    pub pending: bool,
}

pub const API_VERSION: u32 = 1;

/// Compiled inspection report, records ordered by first chainage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    pub api_version: u32,
    pub run_id: String,
    pub segment: SegmentDescriptor,
    pub entries: Vec<ReportEntry>,
    pub telemetry: TelemetryDigest,
}

impl InspectionReport {
    pub fn is_fully_summarized(&self) -> bool {
        self.entries.iter().all(|e| e.summary.is_some() && !e.pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_labels() {
        assert_eq!(parse_defect_class("Joint Problems").unwrap(), DefectClass::JointProblems);
        assert_eq!(parse_defect_class("cracks").unwrap(), DefectClass::Cracks);
        assert_eq!(parse_defect_class("erosion-deposits").unwrap(), DefectClass::ErosionDeposits);
        assert_eq!(parse_defect_class("LOOSE_GASKET").unwrap(), DefectClass::LooseGasket);
        assert!(matches!(parse_defect_class("rust"), Err(InspectError::UnknownClass(_))));
        assert!(parse_defect_class("").is_err());
    }

    #[test]
    fn class_round_trip() {
        for c in DefectClass::ALL {
            assert_eq!(parse_defect_class(&c.to_string()).unwrap(), c);
        }
        assert_eq!(DefectClass::DEFECTS.len(), 8);
    }

    #[test]
    fn pose_distances() {
        let a = Pose::at(0.0, 0.0, 0.0);
        assert_eq!(pose_distance(&a, &a), 0.0);
        assert_eq!(pose_distance(&a, &Pose::at(3.0, 4.0, 0.0)), 5.0);
        let d = pose_distance(&Pose::at(1.0, 1.0, 1.0), &Pose::at(2.0, 2.0, 2.0));
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
        // heading and timestamp do not contribute
        let mut b = a;
        b.heading = 1.0;
        b.timestamp = 9.0;
        assert_eq!(pose_distance(&a, &b), 0.0);
    }

    #[test]
    fn empty_mask_has_no_regions() {
        let m = SegmentationMask::empty(8, 6);
        assert!(mask_to_regions(&m, 1).is_empty());
    }

    #[test]
    fn single_block_region() {
        let mut m = SegmentationMask::empty(10, 10);
        for r in 2..5 {
            for c in 4..7 {
                m.set(0, r, c, true);
            }
        }
        let regions = mask_to_regions(&m, 1);
        assert_eq!(regions.len(), 1);
        let (class, region) = regions[0];
        assert_eq!(class, DefectClass::Cracks);
        assert_eq!(region.area, 9);
        assert_eq!((region.centroid_row, region.centroid_col), (3.0, 5.0));
        assert_eq!(region.bbox, BoundingBox { min_row: 2, min_col: 4, max_row: 4, max_col: 6 });
    }

    #[test]
    fn diagonal_pixels_are_separate() {
        let mut m = SegmentationMask::empty(4, 4);
        m.set(3, 1, 1, true);
        m.set(3, 2, 2, true);
        let regions = mask_to_regions(&m, 1);
        assert_eq!(regions.len(), 2);
        assert!(regions.iter().all(|(c, r)| *c == DefectClass::JointProblems && r.area == 1));
        assert!(regions[0].1.centroid_row < regions[1].1.centroid_row);
    }

    #[test]
    fn min_area_filters_noise() {
        let mut m = SegmentationMask::empty(6, 6);
        m.set(1, 0, 0, true);
        for c in 0..4 {
            m.set(1, 5, c, true);
        }
        let regions = mask_to_regions(&m, DEFAULT_MIN_AREA);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].1.area, 4);
    }

    #[test]
    fn ppm_round_trip_and_ascii() {
        let mut img = RgbImage::filled(3, 2, [10, 20, 30]).unwrap();
        img.set_pixel(1, 2, [255, 0, 7]);
        let back = RgbImage::from_ppm(&img.to_ppm()).unwrap();
        assert_eq!(back, img);
        let ascii = b"P3\n# comment\n2 1\n255\n1 2 3 4 5 6\n";
        let a = RgbImage::from_ppm(ascii).unwrap();
        assert_eq!(a.pixel(0, 1), [4, 5, 6]);
        assert!(RgbImage::from_ppm(b"P6\n2 2\n255\n\x00").is_err());
        let planar = RgbImage::from_planar(2, 1, &[1, 4, 2, 5, 3, 6]).unwrap();
        assert_eq!(planar, a);
    }

    #[test]
    fn detection_validation() {
        let r = Region::rect(0, 0, 1, 1);
        let p = Pose::default();
        assert!(Detection::new(1, DefectClass::Roots, 1.2, r, p).is_err());
        assert!(Detection::new(1, DefectClass::NoDefect, 0.5, r, p).is_err());
        assert!(Detection::new(1, DefectClass::Roots, 0.5, r, p).is_ok());
    }

    fn arb_mask() -> impl Strategy<Value = SegmentationMask> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.35), w * h * 8)
                .prop_map(move |planes| SegmentationMask::from_planes(w, h, planes).unwrap())
        })
    }

    proptest! {
        #[test]
        fn regions_partition_each_plane(mask in arb_mask()) {
            let regions = mask_to_regions(&mask, 1);
            for (plane, class) in DefectClass::DEFECTS.iter().enumerate() {
                let sum: u32 = regions.iter().filter(|(c, _)| c == class).map(|(_, r)| r.area).sum();
                prop_assert_eq!(sum as usize, mask.popcount(plane));
            }
        }

        #[test]
        fn pose_distance_is_a_metric(
            a in proptest::array::uniform3(-50.0f64..50.0),
            b in proptest::array::uniform3(-50.0f64..50.0),
            c in proptest::array::uniform3(-50.0f64..50.0),
        ) {
            let (pa, pb, pc) = (Pose::at(a[0], a[1], a[2]), Pose::at(b[0], b[1], b[2]), Pose::at(c[0], c[1], c[2]));
            prop_assert_eq!(pose_distance(&pa, &pb), pose_distance(&pb, &pa));
            prop_assert!(pose_distance(&pa, &pc) <= pose_distance(&pa, &pb) + pose_distance(&pb, &pc) + 1e-9);
            prop_assert_eq!(pose_distance(&pa, &pa), 0.0);
            if a != b {
                prop_assert!(pose_distance(&pa, &pb) > 0.0);
            }
        }
    }
}
