//! Identity-aware evaluation: a detection counts as correct only when it
//! overlaps a ground-truth object and carries that object's identity.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_max;
use crate::types::{BBox, GroundTruth, GtObject, IdentityEntry, IdentityTrackSet};

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let h = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Matches ground truth to detections, maximizing total IOU, then drops
/// pairs that do not overlap. Returns `(gt index, detection index)`.
pub fn match_frame(gt: &[BBox], detections: &[BBox]) -> Vec<(usize, usize)> {
    if gt.is_empty() || detections.is_empty() {
        return Vec::new();
    }
    let overlap = Array2::from_shape_fn((gt.len(), detections.len()), |(g, d)| {
        iou(&gt[g], &detections[d])
    });
    let matching = hungarian_max(overlap.view()).expect("IOU values are finite");
    matching
        .pairs
        .into_iter()
        .filter(|&(g, d)| overlap[[g, d]] > 0.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdentityConfusion {
    pub i_tp: u64,
    pub i_fp: u64,
    pub i_fn: u64,
}

impl std::ops::AddAssign for IdentityConfusion {
    fn add_assign(&mut self, rhs: Self) {
        self.i_tp += rhs.i_tp;
        self.i_fp += rhs.i_fp;
        self.i_fn += rhs.i_fn;
    }
}

/// Detailed per-frame outcome, finer than the three confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameOutcome {
    pub correct: u64,
    pub wrong_rwid: u64,
    pub unassigned_on_gt: u64,
    pub unmatched_gt: u64,
    pub unmatched_detections: u64,
}

impl FrameOutcome {
    pub fn confusion(&self) -> IdentityConfusion {
        IdentityConfusion {
            i_tp: self.correct,
            i_fp: self.wrong_rwid + self.unmatched_detections,
            i_fn: self.unassigned_on_gt + self.unmatched_gt,
        }
    }
}

/// Scores one annotated frame.
pub fn frame_outcome(gt: &[GtObject], predicted: &[IdentityEntry]) -> FrameOutcome {
    let gt_boxes: Vec<BBox> = gt.iter().map(|o| o.bbox).collect();
    let det_boxes: Vec<BBox> = predicted.iter().map(|e| e.bbox).collect();
    let pairs = match_frame(&gt_boxes, &det_boxes);

    let mut out = FrameOutcome::default();
    for &(g, d) in &pairs {
        match &predicted[d].rwid {
            Some(r) if *r == gt[g].rwid => out.correct += 1,
            Some(_) => out.wrong_rwid += 1,
            None => out.unassigned_on_gt += 1,
        }
    }
    out.unmatched_gt = (gt.len() - pairs.len()) as u64;
    out.unmatched_detections = (predicted.len() - pairs.len()) as u64;
    out
}

/// I-TP / I-FP / I-FN summed over annotated frames.
pub fn identity_confusion(
    ground_truth: &GroundTruth,
    assignment: &IdentityTrackSet,
) -> IdentityConfusion {
    let mut total = IdentityConfusion::default();
    for (t, objs) in ground_truth.iter() {
        total += frame_outcome(objs, assignment.frame(t)).confusion();
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro precision, recall and F1 from pooled counts.
pub fn micro_scores(c: &IdentityConfusion) -> Scores {
    let precision = ratio(c.i_tp, c.i_tp + c.i_fp);
    let recall = ratio(c.i_tp, c.i_tp + c.i_fn);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesMode {
    /// Counts from the first frame up to each window end.
    Cumulative,
    /// Counts within each window only.
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub frame: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores per window of `window` frames. Windows without annotations are
/// omitted.
pub fn f1_over_time(
    ground_truth: &GroundTruth,
    assignment: &IdentityTrackSet,
    window: usize,
    mode: SeriesMode,
) -> Vec<SeriesPoint> {
    assert!(window >= 1, "window must be at least one frame");
    let per_frame: Vec<(usize, IdentityConfusion)> = ground_truth
        .iter()
        .map(|(t, objs)| (t, frame_outcome(objs, assignment.frame(t)).confusion()))
        .collect();
    let Some(&(last, _)) = per_frame.last() else {
        return Vec::new();
    };

    let mut out = Vec::new();
    let mut cumulative = IdentityConfusion::default();
    let mut cursor = per_frame.iter().peekable();
    let mut start = 1;
    while start <= last {
        let end = start + window - 1;
        let mut windowed = IdentityConfusion::default();
        let mut annotated = false;
        while let Some((_, c)) = cursor.next_if(|(t, _)| *t <= end) {
            windowed += *c;
            annotated = true;
        }
        cumulative += windowed;
        if annotated {
            let counts = match mode {
                SeriesMode::Cumulative => cumulative,
                SeriesMode::Windowed => windowed,
            };
            let s = micro_scores(&counts);
            out.push(SeriesPoint {
                frame: end.min(last),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
            });
        }
        start = end + 1;
    }
    out
}

/// Flat summary of one evaluation, serialized as a JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub i_tp: u64,
    pub i_fp: u64,
    pub i_fn: u64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl ScoreReport {
    pub fn from_confusion(c: IdentityConfusion) -> Self {
        let s = micro_scores(&c);
        ScoreReport {
            i_tp: c.i_tp,
            i_fp: c.i_fp,
            i_fn: c.i_fn,
            micro_precision: s.precision,
            micro_recall: s.recall,
            micro_f1: s.f1,
        }
    }
}

pub fn evaluate(ground_truth: &GroundTruth, assignment: &IdentityTrackSet) -> ScoreReport {
    ScoreReport::from_confusion(identity_confusion(ground_truth, assignment))
}
