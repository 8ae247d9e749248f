//! Structural validation of fusion inputs.

use std::collections::HashSet;
use std::fmt;

use crate::types::{EventSource, IdentificationEvent, SceneConfig, TrackSet};

/// Tolerance on explicit probability rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NoFrames,
    EmptyCatalog,
    PopulationMismatch,
    DuplicateRwid,
    FrameCountMismatch,
    BadBox,
    BadConfidence,
    BadLocalIndex,
    DuplicateTrackerId,
    UnknownRwid,
    EventOutOfRange,
    NegativeProbability,
    RowNotNormalized,
    RowLengthMismatch,
}

impl ViolationKind {
    pub fn label(&self) -> &'static str {
        match self {
            ViolationKind::NoFrames => "no frames",
            ViolationKind::EmptyCatalog => "empty catalog",
            ViolationKind::PopulationMismatch => "population mismatch",
            ViolationKind::DuplicateRwid => "duplicate RWID",
            ViolationKind::FrameCountMismatch => "frame count mismatch",
            ViolationKind::BadBox => "non-positive box",
            ViolationKind::BadConfidence => "confidence out of range",
            ViolationKind::BadLocalIndex => "bad local index",
            ViolationKind::DuplicateTrackerId => "duplicate tracker id",
            ViolationKind::UnknownRwid => "unknown RWID",
            ViolationKind::EventOutOfRange => "event frame out of range",
            ViolationKind::NegativeProbability => "negative probability",
            ViolationKind::RowNotNormalized => "row not normalized",
            ViolationKind::RowLengthMismatch => "row length mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, detail: String) {
        self.violations.push(Violation { kind, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{} ({})", v.kind.label(), v.detail))
            .collect();
        write!(f, "{} violation(s): {}", parts.len(), parts.join("; "))
    }
}

/// Lists every invariant violation in the inputs. An empty report means the
/// inputs are admissible for fusion.
pub fn validate_inputs(
    track_set: &TrackSet,
    events: &[IdentificationEvent],
    config: &SceneConfig,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    if config.total_frames == 0 {
        report.push(ViolationKind::NoFrames, "total_frames = 0".into());
    }
    if config.rwid_catalog.is_empty() {
        report.push(ViolationKind::EmptyCatalog, "no RWIDs".into());
    }
    if config.population != config.rwid_catalog.len() {
        report.push(
            ViolationKind::PopulationMismatch,
            format!(
                "population {} vs {} catalog labels",
                config.population,
                config.rwid_catalog.len()
            ),
        );
    }
    let mut labels = HashSet::new();
    for rwid in &config.rwid_catalog {
        if !labels.insert(rwid.as_str()) {
            report.push(ViolationKind::DuplicateRwid, rwid.clone());
        }
    }
    if track_set.total_frames() != config.total_frames {
        report.push(
            ViolationKind::FrameCountMismatch,
            format!(
                "track set has {} frames, scene has {}",
                track_set.total_frames(),
                config.total_frames
            ),
        );
    }

    for (i, dets) in track_set.frames().iter().enumerate() {
        let t = i + 1;
        let mut ids = HashSet::new();
        for (pos, d) in dets.iter().enumerate() {
            if d.frame != t || d.local_index != pos {
                report.push(
                    ViolationKind::BadLocalIndex,
                    format!(
                        "frame {t} position {pos} carries ({}, {})",
                        d.frame, d.local_index
                    ),
                );
            }
            if !(d.bbox.width > 0.0 && d.bbox.height > 0.0) {
                report.push(ViolationKind::BadBox, format!("frame {t} detection {pos}"));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                report.push(
                    ViolationKind::BadConfidence,
                    format!("frame {t} detection {pos}: {}", d.confidence),
                );
            }
            if let Some(id) = d.tracker_id {
                if !ids.insert(id) {
                    report.push(
                        ViolationKind::DuplicateTrackerId,
                        format!("frame {t} id {id}"),
                    );
                }
            }
        }
    }

    for e in events {
        if !labels.contains(e.rwid.as_str()) {
            report.push(
                ViolationKind::UnknownRwid,
                format!("{:?} at frame {}", e.rwid, e.frame),
            );
        }
        if e.frame == 0 || e.frame > track_set.total_frames() {
            report.push(ViolationKind::EventOutOfRange, format!("frame {}", e.frame));
            continue;
        }
        if let EventSource::Row(row) = &e.source {
            if row.iter().any(|p| !(*p >= 0.0)) {
                report.push(
                    ViolationKind::NegativeProbability,
                    format!("{:?} at frame {}", e.rwid, e.frame),
                );
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                report.push(
                    ViolationKind::RowNotNormalized,
                    format!("{:?} at frame {} sums to {sum}", e.rwid, e.frame),
                );
            }
            let m = track_set.frame(e.frame).len();
            if row.len() != m {
                report.push(
                    ViolationKind::RowLengthMismatch,
                    format!(
                        "{:?} at frame {}: {} entries for {m} detections",
                        e.rwid,
                        e.frame,
                        row.len()
                    ),
                );
            }
        }
    }

    report
}
