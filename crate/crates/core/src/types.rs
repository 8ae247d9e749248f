//! Domain types shared by every stage of the pipeline.
//!
//! Frames are 1-indexed everywhere in the public API (MOT convention) and
//! stored densely, so `frames[t - 1]` holds frame `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A real-world identity label, e.g. an RFID tag number.
pub type Rwid = String;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned box in MOT layout: left, top, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        BBox {
            left,
            top,
            width,
            height,
        }
    }

    pub fn centered(center: Point, width: f64, height: f64) -> Self {
        BBox::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            width,
            height,
        )
    }

    pub fn center(&self) -> Point {
        Point::new(self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Scene-level metadata: frame count and the identity catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub total_frames: usize,
    pub rwid_catalog: Vec<Rwid>,
    pub population: usize,
    /// Metadata only; nothing in the pipeline depends on it.
    pub frame_rate: f64,
}

impl SceneConfig {
    pub fn new(total_frames: usize, rwid_catalog: Vec<Rwid>) -> Self {
        let population = rwid_catalog.len();
        SceneConfig {
            total_frames,
            rwid_catalog,
            population,
            frame_rate: 25.0,
        }
    }

    pub fn rwid_index(&self, rwid: &str) -> Option<usize> {
        self.rwid_catalog.iter().position(|r| r == rwid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub local_index: usize,
    pub tracker_id: Option<u64>,
    pub bbox: BBox,
    pub confidence: f64,
}

/// Per-frame detections of the base tracker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    frames: Vec<Vec<Detection>>,
}

impl TrackSet {
    /// Wraps already-indexed frames. `frames[0]` is frame 1.
    pub fn new(frames: Vec<Vec<Detection>>) -> Self {
        TrackSet { frames }
    }

    /// Builds a track set from `(frame, tracker_id, bbox, confidence)` rows,
    /// assigning local indices in input order within each frame. Frames with
    /// no rows are left empty.
    pub fn from_rows<I>(total_frames: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = (usize, Option<u64>, BBox, f64)>,
    {
        let mut frames: Vec<Vec<Detection>> = vec![Vec::new(); total_frames];
        for (frame, tracker_id, bbox, confidence) in rows {
            assert!(frame >= 1, "frames are 1-indexed");
            if frame > frames.len() {
                frames.resize(frame, Vec::new());
            }
            let slot = &mut frames[frame - 1];
            slot.push(Detection {
                frame,
                local_index: slot.len(),
                tracker_id,
                bbox,
                confidence,
            });
        }
        TrackSet { frames }
    }

    pub fn total_frames(&self) -> usize {
        self.frames.len()
    }

    /// Detections at 1-indexed frame `t`.
    pub fn frame(&self, t: usize) -> &[Detection] {
        &self.frames[t - 1]
    }

    pub fn frames(&self) -> &[Vec<Detection>] {
        &self.frames
    }

    /// Detection count m_t for each frame, in frame order.
    pub fn counts(&self) -> Vec<usize> {
        self.frames.iter().map(Vec::len).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.iter().all(Vec::is_empty)
    }

    /// Keeps only the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> TrackSet {
        TrackSet::new(self.frames.iter().take(frames).cloned().collect())
    }
}

/// Where an identification's probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EventSource {
    /// The identity was read at a station; detections are weighted by their
    /// distance to it.
    Station(Point),
    /// One probability per detection of the event frame, in local-index order.
    Row(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationEvent {
    pub frame: usize,
    pub rwid: Rwid,
    pub source: EventSource,
}

impl IdentificationEvent {
    pub fn station(frame: usize, rwid: impl Into<Rwid>, at: Point) -> Self {
        IdentificationEvent {
            frame,
            rwid: rwid.into(),
            source: EventSource::Station(at),
        }
    }

    pub fn row(frame: usize, rwid: impl Into<Rwid>, row: Vec<f64>) -> Self {
        IdentificationEvent {
            frame,
            rwid: rwid.into(),
            source: EventSource::Row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub rwid: Rwid,
    pub bbox: BBox,
}

/// Annotated ground truth; only some frames need annotations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    frames: BTreeMap<usize, Vec<GtObject>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: usize, rwid: impl Into<Rwid>, bbox: BBox) {
        self.frames.entry(frame).or_default().push(GtObject {
            rwid: rwid.into(),
            bbox,
        });
    }

    /// Marks a frame as annotated even when it holds no objects.
    pub fn annotate_empty(&mut self, frame: usize) {
        self.frames.entry(frame).or_default();
    }

    pub fn frame(&self, t: usize) -> Option<&[GtObject]> {
        self.frames.get(&t).map(Vec::as_slice)
    }

    pub fn annotated_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[GtObject])> {
        self.frames.iter().map(|(t, v)| (*t, v.as_slice()))
    }

    pub fn bbox_of(&self, t: usize, rwid: &str) -> Option<BBox> {
        self.frames
            .get(&t)?
            .iter()
            .find(|o| o.rwid == rwid)
            .map(|o| o.bbox)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sorted distinct identities appearing anywhere.
    pub fn rwids(&self) -> Vec<Rwid> {
        let mut out: Vec<Rwid> = self
            .frames
            .values()
            .flatten()
            .map(|o| o.rwid.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Which method produced an identity assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Hmm,
    FirstFrame,
    Reid,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hmm => "hmm",
            Method::FirstFrame => "first_frame",
            Method::Reid => "reid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hmm" => Ok(Method::Hmm),
            "first_frame" => Ok(Method::FirstFrame),
            "reid" => Ok(Method::Reid),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// One detection of the output, with its identity or `None` when unassigned.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityEntry {
    pub local_index: usize,
    pub bbox: BBox,
    pub confidence: f64,
    pub rwid: Option<Rwid>,
}

/// Frame-by-frame identity assignment over all detections of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTrackSet {
    pub method: Method,
    frames: Vec<Vec<IdentityEntry>>,
}

impl IdentityTrackSet {
    pub fn new(method: Method, frames: Vec<Vec<IdentityEntry>>) -> Self {
        IdentityTrackSet { method, frames }
    }

    /// Every detection of `track_set`, all unassigned.
    pub fn unassigned(method: Method, track_set: &TrackSet) -> Self {
        let frames = track_set
            .frames()
            .iter()
            .map(|dets| {
                dets.iter()
                    .map(|d| IdentityEntry {
                        local_index: d.local_index,
                        bbox: d.bbox,
                        confidence: d.confidence,
                        rwid: None,
                    })
                    .collect()
            })
            .collect();
        IdentityTrackSet { method, frames }
    }

    pub fn total_frames(&self) -> usize {
        self.frames.len()
    }

    /// Entries at 1-indexed frame `t`; empty past the end.
    pub fn frame(&self, t: usize) -> &[IdentityEntry] {
        self.frames.get(t - 1).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut Vec<IdentityEntry> {
        &mut self.frames[t - 1]
    }

    pub fn frames(&self) -> &[Vec<IdentityEntry>] {
        &self.frames
    }

    pub fn assigned_count(&self) -> usize {
        self.frames
            .iter()
            .flatten()
            .filter(|e| e.rwid.is_some())
            .count()
    }

    /// True when no frame assigns an identity twice.
    pub fn is_one_to_one(&self) -> bool {
        self.frames.iter().all(|entries| {
            let mut seen: Vec<&str> = entries.iter().filter_map(|e| e.rwid.as_deref()).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            seen.len() == n
        })
    }
}
