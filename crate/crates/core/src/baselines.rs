//! Reference methods without identity inference: identities fixed to
//! tracker ids at the first frame, optionally corrected by swapping labels
//! whenever an identification disagrees.

use std::collections::{HashMap, HashSet};

use log::warn;
use ndarray::Array2;

use crate::assignment::hungarian_min;
use crate::error::{Error, Result};
use crate::types::{
    Detection, EventSource, GroundTruth, IdentificationEvent, IdentityTrackSet, Method, Point,
    Rwid, TrackSet,
};

fn tracker_id(d: &Detection) -> Result<u64> {
    d.tracker_id.ok_or(Error::MissingTrackerId {
        frame: d.frame,
        local_index: d.local_index,
    })
}

fn relabel(
    track_set: &TrackSet,
    out: &mut IdentityTrackSet,
    t: usize,
    labels: &HashMap<u64, Rwid>,
) -> Result<()> {
    let entries = out.frame_mut(t);
    for (entry, d) in entries.iter_mut().zip(track_set.frame(t)) {
        entry.rwid = labels.get(&tracker_id(d)?).cloned();
    }
    Ok(())
}

/// Identity positions at the first annotated ground-truth frame.
pub fn initial_positions(ground_truth: &GroundTruth) -> Vec<(Rwid, Point)> {
    ground_truth
        .iter()
        .next()
        .map(|(_, objs)| {
            objs.iter()
                .map(|o| (o.rwid.clone(), o.bbox.center()))
                .collect()
        })
        .unwrap_or_default()
}

/// Matches first-frame detections to identity positions (minimum total
/// distance) and lets each tracker id keep its identity for the rest of the
/// video. Tracker ids first seen later stay unassigned.
pub fn first_frame_assign(
    track_set: &TrackSet,
    initial: &[(Rwid, Point)],
) -> Result<IdentityTrackSet> {
    if track_set.total_frames() == 0 || track_set.frame(1).is_empty() {
        return Err(Error::InvalidInput("first frame has no detections".into()));
    }
    let first = track_set.frame(1);
    let cost = Array2::from_shape_fn((first.len(), initial.len()), |(j, k)| {
        first[j].bbox.center().distance(&initial[k].1)
    });
    let matching = hungarian_min(cost.view())?;

    let mut labels = HashMap::new();
    for (j, k) in matching.pairs {
        labels.insert(tracker_id(&first[j])?, initial[k].0.clone());
    }

    let mut out = IdentityTrackSet::unassigned(Method::FirstFrame, track_set);
    for t in 1..=track_set.total_frames() {
        relabel(track_set, &mut out, t, &labels)?;
    }
    Ok(out)
}

/// The detection an identification points at: nearest to the station, or
/// the most probable entry of an explicit row. Ties go to the lowest index.
pub fn identified_detection(
    event: &IdentificationEvent,
    detections: &[Detection],
) -> Option<usize> {
    let score = |j: usize| -> f64 {
        match &event.source {
            EventSource::Station(at) => -detections[j].bbox.center().distance(at),
            EventSource::Row(row) => row.get(j).copied().unwrap_or(f64::NEG_INFINITY),
        }
    };
    (0..detections.len()).fold(None, |best: Option<usize>, j| match best {
        Some(b) if score(b) >= score(j) => Some(b),
        _ => Some(j),
    })
}

/// Corrects a first-frame assignment with identifications: when the
/// identified detection does not carry the event's identity, its track and
/// the track holding that identity swap labels from the event frame on.
/// Without events the base assignment is returned unchanged, provenance
/// included.
pub fn reid_swap(
    base: &IdentityTrackSet,
    events: &[IdentificationEvent],
    track_set: &TrackSet,
) -> Result<IdentityTrackSet> {
    if base.total_frames() != track_set.total_frames() {
        return Err(Error::Shape(format!(
            "assignment has {} frames, track set {}",
            base.total_frames(),
            track_set.total_frames()
        )));
    }
    if events.is_empty() {
        return Ok(base.clone());
    }
    let mut labels: HashMap<u64, Rwid> = HashMap::new();
    let mut seen: HashSet<u64> = HashSet::new();
    for t in 1..=track_set.total_frames() {
        for (entry, d) in base.frame(t).iter().zip(track_set.frame(t)) {
            let id = tracker_id(d)?;
            if seen.insert(id) {
                if let Some(r) = &entry.rwid {
                    labels.insert(id, r.clone());
                }
            }
        }
    }

    let mut ordered: Vec<&IdentificationEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.frame);
    let mut pending = ordered.into_iter().peekable();

    let mut out = base.clone();
    out.method = Method::Reid;
    let mut changed = false;
    for t in 1..=track_set.total_frames() {
        while let Some(e) = pending.next_if(|e| e.frame <= t) {
            let dets = track_set.frame(t);
            let Some(j) = identified_detection(e, dets) else {
                warn!(
                    "identification of {:?} at frame {t} has no detection to point at",
                    e.rwid
                );
                continue;
            };
            let target = tracker_id(&dets[j])?;
            if labels.get(&target) == Some(&e.rwid) {
                continue;
            }
            let holder = labels
                .iter()
                .find(|(_, r)| **r == e.rwid)
                .map(|(id, _)| *id);
            let previous = labels.remove(&target);
            if let Some(h) = holder {
                labels.remove(&h);
                if let Some(p) = previous {
                    labels.insert(h, p);
                }
            }
            labels.insert(target, e.rwid.clone());
            changed = true;
        }
        if changed {
            relabel(track_set, &mut out, t, &labels)?;
        }
    }
    Ok(out)
}
