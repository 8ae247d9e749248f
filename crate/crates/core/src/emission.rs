//! Per-frame emission rows for one identity.
//!
//! Rows carry one entry per detection plus the LOST entry last. Frames with
//! an identification put all mass on detections (LOST gets zero); frames
//! without one are uniform over all `m_t + 1` states.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::iou;
use crate::rows::FrameRows;
use crate::types::{
    Detection, EventSource, GroundTruth, IdentificationEvent, Point, Rwid, TrackSet,
};

/// A fixed identification station (e.g. a feeder with an RFID reader).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationModel {
    pub station_xy: Point,
    /// Distances below this are clamped to it.
    pub distance_floor: f64,
}

impl StationModel {
    pub fn new(station_xy: Point) -> Self {
        StationModel {
            station_xy,
            distance_floor: 1.0,
        }
    }

    pub fn with_floor(mut self, distance_floor: f64) -> Self {
        self.distance_floor = distance_floor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionConfig {
    pub distance_floor: f64,
    /// How many frames a station event may move to find detections when its
    /// own frame is empty.
    pub defer_window: usize,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        EmissionConfig {
            distance_floor: 1.0,
            defer_window: 5,
        }
    }
}

/// Emission rows of one identity over the whole video.
///
/// Frames share rows: each frame points into a small store holding one
/// uniform row per detection count plus the rows of evidence frames.
#[derive(Debug, Clone)]
pub struct EmissionSequence {
    pub rwid: Rwid,
    index: Vec<usize>,
    store: FrameRows,
    event_frames: Vec<usize>,
}

impl PartialEq for EmissionSequence {
    fn eq(&self, other: &Self) -> bool {
        self.rwid == other.rwid
            && self.event_frames == other.event_frames
            && self.total_frames() == other.total_frames()
            && (1..=self.total_frames()).all(|t| self.row(t) == other.row(t))
    }
}

impl EmissionSequence {
    /// Uniform rows everywhere except at `evidence` frames.
    fn sparse(rwid: Rwid, counts: &[usize], evidence: Vec<(usize, Vec<f64>)>) -> Self {
        let mut store = FrameRows::default();
        let mut uniform: BTreeMap<usize, usize> = BTreeMap::new();
        let mut index: Vec<usize> = counts
            .iter()
            .map(|&m| {
                *uniform.entry(m).or_insert_with(|| {
                    store.push(&uniform_row(m));
                    store.len()
                })
            })
            .collect();
        let mut event_frames = Vec::with_capacity(evidence.len());
        for (t, row) in evidence {
            store.push(&row);
            index[t - 1] = store.len();
            event_frames.push(t);
        }
        EmissionSequence {
            rwid,
            index,
            store,
            event_frames,
        }
    }

    /// All-uniform sequence: an identity with no observations.
    pub fn uniform(rwid: impl Into<Rwid>, counts: &[usize]) -> Self {
        Self::sparse(rwid.into(), counts, Vec::new())
    }

    /// Wraps raw rows (each of length `m_t + 1`).
    pub fn from_rows(rwid: impl Into<Rwid>, rows: Vec<Vec<f64>>) -> Self {
        EmissionSequence {
            rwid: rwid.into(),
            index: (1..=rows.len()).collect(),
            store: FrameRows::from_rows(rows),
            event_frames: Vec::new(),
        }
    }

    pub fn total_frames(&self) -> usize {
        self.index.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.store.row(self.index[t - 1])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.index.iter().map(|&i| self.store.row(i))
    }

    /// Frames carrying identification evidence, ascending.
    pub fn event_frames(&self) -> &[usize] {
        &self.event_frames
    }

    pub fn is_observed(&self) -> bool {
        !self.event_frames.is_empty()
    }

    pub fn truncated(&self, frames: usize) -> EmissionSequence {
        let frames = frames.min(self.total_frames());
        EmissionSequence {
            rwid: self.rwid.clone(),
            index: self.index[..frames].to_vec(),
            store: self.store.clone(),
            event_frames: self
                .event_frames
                .iter()
                .copied()
                .filter(|&t| t <= frames)
                .collect(),
        }
    }
}

fn inverse_distance_row(centers: impl Iterator<Item = Point>, at: Point, floor: f64) -> Vec<f64> {
    let mut row: Vec<f64> = centers.map(|c| 1.0 / c.distance(&at).max(floor)).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|w| *w /= total);
    row
}

/// Inverse-distance weighting of detections around a station. The returned
/// row has `m_t + 1` entries; the LOST entry is zero.
pub fn distance_emission_row(detections: &[Detection], station: &StationModel) -> Result<Vec<f64>> {
    if detections.is_empty() {
        return Err(Error::InvalidInput(
            "distance row needs at least one detection".into(),
        ));
    }
    if !(station.distance_floor > 0.0) {
        return Err(Error::InvalidInput(
            "distance_floor must be positive".into(),
        ));
    }
    let mut row = inverse_distance_row(
        detections.iter().map(|d| d.bbox.center()),
        station.station_xy,
        station.distance_floor,
    );
    row.push(0.0);
    Ok(row)
}

/// Uniform row over `m + 1` states.
pub fn uniform_row(m: usize) -> Vec<f64> {
    vec![1.0 / (m + 1) as f64; m + 1]
}

fn nearest_nonempty(track_set: &TrackSet, t: usize, window: usize) -> Option<usize> {
    let total = track_set.total_frames();
    (1..=window).find_map(|d| {
        [t.checked_sub(d), Some(t + d)]
            .into_iter()
            .flatten()
            .find(|&s| s >= 1 && s <= total && !track_set.frame(s).is_empty())
    })
}

/// Builds the emission sequence of identity `rwid` from its events.
///
/// Events of other identities are ignored. Several events on the same frame
/// are combined by entrywise product and renormalized.
pub fn build_emission_sequence(
    rwid: &str,
    events: &[IdentificationEvent],
    track_set: &TrackSet,
    config: &EmissionConfig,
) -> Result<EmissionSequence> {
    let counts = track_set.counts();
    let mut evidence: BTreeMap<usize, Vec<f64>> = BTreeMap::new();

    for e in events.iter().filter(|e| e.rwid == rwid) {
        if e.frame == 0 || e.frame > track_set.total_frames() {
            return Err(Error::InvalidInput(format!(
                "event for {rwid:?} at frame {} outside 1..={}",
                e.frame,
                track_set.total_frames()
            )));
        }
        let (frame, row) = match &e.source {
            EventSource::Station(at) => {
                let mut frame = e.frame;
                if track_set.frame(frame).is_empty() {
                    match nearest_nonempty(track_set, frame, config.defer_window) {
                        Some(s) => frame = s,
                        None => {
                            warn!("dropping event for {rwid:?} at frame {frame}: no detections nearby");
                            continue;
                        }
                    }
                }
                let station = StationModel::new(*at).with_floor(config.distance_floor);
                (
                    frame,
                    distance_emission_row(track_set.frame(frame), &station)?,
                )
            }
            EventSource::Row(p) => {
                let m = counts[e.frame - 1];
                if p.len() != m {
                    return Err(Error::Shape(format!(
                        "explicit row for {rwid:?} at frame {} has {} entries, frame has {m} detections",
                        e.frame,
                        p.len()
                    )));
                }
                if p.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "explicit row for {rwid:?} at frame {} has negative entries",
                        e.frame
                    )));
                }
                let mut row = p.clone();
                row.push(0.0);
                (e.frame, row)
            }
        };
        match evidence.get_mut(&frame) {
            Some(acc) => acc.iter_mut().zip(&row).for_each(|(a, b)| *a *= b),
            None => {
                evidence.insert(frame, row);
            }
        }
    }

    let mut normalized = Vec::with_capacity(evidence.len());
    for (t, mut row) in evidence {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InconsistentEvidence { frame: t });
        }
        row.iter_mut().for_each(|v| *v /= total);
        normalized.push((t, row));
    }
    Ok(EmissionSequence::sparse(
        rwid.to_string(),
        &counts,
        normalized,
    ))
}

/// Draws synthetic identifications from ground truth.
///
/// Events are spread evenly over annotated frames that also have
/// detections. `round(noise_fraction * count)` of them, chosen at random,
/// carry a uniform row; the rest weight detections by inverse distance to the
/// ground-truth box center of the sampled identity.
pub fn simulate_identifications<R: Rng + ?Sized>(
    ground_truth: &GroundTruth,
    track_set: &TrackSet,
    count: usize,
    noise_fraction: f64,
    distance_floor: f64,
    rng: &mut R,
) -> Result<Vec<IdentificationEvent>> {
    if count == 0 {
        return Err(Error::InvalidInput(
            "identification count must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&noise_fraction) {
        return Err(Error::InvalidInput(format!(
            "noise fraction {noise_fraction} outside [0, 1]"
        )));
    }
    let frames: Vec<usize> = ground_truth
        .iter()
        .filter(|(t, objs)| {
            !objs.is_empty()
                && *t >= 1
                && *t <= track_set.total_frames()
                && !track_set.frame(*t).is_empty()
        })
        .map(|(t, _)| t)
        .collect();
    if frames.is_empty() {
        return Err(Error::InvalidInput(
            "no annotated frames with detections".into(),
        ));
    }
    let capacity: usize = frames
        .iter()
        .map(|&t| ground_truth.frame(t).map_or(0, <[_]>::len))
        .sum();
    if count > capacity {
        return Err(Error::InvalidInput(format!(
            "{count} identifications requested but only {capacity} annotated (frame, identity) slots"
        )));
    }

    // events per frame, spread evenly; overflow spills to the next frame
    let mut per_frame = vec![0usize; frames.len()];
    for i in 0..count {
        let mut slot = i * frames.len() / count;
        loop {
            let t = frames[slot];
            if per_frame[slot] < ground_truth.frame(t).map_or(0, <[_]>::len) {
                per_frame[slot] += 1;
                break;
            }
            slot = (slot + 1) % frames.len();
        }
    }

    let mut noisy = vec![false; count];
    let n_noise = (noise_fraction * count as f64).round() as usize;
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    for &i in &order[..n_noise.min(count)] {
        noisy[i] = true;
    }

    let mut events = Vec::with_capacity(count);
    for (slot, &k) in per_frame.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let t = frames[slot];
        let objs = ground_truth.frame(t).unwrap_or(&[]);
        let dets = track_set.frame(t);
        let picked: Vec<_> = objs.choose_multiple(rng, k).collect();
        for obj in picked {
            let row = if noisy[events.len()] {
                vec![1.0 / dets.len() as f64; dets.len()]
            } else {
                inverse_distance_row(
                    dets.iter().map(|d| d.bbox.center()),
                    obj.bbox.center(),
                    distance_floor,
                )
            };
            events.push(IdentificationEvent::row(t, obj.rwid.clone(), row));
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub min_iou: f64,
    pub min_prob: f64,
    /// Floor used when a station event has to be turned into a row.
    pub distance_floor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_iou: 0.7,
            min_prob: 0.5,
            distance_floor: 1.0,
        }
    }
}

/// Keeps events whose identity is well localized by some detection
/// (IOU above `min_iou` with its ground-truth box) and whose row is
/// confident (maximum above `min_prob`).
pub fn filter_identifications(
    events: &[IdentificationEvent],
    ground_truth: &GroundTruth,
    track_set: &TrackSet,
    config: &FilterConfig,
) -> Vec<IdentificationEvent> {
    events
        .iter()
        .filter(|e| {
            let Some(gt_box) = ground_truth.bbox_of(e.frame, &e.rwid) else {
                warn!(
                    "dropping event for {:?} at frame {}: no ground truth",
                    e.rwid, e.frame
                );
                return false;
            };
            if e.frame == 0 || e.frame > track_set.total_frames() {
                return false;
            }
            let dets = track_set.frame(e.frame);
            let best_iou = dets
                .iter()
                .map(|d| iou(&d.bbox, &gt_box))
                .fold(0.0, f64::max);
            let row = match &e.source {
                EventSource::Row(p) => p.clone(),
                EventSource::Station(at) => {
                    let station = StationModel::new(*at).with_floor(config.distance_floor);
                    distance_emission_row(dets, &station).unwrap_or_default()
                }
            };
            let best_prob = row.iter().copied().fold(0.0, f64::max);
            best_iou > config.min_iou && best_prob > config.min_prob
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BBox;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det_at(x: f64, y: f64) -> (Option<u64>, BBox) {
        (None, BBox::centered(Point::new(x, y), 2.0, 2.0))
    }

    fn frame_of(points: &[(f64, f64)]) -> Vec<Detection> {
        let ts = TrackSet::from_rows(
            1,
            points.iter().map(|&(x, y)| {
                let (id, b) = det_at(x, y);
                (1, id, b, 1.0)
            }),
        );
        ts.frame(1).to_vec()
    }

    #[test]
    fn distance_row_inverse_weights() {
        let dets = frame_of(&[(1.0, 0.0), (3.0, 0.0)]);
        let row = distance_emission_row(&dets, &StationModel::new(Point::new(0.0, 0.0))).unwrap();
        assert_abs_diff_eq!(row[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(row[1], 0.25, epsilon = 1e-15);
        assert_eq!(row[2], 0.0);
    }

    #[test]
    fn equidistant_split_evenly() {
        let dets = frame_of(&[(-5.0, 0.0), (5.0, 0.0)]);
        let row = distance_emission_row(&dets, &StationModel::new(Point::new(0.0, 0.0))).unwrap();
        assert_eq!(&row[..2], &[0.5, 0.5]);
    }

    #[test]
    fn distance_floor_clamps() {
        let dets = frame_of(&[(0.2, 0.0), (10.0, 0.0)]);
        let row = distance_emission_row(&dets, &StationModel::new(Point::new(0.0, 0.0))).unwrap();
        assert_abs_diff_eq!(row[0], 1.0 / 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(row[1], 0.1 / 1.1, epsilon = 1e-12);
        assert!((row[0] - 0.909).abs() < 1e-3);
    }

    #[test]
    fn distance_row_scale_invariant() {
        let a = frame_of(&[(2.0, 0.0), (5.0, 0.0), (0.0, 7.0)]);
        let b = frame_of(&[(6.0, 0.0), (15.0, 0.0), (0.0, 21.0)]);
        let s = StationModel::new(Point::new(0.0, 0.0));
        let (ra, rb) = (
            distance_emission_row(&a, &s).unwrap(),
            distance_emission_row(&b, &s).unwrap(),
        );
        for (x, y) in ra.iter().zip(&rb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn uniform_rows() {
        assert_eq!(uniform_row(3), vec![0.25; 4]);
        assert_eq!(uniform_row(0), vec![1.0]);
        assert_eq!(uniform_row(1), vec![0.5, 0.5]);
    }

    fn ten_frames() -> TrackSet {
        let rows = (1..=10).flat_map(|t| {
            vec![
                (
                    t,
                    Some(1),
                    BBox::centered(Point::new(0.0, 0.0), 2.0, 2.0),
                    1.0,
                ),
                (
                    t,
                    Some(2),
                    BBox::centered(Point::new(30.0, 0.0), 2.0, 2.0),
                    1.0,
                ),
            ]
        });
        TrackSet::from_rows(10, rows)
    }

    #[test]
    fn single_event_sequence() {
        let ts = ten_frames();
        let events = vec![IdentificationEvent::station(5, "A", Point::new(10.0, 0.0))];
        let seq = build_emission_sequence("A", &events, &ts, &EmissionConfig::default()).unwrap();
        for t in (1..=10).filter(|&t| t != 5) {
            assert_eq!(seq.row(t), uniform_row(2).as_slice());
        }
        assert_abs_diff_eq!(seq.row(5)[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(seq.row(5)[2], 0.0);
        assert_eq!(seq.event_frames(), &[5]);
    }

    #[test]
    fn zero_events_all_uniform() {
        let ts = ten_frames();
        let seq = build_emission_sequence("A", &[], &ts, &EmissionConfig::default()).unwrap();
        assert_eq!(seq, EmissionSequence::uniform("A", &ts.counts()));
        assert!(!seq.is_observed());
    }

    #[test]
    fn same_frame_rows_multiply() {
        let ts = ten_frames();
        let events = vec![
            IdentificationEvent::row(3, "A", vec![0.8, 0.2]),
            IdentificationEvent::row(3, "A", vec![0.5, 0.5]),
            IdentificationEvent::row(4, "B", vec![0.0, 1.0]),
        ];
        let seq = build_emission_sequence("A", &events, &ts, &EmissionConfig::default()).unwrap();
        assert_abs_diff_eq!(seq.row(3)[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(seq.row(3)[1], 0.2, epsilon = 1e-15);
        assert_eq!(seq.row(4), uniform_row(2).as_slice());
    }

    #[test]
    fn explicit_row_length_mismatch_rejected() {
        let ts = ten_frames();
        let events = vec![IdentificationEvent::row(3, "A", vec![1.0])];
        assert!(matches!(
            build_emission_sequence("A", &events, &ts, &EmissionConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn empty_frame_event_deferred_or_dropped() {
        let b = BBox::centered(Point::new(0.0, 0.0), 2.0, 2.0);
        let ts = TrackSet::from_rows(20, vec![(3, Some(1), b, 1.0), (3, Some(2), b, 1.0)]);
        let cfg = EmissionConfig {
            distance_floor: 1.0,
            defer_window: 2,
        };
        let near = vec![IdentificationEvent::station(5, "A", Point::new(0.0, 0.0))];
        let seq = build_emission_sequence("A", &near, &ts, &cfg).unwrap();
        assert_eq!(seq.event_frames(), &[3]);
        let far = vec![IdentificationEvent::station(15, "A", Point::new(0.0, 0.0))];
        let seq = build_emission_sequence("A", &far, &ts, &cfg).unwrap();
        assert!(seq.event_frames().is_empty());
    }

    fn gt_scene(frames: usize, pop: usize) -> (GroundTruth, TrackSet) {
        let mut gt = GroundTruth::new();
        let mut rows = Vec::new();
        for t in 1..=frames {
            for k in 0..pop {
                let b = BBox::centered(Point::new(100.0 * k as f64, 0.0), 20.0, 20.0);
                gt.insert(t, format!("r{k}"), b);
                rows.push((t, Some(k as u64), b, 1.0));
            }
        }
        (gt, TrackSet::from_rows(frames, rows))
    }

    #[test]
    fn simulated_noise_split() {
        let (gt, ts) = gt_scene(30, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let events = simulate_identifications(&gt, &ts, 20, 0.25, 1.0, &mut rng).unwrap();
        assert_eq!(events.len(), 20);
        let uniform = events
            .iter()
            .filter(|e| matches!(&e.source, EventSource::Row(r) if r.iter().all(|p| *p == 0.25)))
            .count();
        assert_eq!(uniform, 5);
    }

    #[test]
    fn noiseless_event_points_at_truth() {
        let (gt, ts) = gt_scene(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let events = simulate_identifications(&gt, &ts, 10, 0.0, 1.0, &mut rng).unwrap();
        for e in &events {
            let EventSource::Row(row) = &e.source else {
                panic!()
            };
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(format!("r{best}"), e.rwid);
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let (gt, ts) = gt_scene(10, 3);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate_identifications(&gt, &ts, 12, 0.25, 1.0, &mut rng).unwrap()
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn simulation_capacity_checked() {
        let (gt, ts) = gt_scene(2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(simulate_identifications(&gt, &ts, 7, 0.0, 1.0, &mut rng).is_err());
        let events = simulate_identifications(&gt, &ts, 6, 0.0, 1.0, &mut rng).unwrap();
        for t in 1..=2 {
            let mut ids: Vec<_> = events
                .iter()
                .filter(|e| e.frame == t)
                .map(|e| e.rwid.clone())
                .collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 3);
        }
    }

    #[test]
    fn filter_thresholds() {
        let mut gt = GroundTruth::new();
        gt.insert(1, "A", BBox::new(0.0, 0.0, 10.0, 10.0));
        let ts = TrackSet::from_rows(
            1,
            vec![
                (1, Some(1), BBox::new(0.0, 0.0, 10.0, 6.0), 1.0),
                (1, Some(2), BBox::new(50.0, 50.0, 10.0, 10.0), 1.0),
            ],
        );
        let cfg = FilterConfig::default();
        // IOU 0.6 fails
        let low_iou = vec![IdentificationEvent::row(1, "A", vec![0.8, 0.2])];
        assert!(filter_identifications(&low_iou, &gt, &ts, &cfg).is_empty());

        let ts = TrackSet::from_rows(
            1,
            vec![
                (1, Some(1), BBox::new(0.0, 0.0, 10.0, 9.0), 1.0),
                (1, Some(2), BBox::new(50.0, 50.0, 10.0, 10.0), 1.0),
                (1, Some(3), BBox::new(90.0, 50.0, 10.0, 10.0), 1.0),
            ],
        );
        // IOU 0.9 but row max 0.45 fails
        let weak = vec![IdentificationEvent::row(1, "A", vec![0.45, 0.35, 0.2])];
        assert!(filter_identifications(&weak, &gt, &ts, &cfg).is_empty());
        let good = vec![IdentificationEvent::row(1, "A", vec![0.8, 0.1, 0.1])];
        assert_eq!(filter_identifications(&good, &gt, &ts, &cfg), good);
        let missing = vec![IdentificationEvent::row(1, "B", vec![0.8, 0.1, 0.1])];
        assert!(filter_identifications(&missing, &gt, &ts, &cfg).is_empty());
    }
}
