//! End-to-end identity fusion: tracker transitions and identification
//! emissions feed one HMM per observed identity; per-frame posteriors are
//! merged by assignment.

use serde::{Deserialize, Serialize};

use crate::assignment::{assign_frames, to_identity_tracks, FrameAssignment};
use crate::emission::{build_emission_sequence, EmissionConfig};
use crate::error::{Error, Result};
use crate::hmm::{run_with_transitions, PosteriorTable};
use crate::transition::{transitions_from_tracks, SmoothingConfig, TransitionSequence};
use crate::types::{IdentificationEvent, IdentityTrackSet, Rwid, SceneConfig, TrackSet};
use crate::validate::validate_inputs;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FusionConfig {
    pub smoothing: SmoothingConfig,
    pub emission: EmissionConfig,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub assignment: IdentityTrackSet,
    pub frames: Vec<FrameAssignment>,
    /// One table per identity with at least one identification, in catalog
    /// order. Identities never identified take no part in the assignment.
    pub tables: Vec<PosteriorTable>,
}

impl FusionOutput {
    /// Smallest matching value among all emitted pairs.
    pub fn min_assigned_value(&self) -> Option<f64> {
        self.frames
            .iter()
            .flat_map(|f| f.pairs.iter().map(|p| p.value))
            .reduce(f64::min)
    }

    pub fn summary(&self, population: usize) -> PosteriorSummary {
        let rwids = self
            .tables
            .iter()
            .map(|table| {
                let values: Vec<f64> = self
                    .frames
                    .iter()
                    .flat_map(|f| {
                        f.pairs
                            .iter()
                            .filter(|p| p.rwid == table.rwid)
                            .map(|p| p.value)
                    })
                    .collect();
                RwidSummary {
                    rwid: table.rwid.clone(),
                    log_evidence: table.log_evidence(),
                    assigned_frames: values.len(),
                    mean_assigned_value: if values.is_empty() {
                        0.0
                    } else {
                        values.iter().sum::<f64>() / values.len() as f64
                    },
                }
            })
            .collect();
        PosteriorSummary {
            frames: self.assignment.total_frames(),
            population,
            rejection_threshold: 1.0 / population as f64,
            assigned_pairs: self.assignment.assigned_count(),
            min_assigned_value: self.min_assigned_value(),
            rwids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwidSummary {
    pub rwid: Rwid,
    pub log_evidence: f64,
    pub assigned_frames: usize,
    pub mean_assigned_value: f64,
}

/// Compact description of a fusion run, written next to the assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub frames: usize,
    pub population: usize,
    pub rejection_threshold: f64,
    pub assigned_pairs: usize,
    pub min_assigned_value: Option<f64>,
    pub rwids: Vec<RwidSummary>,
}

/// Identities from `catalog` with at least one event, in catalog order.
pub fn observed_rwids(catalog: &[Rwid], events: &[IdentificationEvent]) -> Vec<Rwid> {
    catalog
        .iter()
        .filter(|r| events.iter().any(|e| &e.rwid == *r))
        .cloned()
        .collect()
}

/// Fusion against precomputed transitions. Inputs are assumed valid.
pub fn fuse_with_transitions(
    transitions: &TransitionSequence,
    track_set: &TrackSet,
    events: &[IdentificationEvent],
    rwids: &[Rwid],
    population: usize,
    emission: &EmissionConfig,
) -> Result<FusionOutput> {
    if transitions.counts() != track_set.counts().as_slice() {
        return Err(Error::Shape(
            "transitions do not match the track set".into(),
        ));
    }
    let emissions = rwids
        .iter()
        .map(|r| build_emission_sequence(r, events, track_set, emission))
        .collect::<Result<Vec<_>>>()?;
    let tables = run_with_transitions(transitions, &emissions)?;
    let frames = assign_frames(&tables, track_set.total_frames(), population)?;
    let assignment = to_identity_tracks(track_set, &frames);
    Ok(FusionOutput {
        assignment,
        frames,
        tables,
    })
}

/// Validates inputs, then runs the full pipeline.
pub fn fuse(
    track_set: &TrackSet,
    events: &[IdentificationEvent],
    scene: &SceneConfig,
    config: &FusionConfig,
) -> Result<FusionOutput> {
    let report = validate_inputs(track_set, events, scene);
    if !report.is_empty() {
        return Err(Error::Rejected(report));
    }
    let transitions = transitions_from_tracks(track_set, config.smoothing)?;
    let rwids = observed_rwids(&scene.rwid_catalog, events);
    fuse_with_transitions(
        &transitions,
        track_set,
        events,
        &rwids,
        scene.population,
        &config.emission,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BBox, Point};

    fn two_tracks(frames: usize) -> TrackSet {
        let rows = (1..=frames).flat_map(|t| {
            vec![
                (
                    t,
                    Some(1),
                    BBox::centered(Point::new(0.0, 0.0), 4.0, 4.0),
                    1.0,
                ),
                (
                    t,
                    Some(2),
                    BBox::centered(Point::new(50.0, 0.0), 4.0, 4.0),
                    1.0,
                ),
            ]
        });
        TrackSet::from_rows(frames, rows)
    }

    #[test]
    fn zero_events_leave_everything_unassigned() {
        let ts = two_tracks(5);
        let scene = SceneConfig::new(5, vec!["A".into(), "B".into()]);
        let out = fuse(&ts, &[], &scene, &FusionConfig::default()).unwrap();
        assert_eq!(out.assignment.assigned_count(), 0);
        assert!(out.tables.is_empty());
        assert_eq!(out.min_assigned_value(), None);
    }

    #[test]
    fn single_identification_propagates() {
        let ts = two_tracks(8);
        let scene = SceneConfig::new(8, vec!["A".into(), "B".into()]);
        let events = vec![IdentificationEvent::station(4, "B", Point::new(49.0, 0.0))];
        let out = fuse(&ts, &events, &scene, &FusionConfig::default()).unwrap();
        for t in 1..=8 {
            let ids: Vec<_> = out
                .assignment
                .frame(t)
                .iter()
                .map(|e| e.rwid.as_deref())
                .collect();
            assert_eq!(ids, vec![None, Some("B")], "frame {t}");
        }
        let summary = out.summary(2);
        assert_eq!(summary.assigned_pairs, 8);
        assert_eq!(summary.rwids.len(), 1);
        assert!(summary.min_assigned_value.unwrap() >= 0.5);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let ts = two_tracks(3);
        let scene = SceneConfig::new(3, vec!["A".into()]);
        let events = vec![IdentificationEvent::station(1, "Z", Point::default())];
        assert!(matches!(
            fuse(&ts, &events, &scene, &FusionConfig::default()),
            Err(Error::Rejected(_))
        ));
    }
}
