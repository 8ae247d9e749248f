//! Long-term identity-aware multi-object tracking.
//!
//! A multi-object tracker yields short-lived track ids; sparse
//! identification events (station reads, re-identification rows) tie a few
//! detections to real-world identities. Each identity gets its own hidden
//! Markov model over the detections of every frame plus a `LOST` state;
//! scaled forward-backward gives per-frame posteriors, and a per-frame
//! maximum-weight matching with a `1/N` rejection rule merges them into one
//! consistent labelling.
//!
//! ```
//! use idfuse::{fuse, BBox, FusionConfig, IdentificationEvent, Point, SceneConfig, TrackSet};
//!
//! let rows = (1..=4).flat_map(|t| {
//!     [
//!         (t, Some(1), BBox::centered(Point::new(0.0, 0.0), 4.0, 4.0), 1.0),
//!         (t, Some(2), BBox::centered(Point::new(40.0, 0.0), 4.0, 4.0), 1.0),
//!     ]
//! });
//! let tracks = TrackSet::from_rows(4, rows);
//! let scene = SceneConfig::new(4, vec!["A".into(), "B".into()]);
//! let events = [IdentificationEvent::station(2, "B", Point::new(38.0, 0.0))];
//! let out = fuse(&tracks, &events, &scene, &FusionConfig::default()).unwrap();
//! assert_eq!(out.assignment.frame(1)[1].rwid.as_deref(), Some("B"));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod baselines;
pub mod config;
pub mod emission;
pub mod error;
pub mod fusion;
pub mod hmm;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod rows;
pub mod simulator;
pub mod transition;
pub mod types;
pub mod validate;

pub use assignment::{
    assign_frame, assign_video, hungarian_max, hungarian_min, FrameAssignment, Matching,
};
pub use baselines::{first_frame_assign, reid_swap};
pub use emission::{build_emission_sequence, EmissionConfig, EmissionSequence, StationModel};
pub use error::{Error, Result};
pub use fusion::{fuse, FusionConfig, FusionOutput};
pub use hmm::{backward, forward, infer, run_all_rwids, PosteriorTable};
pub use metrics::{
    evaluate, f1_over_time, identity_confusion, iou, micro_scores, IdentityConfusion, ScoreReport,
    Scores,
};
pub use rows::FrameRows;
pub use simulator::{generate_scene, SimConfig, SimScene};
pub use transition::{transitions_from_tracks, SmoothingConfig, TransitionSequence};
pub use types::*;
pub use validate::{validate_inputs, ValidationReport};
