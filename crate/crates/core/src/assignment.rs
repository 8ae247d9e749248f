//! One-to-one identity/detection assignment per frame.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hmm::PosteriorTable;
use crate::types::{IdentityEntry, IdentityTrackSet, Method, Rwid, TrackSet};

/// A set of `(row, column)` pairs, sorted by row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    /// Sum of the matched entries, accumulated in row order.
    pub fn total(&self, values: ArrayView2<'_, f64>) -> f64 {
        self.pairs.iter().map(|&(r, c)| values[[r, c]]).sum()
    }

    pub fn column_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// Minimum-cost assignment on a `rows <= cols` matrix (shortest augmenting
/// paths with potentials, O(rows^2 * cols)). Strict comparisons make the
/// lowest column win ties at every relaxation step.
fn solve_min_wide(cost: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    let (n, m) = cost.dim();
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) matched to column j; 0 = free
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn check_finite(values: ArrayView2<'_, f64>) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "assignment matrix has non-finite entries".into(),
        ));
    }
    Ok(())
}

/// Minimum-cost matching of `min(rows, cols)` pairs.
pub fn hungarian_min(cost: ArrayView2<'_, f64>) -> Result<Matching> {
    check_finite(cost)?;
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return Ok(Matching::default());
    }
    let pairs = if rows <= cols {
        solve_min_wide(cost)
    } else {
        let mut pairs: Vec<(usize, usize)> = solve_min_wide(cost.t())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    };
    Ok(Matching { pairs })
}

/// Maximum-total-value matching of `min(rows, cols)` pairs.
pub fn hungarian_max(values: ArrayView2<'_, f64>) -> Result<Matching> {
    check_finite(values)?;
    let cost = values.mapv(|v| -v);
    hungarian_min(cost.view())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignedPair {
    pub rwid: Rwid,
    pub detection: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAssignment {
    pub frame: usize,
    pub pairs: Vec<AssignedPair>,
    pub unassigned_detections: Vec<usize>,
    pub unassigned_rwids: Vec<Rwid>,
}

impl FrameAssignment {
    pub fn rwid_of(&self, detection: usize) -> Option<&str> {
        self.pairs
            .iter()
            .find(|p| p.detection == detection)
            .map(|p| p.rwid.as_str())
    }
}

/// Assigns identities to the detections of one frame.
///
/// `rows[k]` holds identity `rwids[k]`'s matching values over the frame's
/// states with LOST last; LOST is excluded from the matching. Matched pairs
/// whose value falls below `1 / population` are dropped as too uncertain.
pub fn assign_frame(
    frame: usize,
    rwids: &[Rwid],
    rows: &[&[f64]],
    population: usize,
) -> Result<FrameAssignment> {
    if rows.len() != rwids.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} identities",
            rows.len(),
            rwids.len()
        )));
    }
    if population == 0 {
        return Err(Error::InvalidInput("population must be at least 1".into()));
    }
    let m = rows.first().map_or(0, |r| r.len().saturating_sub(1));
    if rows.iter().any(|r| r.len() != m + 1) {
        return Err(Error::Shape(format!(
            "frame {frame}: rows of unequal length"
        )));
    }

    let values = Array2::from_shape_fn((rows.len(), m), |(k, j)| rows[k][j]);
    let matching = hungarian_max(values.view())?;
    let threshold = 1.0 / population as f64;

    let mut pairs = Vec::new();
    let mut detection_taken = vec![false; m];
    let mut rwid_taken = vec![false; rwids.len()];
    for (k, j) in matching.pairs {
        let value = values[[k, j]];
        if value < threshold {
            continue;
        }
        detection_taken[j] = true;
        rwid_taken[k] = true;
        pairs.push(AssignedPair {
            rwid: rwids[k].clone(),
            detection: j,
            value,
        });
    }
    pairs.sort_by_key(|p| p.detection);

    Ok(FrameAssignment {
        frame,
        pairs,
        unassigned_detections: (0..m).filter(|&j| !detection_taken[j]).collect(),
        unassigned_rwids: (0..rwids.len())
            .filter(|&k| !rwid_taken[k])
            .map(|k| rwids[k].clone())
            .collect(),
    })
}

/// Per-frame assignments over the whole video, in frame order.
pub fn assign_frames(
    tables: &[PosteriorTable],
    total_frames: usize,
    population: usize,
) -> Result<Vec<FrameAssignment>> {
    if let Some(bad) = tables.iter().find(|tb| tb.total_frames() != total_frames) {
        return Err(Error::Shape(format!(
            "table for {:?} covers {} frames, video has {total_frames}",
            bad.rwid,
            bad.total_frames()
        )));
    }
    let rwids: Vec<Rwid> = tables.iter().map(|tb| tb.rwid.clone()).collect();
    (1..=total_frames)
        .into_par_iter()
        .map(|t| {
            let rows: Vec<&[f64]> = tables.iter().map(|tb| tb.values(t)).collect();
            assign_frame(t, &rwids, &rows, population)
        })
        .collect()
}

/// Turns frame assignments into an identity track set over `track_set`.
pub fn to_identity_tracks(track_set: &TrackSet, frames: &[FrameAssignment]) -> IdentityTrackSet {
    let mut out = IdentityTrackSet::unassigned(Method::Hmm, track_set);
    for fa in frames {
        let entries = out.frame_mut(fa.frame);
        for p in &fa.pairs {
            entries[p.detection].rwid = Some(p.rwid.clone());
        }
    }
    out
}

/// Assigns identities at every frame from per-identity posterior tables.
pub fn assign_video(
    tables: &[PosteriorTable],
    track_set: &TrackSet,
    population: usize,
) -> Result<IdentityTrackSet> {
    let frames = assign_frames(tables, track_set.total_frames(), population)?;
    if let Some(fa) = frames.iter().find(|fa| {
        fa.unassigned_detections.len() + fa.pairs.len() != track_set.frame(fa.frame).len()
    }) {
        return Err(Error::Shape(format!(
            "frame {}: tables disagree with detections",
            fa.frame
        )));
    }
    Ok(to_identity_tracks(track_set, &frames))
}

/// Identity entries for one frame's detections from a frame assignment.
pub fn entries_for(track_set: &TrackSet, fa: &FrameAssignment) -> Vec<IdentityEntry> {
    track_set
        .frame(fa.frame)
        .iter()
        .map(|d| IdentityEntry {
            local_index: d.local_index,
            bbox: d.bbox,
            confidence: d.confidence,
            rwid: fa.rwid_of(d.local_index).map(str::to_string),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_matrix() {
        let m = hungarian_max(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(m.total(Array2::<f64>::eye(3).view()), 3.0);
    }

    #[test]
    fn two_by_two_prefers_diagonal() {
        let v = array![[0.9, 0.1], [0.8, 0.2]];
        let m = hungarian_max(v.view()).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert!((m.total(v.view()) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn three_by_three_fixed() {
        // permutations: 0-1,1-0,2-2 gives 0.5 + 0.4 + 0.6 = 1.5, the unique best
        let v = array![[0.2, 0.5, 0.3], [0.4, 0.4, 0.2], [0.1, 0.3, 0.6]];
        let m = hungarian_max(v.view()).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0), (2, 2)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = array![[0.1, 0.9, 0.3]];
        assert_eq!(hungarian_max(wide.view()).unwrap().pairs, vec![(0, 1)]);
        let tall = array![[0.1], [0.9], [0.3]];
        assert_eq!(hungarian_max(tall.view()).unwrap().pairs, vec![(1, 0)]);
    }

    #[test]
    fn empty_and_nonfinite() {
        assert!(hungarian_max(Array2::<f64>::zeros((0, 3)).view())
            .unwrap()
            .pairs
            .is_empty());
        assert!(hungarian_max(array![[f64::NAN]].view()).is_err());
    }

    #[test]
    fn low_value_pair_rejected() {
        let rwids: Vec<Rwid> = vec!["a".into()];
        let row = [0.05, 0.95];
        let fa = assign_frame(1, &rwids, &[&row], 15).unwrap();
        assert!(fa.pairs.is_empty());
        assert_eq!(fa.unassigned_detections, vec![0]);
        assert_eq!(fa.unassigned_rwids, rwids);
    }

    #[test]
    fn uniform_rows_all_rejected() {
        let rwids: Vec<Rwid> = vec!["a".into(), "b".into(), "c".into()];
        let row = [0.25; 4];
        let fa = assign_frame(1, &rwids, &[&row, &row, &row], 3).unwrap();
        assert!(fa.pairs.is_empty());
        assert_eq!(fa.unassigned_detections, vec![0, 1, 2]);
    }

    #[test]
    fn dominant_pair_kept() {
        let rwids: Vec<Rwid> = vec!["a".into(), "b".into(), "c".into()];
        let u = [0.25; 4];
        let strong = [0.05, 0.9, 0.05, 0.0];
        let fa = assign_frame(1, &rwids, &[&u, &strong, &u], 3).unwrap();
        assert_eq!(fa.pairs.len(), 1);
        assert_eq!(fa.pairs[0].rwid, "b");
        assert_eq!(fa.pairs[0].detection, 1);
    }

    #[test]
    fn scaling_values_keeps_pairing() {
        let v = array![[0.3, 0.6, 0.1], [0.5, 0.2, 0.3], [0.2, 0.2, 0.6]];
        let a = hungarian_max(v.view()).unwrap();
        let b = hungarian_max((&v * 7.5).view()).unwrap();
        assert_eq!(a, b);
    }
}
