//! Frame-to-frame transition matrices derived from the base tracker.
//!
//! Every frame's state space is its detections plus one virtual LOST state,
//! always the last index. Matrix `t` is `(m_{t-1} + 1) x (m_t + 1)` and maps
//! the states of frame `t - 1` onto those of frame `t`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::TrackSet;

pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Probability that a continuing track leaks to another state per frame.
    pub epsilon: f64,
    /// Probability that the LOST state stays LOST.
    pub lost_self_persistence: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            epsilon: 1e-3,
            lost_self_persistence: 0.5,
        }
    }
}

impl SmoothingConfig {
    pub fn new(epsilon: f64, lost_self_persistence: f64) -> Result<Self> {
        let cfg = SmoothingConfig {
            epsilon,
            lost_self_persistence,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in [0, 0.5), got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.lost_self_persistence) {
            return Err(Error::InvalidInput(format!(
                "lost_self_persistence must lie in [0, 1], got {}",
                self.lost_self_persistence
            )));
        }
        Ok(())
    }
}

/// Row-stochastic transitions for every consecutive frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSequence {
    counts: Vec<usize>,
    matrices: Vec<Array2<f64>>,
}

impl TransitionSequence {
    /// Checks shapes and row-stochasticity before wrapping.
    pub fn new(counts: Vec<usize>, matrices: Vec<Array2<f64>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Shape("no frames".into()));
        }
        if matrices.len() + 1 != counts.len() {
            return Err(Error::Shape(format!(
                "{} matrices for {} frames",
                matrices.len(),
                counts.len()
            )));
        }
        for (i, m) in matrices.iter().enumerate() {
            let expect = (counts[i] + 1, counts[i + 1] + 1);
            if m.dim() != expect {
                return Err(Error::Shape(format!(
                    "transition into frame {} is {:?}, expected {:?}",
                    i + 2,
                    m.dim(),
                    expect
                )));
            }
            for (r, row) in m.rows().into_iter().enumerate() {
                let sum: f64 = row.sum();
                if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "transition into frame {} row {r} is not a distribution",
                        i + 2
                    )));
                }
            }
        }
        Ok(TransitionSequence { counts, matrices })
    }

    pub fn total_frames(&self) -> usize {
        self.counts.len()
    }

    /// Detection counts m_t per frame (the LOST state is not counted).
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of HMM states at 1-indexed frame `t`, LOST included.
    pub fn states(&self, t: usize) -> usize {
        self.counts[t - 1] + 1
    }

    /// Transition from frame `t - 1` into frame `t`, for `t` in `2..=T`.
    pub fn matrix(&self, t: usize) -> ArrayView2<'_, f64> {
        self.matrices[t - 2].view()
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    /// Restricts to the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> TransitionSequence {
        let frames = frames.clamp(1, self.counts.len());
        TransitionSequence {
            counts: self.counts[..frames].to_vec(),
            matrices: self.matrices[..frames - 1].to_vec(),
        }
    }
}

/// Builds transitions from hard tracker ids with epsilon smoothing.
///
/// A detection whose id continues into the next frame keeps `1 - epsilon`
/// on its successor and spreads `epsilon` over every other state. A track
/// that ends is spread uniformly over all next-frame states. LOST keeps
/// `lost_self_persistence` and seeds the rest uniformly into detections.
pub fn transitions_from_tracks(
    track_set: &TrackSet,
    smoothing: SmoothingConfig,
) -> Result<TransitionSequence> {
    smoothing.check()?;
    if track_set.total_frames() == 0 {
        return Err(Error::Shape("no frames".into()));
    }
    for dets in track_set.frames() {
        if let Some(d) = dets.iter().find(|d| d.tracker_id.is_none()) {
            return Err(Error::MissingTrackerId {
                frame: d.frame,
                local_index: d.local_index,
            });
        }
    }

    let counts = track_set.counts();
    let eps = smoothing.epsilon;
    let mut matrices = Vec::with_capacity(counts.len().saturating_sub(1));
    for pair in track_set.frames().windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let (rows, cols) = (prev.len() + 1, next.len() + 1);
        let lost = cols - 1;
        let mut mat = Array2::<f64>::zeros((rows, cols));

        let successor: HashMap<u64, usize> = next
            .iter()
            .map(|d| (d.tracker_id.unwrap(), d.local_index))
            .collect();

        for (l, d) in prev.iter().enumerate() {
            let mut row = mat.row_mut(l);
            if next.is_empty() {
                row[lost] = 1.0;
                continue;
            }
            match successor.get(&d.tracker_id.unwrap()) {
                Some(&j) => {
                    // m_t others: the remaining detections plus LOST
                    row.fill(eps / next.len() as f64);
                    row[j] = 1.0 - eps;
                }
                None => row.fill(1.0 / cols as f64),
            }
        }

        let mut lost_row = mat.row_mut(rows - 1);
        if next.is_empty() {
            lost_row[lost] = 1.0;
        } else {
            let persist = smoothing.lost_self_persistence;
            lost_row.fill((1.0 - persist) / next.len() as f64);
            lost_row[lost] = persist;
        }
        matrices.push(mat);
    }

    TransitionSequence::new(counts, matrices)
}

/// Builds transitions from soft association scores emitted by a tracker.
///
/// Each matrix is either full-shape `(m_{t-1}+1) x (m_t+1)` or
/// detection-only `m_{t-1} x m_t`. Detection-only matrices get a LOST
/// column carrying `epsilon` times the row mass and a LOST row following
/// the same persistence rule as [`transitions_from_tracks`]. Rows are then
/// rescaled to sum to one; all-zero rows become uniform.
pub fn transitions_from_soft_associations(
    counts: &[usize],
    matrices: &[Array2<f64>],
    smoothing: SmoothingConfig,
) -> Result<TransitionSequence> {
    smoothing.check()?;
    if counts.is_empty() {
        return Err(Error::Shape("no frames".into()));
    }
    if matrices.len() + 1 != counts.len() {
        return Err(Error::Shape(format!(
            "{} matrices for {} frames",
            matrices.len(),
            counts.len()
        )));
    }

    let mut out = Vec::with_capacity(matrices.len());
    for (i, raw) in matrices.iter().enumerate() {
        let (m_prev, m_next) = (counts[i], counts[i + 1]);
        if raw.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "negative or non-finite association score into frame {}",
                i + 2
            )));
        }
        let mut full = if raw.dim() == (m_prev + 1, m_next + 1) {
            raw.clone()
        } else if raw.dim() == (m_prev, m_next) {
            let mut full = Array2::<f64>::zeros((m_prev + 1, m_next + 1));
            for l in 0..m_prev {
                let mut row = full.row_mut(l);
                let src = raw.row(l);
                row.slice_mut(ndarray::s![..m_next]).assign(&src);
                row[m_next] = smoothing.epsilon * src.sum();
            }
            let mut lost_row = full.row_mut(m_prev);
            if m_next == 0 {
                lost_row[0] = 1.0;
            } else {
                let persist = smoothing.lost_self_persistence;
                lost_row.fill((1.0 - persist) / m_next as f64);
                lost_row[m_next] = persist;
            }
            full
        } else {
            return Err(Error::Shape(format!(
                "association into frame {} is {:?}; expected {:?} or {:?}",
                i + 2,
                raw.dim(),
                (m_prev + 1, m_next + 1),
                (m_prev, m_next)
            )));
        };

        let cols = m_next + 1;
        for mut row in full.rows_mut() {
            let sum = row.sum();
            if (sum - 1.0).abs() <= ROW_TOLERANCE {
                continue;
            }
            if sum > 0.0 {
                row.mapv_inplace(|v| v / sum);
            } else {
                row.fill(1.0 / cols as f64);
            }
        }
        out.push(full);
    }

    TransitionSequence::new(counts.to_vec(), out)
}
