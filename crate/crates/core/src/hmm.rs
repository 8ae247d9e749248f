//! Scaled forward-backward inference for one identity's HMM.
//!
//! The hidden state at frame `t` is which detection (or LOST) carries the
//! identity. Forward and backward values are renormalized to sum to one at
//! every frame; the per-frame product of the two is then proportional to the
//! exact posterior, with a frame-dependent constant that cancels when the
//! product is renormalized.

use rayon::prelude::*;

use crate::emission::EmissionSequence;
use crate::error::{Error, Result};
use crate::rows::FrameRows;
use crate::transition::{transitions_from_tracks, SmoothingConfig, TransitionSequence};
use crate::types::{Rwid, TrackSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub alpha: FrameRows,
    /// Sum of the unscaled forward values at each frame.
    pub scales: Vec<f64>,
}

impl ForwardResult {
    /// `ln P(observations)` accumulated from the scaling factors.
    pub fn log_evidence(&self) -> f64 {
        self.scales.iter().map(|c| c.ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    pub beta: FrameRows,
    pub scales: Vec<f64>,
}

/// Scaled forward/backward values and normalized matching values of one
/// identity at every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub rwid: Rwid,
    pub alpha: FrameRows,
    pub beta: FrameRows,
    /// Renormalized `alpha * beta`; the last entry of each row is LOST.
    pub values: FrameRows,
    pub forward_scales: Vec<f64>,
    pub backward_scales: Vec<f64>,
}

impl PosteriorTable {
    pub fn total_frames(&self) -> usize {
        self.values.len()
    }

    /// Matching values at frame `t`, LOST last.
    pub fn values(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn log_evidence(&self) -> f64 {
        self.forward_scales.iter().map(|c| c.ln()).sum()
    }
}

fn check_shapes(transitions: &TransitionSequence, emissions: &EmissionSequence) -> Result<()> {
    if emissions.total_frames() != transitions.total_frames() {
        return Err(Error::Shape(format!(
            "{} emission frames vs {} transition frames",
            emissions.total_frames(),
            transitions.total_frames()
        )));
    }
    for t in 1..=transitions.total_frames() {
        if emissions.row(t).len() != transitions.states(t) {
            return Err(Error::Shape(format!(
                "frame {t}: emission row has {} entries, frame has {} states",
                emissions.row(t).len(),
                transitions.states(t)
            )));
        }
    }
    Ok(())
}

fn normalize(row: &mut [f64], frame: usize) -> Result<f64> {
    let sum: f64 = row.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::InconsistentEvidence { frame });
    }
    row.iter_mut().for_each(|v| *v /= sum);
    Ok(sum)
}

/// Errors carry the index of the offending sequence within a batch.
type Tagged<T> = std::result::Result<T, (usize, Error)>;

fn untag<T>(r: Tagged<Vec<T>>) -> Result<T> {
    r.map(|mut v| v.pop().expect("one sequence in, one result out"))
        .map_err(|(_, e)| e)
}

/// Frame-major forward passes over several sequences sharing transitions, so
/// each transition matrix is read once per frame.
fn forward_many(
    transitions: &TransitionSequence,
    emissions: &[&EmissionSequence],
) -> Tagged<Vec<ForwardResult>> {
    for (k, e) in emissions.iter().enumerate() {
        check_shapes(transitions, e).map_err(|err| (k, err))?;
    }
    let total = transitions.total_frames();
    let mut out = Vec::with_capacity(emissions.len());
    for (k, e) in emissions.iter().enumerate() {
        let mut alpha = FrameRows::zeros((1..=total).map(|t| transitions.states(t)));
        let mut scales = Vec::with_capacity(total);
        alpha.row_mut(1).copy_from_slice(e.row(1));
        scales.push(normalize(alpha.row_mut(1), 1).map_err(|err| (k, err))?);
        out.push(ForwardResult { alpha, scales });
    }

    let mut next = Vec::new();
    for t in 2..=total {
        let a = transitions.matrix(t);
        for (k, (f, e)) in out.iter_mut().zip(emissions).enumerate() {
            next.clear();
            next.resize(transitions.states(t), 0.0);
            for (prev, row) in f.alpha.row(t - 1).iter().zip(a.rows()) {
                if *prev == 0.0 {
                    continue;
                }
                for (acc, p) in next.iter_mut().zip(row.iter()) {
                    *acc += prev * p;
                }
            }
            for (acc, e) in next.iter_mut().zip(e.row(t)) {
                *acc *= e;
            }
            let row = f.alpha.row_mut(t);
            row.copy_from_slice(&next);
            f.scales.push(normalize(row, t).map_err(|err| (k, err))?);
        }
    }
    Ok(out)
}

/// Frame-major backward passes; `visit(k, t, beta)` sees each finished row
/// while it is still hot.
fn backward_many(
    transitions: &TransitionSequence,
    emissions: &[&EmissionSequence],
    mut visit: impl FnMut(usize, usize, &[f64]) -> Result<()>,
) -> Tagged<Vec<BackwardResult>> {
    for (k, e) in emissions.iter().enumerate() {
        check_shapes(transitions, e).map_err(|err| (k, err))?;
    }
    let total = transitions.total_frames();
    let last = transitions.states(total);
    let mut out: Vec<BackwardResult> = emissions
        .iter()
        .map(|_| {
            let mut beta = FrameRows::zeros((1..=total).map(|t| transitions.states(t)));
            beta.row_mut(total).fill(1.0 / last as f64);
            let mut scales = vec![0.0; total];
            scales[total - 1] = last as f64;
            BackwardResult { beta, scales }
        })
        .collect();
    for (k, b) in out.iter().enumerate() {
        visit(k, total, b.beta.row(total)).map_err(|err| (k, err))?;
    }

    let mut weighted = Vec::new();
    for t in (1..total).rev() {
        let a = transitions.matrix(t + 1);
        for (k, (b, e)) in out.iter_mut().zip(emissions).enumerate() {
            weighted.clear();
            weighted.extend(
                b.beta
                    .row(t + 1)
                    .iter()
                    .zip(e.row(t + 1))
                    .map(|(b, e)| b * e),
            );
            let row = b.beta.row_mut(t);
            for (dst, r) in row.iter_mut().zip(a.rows()) {
                *dst = r.iter().zip(&weighted).map(|(p, w)| p * w).sum();
            }
            b.scales[t - 1] = normalize(row, t).map_err(|err| (k, err))?;
            visit(k, t, b.beta.row(t)).map_err(|err| (k, err))?;
        }
    }
    Ok(out)
}

/// Scaled forward pass with a flat prior before the first frame.
pub fn forward(
    transitions: &TransitionSequence,
    emissions: &EmissionSequence,
) -> Result<ForwardResult> {
    untag(forward_many(transitions, &[emissions]))
}

/// Scaled backward pass, uniform at the last frame.
pub fn backward(
    transitions: &TransitionSequence,
    emissions: &EmissionSequence,
) -> Result<BackwardResult> {
    untag(backward_many(transitions, &[emissions], |_, _, _| Ok(())))
}

/// Combines forward and backward values into per-frame matching values.
pub fn posteriors(
    rwid: impl Into<Rwid>,
    forward: ForwardResult,
    backward: BackwardResult,
) -> Result<PosteriorTable> {
    if forward.alpha.len() != backward.beta.len() {
        return Err(Error::Shape(
            "forward and backward cover different frames".into(),
        ));
    }
    let mut values = FrameRows::zeros(forward.alpha.iter().map(<[f64]>::len));
    for t in 1..=forward.alpha.len() {
        let (a, b) = (forward.alpha.row(t), backward.beta.row(t));
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "frame {t}: forward/backward lengths differ"
            )));
        }
        let out = values.row_mut(t);
        for ((v, x), y) in out.iter_mut().zip(a).zip(b) {
            *v = x * y;
        }
        normalize(out, t)?;
    }
    Ok(PosteriorTable {
        rwid: rwid.into(),
        alpha: forward.alpha,
        beta: backward.beta,
        values,
        forward_scales: forward.scales,
        backward_scales: backward.scales,
    })
}

/// Forward, backward and posteriors for one identity.
pub fn infer(
    transitions: &TransitionSequence,
    emissions: &EmissionSequence,
) -> Result<PosteriorTable> {
    untag(smooth_many(transitions, &[emissions]))
}

/// Runs every identity's HMM against shared transitions, in parallel.
/// Errors are tagged with the failing identity.
pub fn run_with_transitions(
    transitions: &TransitionSequence,
    emissions: &[EmissionSequence],
) -> Result<Vec<PosteriorTable>> {
    let chunk = emissions
        .len()
        .div_ceil(rayon::current_num_threads())
        .max(1);
    let batches = emissions
        .par_chunks(chunk)
        .map(|batch| infer_batch(transitions, batch))
        .collect::<Result<Vec<_>>>()?;
    Ok(batches.into_iter().flatten().collect())
}

fn infer_batch(
    transitions: &TransitionSequence,
    emissions: &[EmissionSequence],
) -> Result<Vec<PosteriorTable>> {
    let refs: Vec<&EmissionSequence> = emissions.iter().collect();
    smooth_many(transitions, &refs).map_err(|(k, source)| Error::Rwid {
        rwid: emissions[k].rwid.clone(),
        source: Box::new(source),
    })
}

/// Forward passes, then backward passes that fill in the matching values
/// frame by frame.
fn smooth_many(
    transitions: &TransitionSequence,
    emissions: &[&EmissionSequence],
) -> Tagged<Vec<PosteriorTable>> {
    let fwd = forward_many(transitions, emissions)?;
    let mut values: Vec<FrameRows> = fwd
        .iter()
        .map(|f| FrameRows::zeros(f.alpha.iter().map(<[f64]>::len)))
        .collect();
    let bwd = backward_many(transitions, emissions, |k, t, beta| {
        let out = values[k].row_mut(t);
        for ((v, x), y) in out.iter_mut().zip(fwd[k].alpha.row(t)).zip(beta) {
            *v = x * y;
        }
        normalize(out, t).map(|_| ())
    })?;
    Ok(fwd
        .into_iter()
        .zip(bwd)
        .zip(values)
        .zip(emissions)
        .map(|(((f, b), values), e)| PosteriorTable {
            rwid: e.rwid.clone(),
            alpha: f.alpha,
            beta: b.beta,
            values,
            forward_scales: f.scales,
            backward_scales: b.scales,
        })
        .collect())
}

/// Builds transitions once from the tracker output and runs one HMM per
/// emission sequence.
pub fn run_all_rwids(
    track_set: &TrackSet,
    emissions: &[EmissionSequence],
    smoothing: SmoothingConfig,
) -> Result<Vec<PosteriorTable>> {
    let transitions = transitions_from_tracks(track_set, smoothing)?;
    run_with_transitions(&transitions, emissions)
}
