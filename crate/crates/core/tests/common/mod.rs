#![allow(dead_code)]

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use idfuse::transition::SmoothingConfig;
use idfuse::{
    BBox, EmissionSequence, FrameRows, IdentificationEvent, Point, Rwid, TrackSet,
    TransitionSequence,
};

pub struct Instance {
    pub tracks: TrackSet,
    pub events: Vec<IdentificationEvent>,
    pub rwids: Vec<Rwid>,
    pub smoothing: SmoothingConfig,
}

/// Random tracker output: each detection continues an id from the previous
/// frame with probability 0.7 (when one is free), otherwise starts a new one.
pub fn random_tracks<R: Rng>(rng: &mut R, frames: usize, max_dets: usize) -> TrackSet {
    let mut next_id = 1u64;
    let mut prev: Vec<u64> = Vec::new();
    let mut rows = Vec::new();
    for t in 1..=frames {
        let m = rng.gen_range(0..=max_dets);
        let mut free = prev.clone();
        free.shuffle(rng);
        let mut ids = Vec::with_capacity(m);
        for _ in 0..m {
            let id = match free.pop() {
                Some(id) if rng.gen_bool(0.7) => id,
                _ => {
                    next_id += 1;
                    next_id
                }
            };
            ids.push(id);
        }
        for &id in &ids {
            let c = Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            rows.push((
                t,
                Some(id),
                BBox::centered(c, 6.0, 4.0),
                rng.gen_range(0.1..1.0),
            ));
        }
        prev = ids;
    }
    TrackSet::from_rows(frames, rows)
}

fn random_row<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_frames: usize,
    max_dets: usize,
    max_rwids: usize,
) -> Instance {
    let frames = rng.gen_range(1..=max_frames);
    let tracks = random_tracks(rng, frames, max_dets);
    let n = rng.gen_range(1..=max_rwids);
    let rwids: Vec<Rwid> = (0..n).map(|k| format!("r{k}")).collect();
    let mut events = Vec::new();
    for r in &rwids {
        for _ in 0..rng.gen_range(0..=3) {
            let t = rng.gen_range(1..=frames);
            let m = tracks.frame(t).len();
            if m > 0 && rng.gen_bool(0.5) {
                events.push(IdentificationEvent::row(t, r.clone(), random_row(rng, m)));
            } else {
                let at = Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
                events.push(IdentificationEvent::station(t, r.clone(), at));
            }
        }
    }
    let smoothing =
        SmoothingConfig::new(rng.gen_range(1e-4..0.3), rng.gen_range(0.0..0.99)).unwrap();
    Instance {
        tracks,
        events,
        rwids,
        smoothing,
    }
}

/// Unscaled forward-backward marginals; only safe on short sequences.
pub fn unscaled_posterior(tr: &TransitionSequence, em: &EmissionSequence) -> FrameRows {
    let total = tr.total_frames();
    let mut alpha: Vec<Vec<f64>> = vec![em.row(1).to_vec()];
    for t in 2..=total {
        let a = tr.matrix(t);
        let prev = &alpha[t - 2];
        let row: Vec<f64> = (0..tr.states(t))
            .map(|j| em.row(t)[j] * (0..prev.len()).map(|l| prev[l] * a[[l, j]]).sum::<f64>())
            .collect();
        alpha.push(row);
    }
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); total];
    beta[total - 1] = vec![1.0; tr.states(total)];
    for t in (1..total).rev() {
        let a = tr.matrix(t + 1);
        let next = &beta[t];
        beta[t - 1] = (0..tr.states(t))
            .map(|l| {
                (0..next.len())
                    .map(|j| a[[l, j]] * next[j] * em.row(t + 1)[j])
                    .sum()
            })
            .collect();
    }
    FrameRows::from_rows((0..total).map(|t| {
        let v: Vec<f64> = alpha[t].iter().zip(&beta[t]).map(|(a, b)| a * b).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<_>>()
    }))
}

/// Random matrix, either continuous or with small integer entries (many ties).
pub fn random_matrix<R: Rng>(rng: &mut R, max_side: usize) -> Array2<f64> {
    let rows = rng.gen_range(1..=max_side);
    let cols = rng.gen_range(1..=max_side);
    let integer = rng.gen_bool(0.3);
    Array2::from_shape_fn((rows, cols), |_| {
        if integer {
            rng.gen_range(0..4) as f64
        } else {
            rng.gen_range(0.0..1.0)
        }
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
