//! Exhaustive reference computations for small instances. Exponential by
//! construction; used to cross-check the forward-backward engine and the
//! Hungarian solver.

use ndarray::ArrayView2;

use crate::assignment::Matching;
use crate::emission::EmissionSequence;
use crate::error::{Error, Result};
use crate::rows::FrameRows;
use crate::transition::TransitionSequence;

/// Largest number of state paths [`brute_force_posterior`] will enumerate.
pub const PATH_BOUND: u128 = 1_000_000;

/// Largest `min(rows, cols)` accepted by [`brute_force_assignment`].
pub const ASSIGNMENT_BOUND: usize = 8;

/// Number of state paths through the given per-frame state counts.
pub fn path_count(states: impl IntoIterator<Item = usize>) -> u128 {
    states
        .into_iter()
        .fold(1u128, |acc, s| acc.saturating_mul(s as u128))
}

/// Exact per-frame state marginals by enumerating every path.
///
/// Path weight is the product of all emission entries along the path and of
/// all transitions between consecutive states; the first frame has a flat
/// prior.
pub fn brute_force_posterior(
    transitions: &TransitionSequence,
    emissions: &EmissionSequence,
) -> Result<FrameRows> {
    let total = transitions.total_frames();
    if emissions.total_frames() != total {
        return Err(Error::Shape(
            "emission and transition frame counts differ".into(),
        ));
    }
    let states: Vec<usize> = (1..=total).map(|t| transitions.states(t)).collect();
    for (t, &s) in states.iter().enumerate() {
        if emissions.row(t + 1).len() != s {
            return Err(Error::Shape(format!("frame {}: emission length", t + 1)));
        }
    }
    let paths = path_count(states.iter().copied());
    if paths > PATH_BOUND {
        return Err(Error::BoundExceeded(format!(
            "{paths} paths > {PATH_BOUND}"
        )));
    }

    let mut marginals = FrameRows::zeros(states.iter().copied());
    let mut path = vec![0usize; total];
    let mut evidence = 0.0;
    loop {
        let mut weight = emissions.row(1)[path[0]];
        for t in 1..total {
            if weight == 0.0 {
                break;
            }
            weight *=
                transitions.matrix(t + 1)[[path[t - 1], path[t]]] * emissions.row(t + 1)[path[t]];
        }
        if weight != 0.0 {
            evidence += weight;
            for (t, &s) in path.iter().enumerate() {
                marginals.row_mut(t + 1)[s] += weight;
            }
        }

        // odometer increment, last frame fastest
        let mut t = total;
        loop {
            if t == 0 {
                if !(evidence > 0.0) {
                    return Err(Error::InconsistentEvidence { frame: 1 });
                }
                for t in 1..=total {
                    marginals.row_mut(t).iter_mut().for_each(|v| *v /= evidence);
                }
                return Ok(marginals);
            }
            t -= 1;
            path[t] += 1;
            if path[t] < states[t] {
                break;
            }
            path[t] = 0;
        }
    }
}

/// Optimal assignment by enumerating every injection of the shorter side
/// into the longer one, in lexicographic order. The first strictly best
/// injection wins, so ties go to the lexicographically smallest pairing.
pub fn brute_force_assignment(values: ArrayView2<'_, f64>) -> Result<Matching> {
    let (rows, cols) = values.dim();
    if rows.min(cols) > ASSIGNMENT_BOUND {
        return Err(Error::BoundExceeded(format!(
            "{rows}x{cols} exceeds the {ASSIGNMENT_BOUND}-pair enumeration bound"
        )));
    }
    if rows == 0 || cols == 0 {
        return Ok(Matching::default());
    }
    let transposed = rows > cols;
    let view = if transposed { values.t() } else { values };
    let (short, long) = view.dim();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut chosen = Vec::with_capacity(short);
    let mut used = vec![false; long];
    enumerate(view, &mut chosen, &mut used, &mut best);

    let (_, cols_of) = best.expect("at least one injection exists");
    let mut pairs: Vec<(usize, usize)> = cols_of
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    Ok(Matching { pairs })
}

fn enumerate(
    values: ArrayView2<'_, f64>,
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let (short, long) = values.dim();
    if chosen.len() == short {
        let total: f64 = chosen
            .iter()
            .enumerate()
            .map(|(r, &c)| values[[r, c]])
            .sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            *best = Some((total, chosen.clone()));
        }
        return;
    }
    for c in 0..long {
        if used[c] {
            continue;
        }
        used[c] = true;
        chosen.push(c);
        enumerate(values, chosen, used, best);
        chosen.pop();
        used[c] = false;
    }
}
