mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, random_instance, random_matrix, random_tracks, unscaled_posterior};
use idfuse::assignment::assign_frames;
use idfuse::emission::EmissionConfig;
use idfuse::hmm::run_with_transitions;
use idfuse::metrics::match_frame;
use idfuse::oracle::{brute_force_assignment, brute_force_posterior};
use idfuse::{
    build_emission_sequence, hungarian_max, infer, iou, transitions_from_tracks, BBox,
    EmissionSequence, EventSource, IdentificationEvent, Point, TrackSet,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posteriors_match_enumeration(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 6, 3, 3);
        let tr = transitions_from_tracks(&inst.tracks, inst.smoothing).unwrap();
        for r in &inst.rwids {
            let em = build_emission_sequence(r, &inst.events, &inst.tracks, &EmissionConfig::default()).unwrap();
            let table = infer(&tr, &em).unwrap();
            let exact = brute_force_posterior(&tr, &em).unwrap();
            for t in 1..=tr.total_frames() {
                prop_assert!(max_abs_diff(table.values(t), exact.row(t)) <= 1e-9);
            }
        }
    }

    #[test]
    fn scaling_does_not_change_posteriors(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 8, 4, 2);
        let tr = transitions_from_tracks(&inst.tracks, inst.smoothing).unwrap();
        for r in &inst.rwids {
            let em = build_emission_sequence(r, &inst.events, &inst.tracks, &EmissionConfig::default()).unwrap();
            let scaled = infer(&tr, &em).unwrap();
            let plain = unscaled_posterior(&tr, &em);
            for t in 1..=tr.total_frames() {
                prop_assert!(max_abs_diff(scaled.values(t), plain.row(t)) <= 1e-12);
            }
        }
    }

    #[test]
    fn normalized_rows_everywhere(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 30, 5, 3);
        let tr = transitions_from_tracks(&inst.tracks, inst.smoothing).unwrap();
        for t in 2..=tr.total_frames() {
            for row in tr.matrix(t).rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
        for r in &inst.rwids {
            let em = build_emission_sequence(r, &inst.events, &inst.tracks, &EmissionConfig::default()).unwrap();
            let table = infer(&tr, &em).unwrap();
            for t in 1..=tr.total_frames() {
                for rows in [&table.alpha, &table.beta, &table.values] {
                    prop_assert!((rows.row(t).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn emission_scale_invariance(seed in any::<u64>(), factor in 1e-6f64..1e6) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 8, 4, 1);
        let tr = transitions_from_tracks(&inst.tracks, inst.smoothing).unwrap();
        let em = build_emission_sequence(&inst.rwids[0], &inst.events, &inst.tracks, &EmissionConfig::default()).unwrap();
        let t_scaled = g.gen_range(1..=tr.total_frames());
        let rows: Vec<Vec<f64>> = (1..=tr.total_frames())
            .map(|t| {
                let k = if t == t_scaled { factor } else { 1.0 };
                em.row(t).iter().map(|v| v * k).collect()
            })
            .collect();
        let scaled = EmissionSequence::from_rows(inst.rwids[0].clone(), rows);
        let a = infer(&tr, &em).unwrap();
        let b = infer(&tr, &scaled).unwrap();
        for t in 1..=tr.total_frames() {
            prop_assert!(max_abs_diff(a.values(t), b.values(t)) <= 1e-12);
        }
    }

    #[test]
    fn detection_order_is_irrelevant(seed in any::<u64>()) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 8, 4, 2);
        let ts = &inst.tracks;
        let perms: Vec<Vec<usize>> = ts
            .frames()
            .iter()
            .map(|f| {
                let mut p: Vec<usize> = (0..f.len()).collect();
                p.shuffle(&mut g);
                p
            })
            .collect();
        let shuffled = TrackSet::from_rows(
            ts.total_frames(),
            perms.iter().enumerate().flat_map(|(i, p)| {
                p.iter().map(move |&j| {
                    let d = &ts.frame(i + 1)[j];
                    (d.frame, d.tracker_id, d.bbox, d.confidence)
                })
            }),
        );
        let events: Vec<IdentificationEvent> = inst
            .events
            .iter()
            .map(|e| match &e.source {
                EventSource::Row(row) => {
                    let p = &perms[e.frame - 1];
                    IdentificationEvent::row(e.frame, e.rwid.clone(), p.iter().map(|&j| row[j]).collect())
                }
                EventSource::Station(_) => e.clone(),
            })
            .collect();
        let tr_a = transitions_from_tracks(ts, inst.smoothing).unwrap();
        let tr_b = transitions_from_tracks(&shuffled, inst.smoothing).unwrap();
        let cfg = EmissionConfig::default();
        for r in &inst.rwids {
            let a = infer(&tr_a, &build_emission_sequence(r, &inst.events, ts, &cfg).unwrap()).unwrap();
            let b = infer(&tr_b, &build_emission_sequence(r, &events, &shuffled, &cfg).unwrap()).unwrap();
            for t in 1..=ts.total_frames() {
                let (va, vb) = (a.values(t), b.values(t));
                let p = &perms[t - 1];
                for (i, &j) in p.iter().enumerate() {
                    prop_assert!((vb[i] - va[j]).abs() <= 1e-12);
                }
                prop_assert!((vb[p.len()] - va[p.len()]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hungarian_matches_enumeration(seed in any::<u64>()) {
        let v = random_matrix(&mut rng(seed), 6);
        let fast = hungarian_max(v.view()).unwrap();
        let slow = brute_force_assignment(v.view()).unwrap();
        prop_assert_eq!(fast.pairs.len(), v.nrows().min(v.ncols()));
        prop_assert_eq!(fast.total(v.view()), slow.total(v.view()));
    }

    #[test]
    fn frame_matching_maximizes_overlap(seed in any::<u64>()) {
        let mut g = rng(seed);
        let mut boxes = |n: usize| -> Vec<BBox> {
            (0..n)
                .map(|_| BBox::centered(Point::new(g.gen_range(0.0..40.0), g.gen_range(0.0..40.0)), 10.0, 8.0))
                .collect()
        };
        let gt = boxes(5);
        let dets = boxes(4);
        let pairs = match_frame(&gt, &dets);
        let overlap = Array2::from_shape_fn((gt.len(), dets.len()), |(a, b)| iou(&gt[a], &dets[b]));
        let best = brute_force_assignment(overlap.view()).unwrap().total(overlap.view());
        let got: f64 = pairs.iter().map(|&(a, b)| overlap[[a, b]]).sum();
        prop_assert!((got - best).abs() <= 1e-12);
        prop_assert!(pairs.iter().all(|&(a, b)| overlap[[a, b]] > 0.0));
    }

    #[test]
    fn assignments_are_one_to_one_above_threshold(seed in any::<u64>()) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 8, 4, 4);
        let population = inst.rwids.len();
        let tr = transitions_from_tracks(&inst.tracks, inst.smoothing).unwrap();
        let cfg = EmissionConfig::default();
        let ems: Vec<_> = inst
            .rwids
            .iter()
            .map(|r| build_emission_sequence(r, &inst.events, &inst.tracks, &cfg).unwrap())
            .collect();
        let tables = run_with_transitions(&tr, &ems).unwrap();
        let frames = assign_frames(&tables, inst.tracks.total_frames(), population).unwrap();
        for fa in &frames {
            let mut dets: Vec<usize> = fa.pairs.iter().map(|p| p.detection).collect();
            let mut ids: Vec<&str> = fa.pairs.iter().map(|p| p.rwid.as_str()).collect();
            dets.dedup();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(dets.len(), fa.pairs.len());
            prop_assert_eq!(ids.len(), fa.pairs.len());
            prop_assert!(fa.pairs.iter().all(|p| p.value >= 1.0 / population as f64));
        }
    }
}

#[test]
fn random_tracks_are_valid() {
    let mut g = rng(1);
    for _ in 0..50 {
        let ts = random_tracks(&mut g, 10, 4);
        for f in ts.frames() {
            let mut ids: Vec<_> = f.iter().map(|d| d.tracker_id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), f.len());
        }
    }
}
