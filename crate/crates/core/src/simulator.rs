//! Synthetic pens: agents wandering with feeder visits, an imperfect tracker
//! that swaps ids when agents touch, and sweeps comparing fusion against the
//! baselines as identifications become more plentiful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{first_frame_assign, initial_positions, reid_swap};
use crate::emission::{simulate_identifications, EmissionConfig};
use crate::error::{Error, Result};
use crate::fusion::{fuse_with_transitions, observed_rwids};
use crate::metrics::{identity_confusion, iou, micro_scores, IdentityConfusion, Scores};
use crate::transition::{transitions_from_tracks, SmoothingConfig};
use crate::types::{
    BBox, GroundTruth, IdentificationEvent, IdentityTrackSet, Method, Point, Rwid, SceneConfig,
    TrackSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub pen_width: f64,
    pub pen_height: f64,
    pub population: usize,
    pub total_frames: usize,
    /// Distance travelled per frame while wandering.
    pub speed: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub feeder_zone: Rect,
    /// Expected feeder visits per agent per 1000 frames.
    pub visit_rate: f64,
    /// Probability of a tracker id swap when two agents come into contact.
    pub switch_rate: f64,
    /// Probability that an agent goes undetected in a frame.
    pub detection_dropout: f64,
    /// Uniform jitter (in units) added to detection box corners.
    pub box_jitter: f64,
    /// Ground truth is annotated every this many frames, starting at frame 1.
    pub annotation_interval: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            pen_width: 1000.0,
            pen_height: 600.0,
            population: 15,
            total_frames: 15_000,
            speed: 3.0,
            box_width: 60.0,
            box_height: 40.0,
            feeder_zone: Rect {
                x0: 420.0,
                y0: 0.0,
                x1: 580.0,
                y1: 80.0,
            },
            visit_rate: 2.0,
            switch_rate: 0.05,
            detection_dropout: 0.0,
            box_jitter: 1.0,
            annotation_interval: 1,
            frame_rate: 25.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.population == 0 || self.total_frames == 0 {
            return bad("population and total_frames must be positive".into());
        }
        if !(self.pen_width > self.box_width && self.pen_height > self.box_height) {
            return bad("pen must be larger than an agent's box".into());
        }
        if !(self.box_width > 0.0 && self.box_height > 0.0 && self.speed >= 0.0) {
            return bad("box size must be positive and speed non-negative".into());
        }
        for (name, rate) in [
            ("switch_rate", self.switch_rate),
            ("detection_dropout", self.detection_dropout),
            ("visit_rate / 1000", self.visit_rate / 1000.0),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} = {rate} outside [0, 1]"));
            }
        }
        let z = &self.feeder_zone;
        if !(z.x0 >= 0.0
            && z.y0 >= 0.0
            && z.x1 <= self.pen_width
            && z.y1 <= self.pen_height
            && z.x0 < z.x1
            && z.y0 < z.y1)
        {
            return bad("feeder zone must lie inside the pen".into());
        }
        if self.annotation_interval == 0 {
            return bad("annotation_interval must be at least 1".into());
        }
        Ok(())
    }

    pub fn rwids(&self) -> Vec<Rwid> {
        (1..=self.population)
            .map(|k| format!("{}", 4800 + k))
            .collect()
    }

    pub fn scene_config(&self) -> SceneConfig {
        let mut scene = SceneConfig::new(self.total_frames, self.rwids());
        scene.frame_rate = self.frame_rate;
        scene
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub ground_truth: GroundTruth,
    pub track_set: TrackSet,
    /// Station reads fired on feeder arrivals.
    pub events: Vec<IdentificationEvent>,
    pub rwids: Vec<Rwid>,
    /// Number of tracker id swaps injected.
    pub switches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    Wander,
    ToFeeder(Point),
    Feeding(usize),
}

struct Agent {
    pos: Point,
    heading: f64,
    activity: Activity,
    tracker_id: u64,
}

/// Generates a synthetic scene; identical configs give identical scenes.
pub fn generate_scene(config: &SimConfig) -> Result<SimScene> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rwids = config.rwids();
    let (hw, hh) = (config.box_width / 2.0, config.box_height / 2.0);
    let (xmin, xmax) = (hw, config.pen_width - hw);
    let (ymin, ymax) = (hh, config.pen_height - hh);
    let zone = config.feeder_zone;
    let visit_p = config.visit_rate / 1000.0;

    let mut agents: Vec<Agent> = (0..config.population)
        .map(|k| Agent {
            pos: Point::new(rng.gen_range(xmin..=xmax), rng.gen_range(ymin..=ymax)),
            heading: rng.gen_range(0.0..std::f64::consts::TAU),
            activity: Activity::Wander,
            tracker_id: k as u64 + 1,
        })
        .collect();

    let n = config.population;
    let mut in_contact = vec![false; n * n];
    let mut ground_truth = GroundTruth::new();
    let mut rows = Vec::with_capacity(config.total_frames * n);
    let mut events = Vec::new();
    let mut switches = 0;

    for t in 1..=config.total_frames {
        if t > 1 {
            for (k, a) in agents.iter_mut().enumerate() {
                match a.activity {
                    Activity::Wander => {
                        a.heading += rng.gen_range(-0.3..0.3);
                        a.pos.x += config.speed * a.heading.cos();
                        a.pos.y += config.speed * a.heading.sin();
                        if rng.gen_bool(visit_p) {
                            let target = Point::new(
                                rng.gen_range(zone.x0.max(xmin)..=zone.x1.min(xmax)),
                                rng.gen_range(zone.y0.max(ymin)..=zone.y1.min(ymax)),
                            );
                            a.activity = Activity::ToFeeder(target);
                        }
                    }
                    Activity::ToFeeder(target) => {
                        let d = a.pos.distance(&target);
                        let step = (config.speed * 1.5).min(d);
                        if d > 0.0 {
                            a.pos.x += step * (target.x - a.pos.x) / d;
                            a.pos.y += step * (target.y - a.pos.y) / d;
                        }
                        if zone.contains(a.pos) {
                            events.push(IdentificationEvent::station(
                                t,
                                rwids[k].clone(),
                                zone.center(),
                            ));
                            a.activity = Activity::Feeding(rng.gen_range(25..=100));
                        } else if d <= step {
                            // target unreachable inside the clamped pen; give up
                            a.activity = Activity::Wander;
                        }
                    }
                    Activity::Feeding(left) => {
                        a.pos.x += rng.gen_range(-0.5..0.5);
                        a.pos.y += rng.gen_range(-0.5..0.5);
                        a.activity = if left <= 1 {
                            // leave the feeder heading into the pen
                            a.heading = std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.8..0.8);
                            Activity::Wander
                        } else {
                            Activity::Feeding(left - 1)
                        };
                    }
                }
                if a.pos.x < xmin || a.pos.x > xmax {
                    a.pos.x = a.pos.x.clamp(xmin, xmax);
                    a.heading = std::f64::consts::PI - a.heading;
                }
                if a.pos.y < ymin || a.pos.y > ymax {
                    a.pos.y = a.pos.y.clamp(ymin, ymax);
                    a.heading = -a.heading;
                }
            }
        }

        let boxes: Vec<BBox> = agents
            .iter()
            .map(|a| BBox::centered(a.pos, config.box_width, config.box_height))
            .collect();

        // tracker confusion on contact onset
        for i in 0..n {
            for j in (i + 1)..n {
                let touching = iou(&boxes[i], &boxes[j]) > 0.0;
                let was = std::mem::replace(&mut in_contact[i * n + j], touching);
                if touching && !was && config.switch_rate > 0.0 && rng.gen_bool(config.switch_rate)
                {
                    let (a, b) = (agents[i].tracker_id, agents[j].tracker_id);
                    agents[i].tracker_id = b;
                    agents[j].tracker_id = a;
                    switches += 1;
                }
            }
        }

        if (t - 1) % config.annotation_interval == 0 {
            ground_truth.annotate_empty(t);
            for (k, b) in boxes.iter().enumerate() {
                ground_truth.insert(t, rwids[k].clone(), *b);
            }
        }

        let mut frame: Vec<(u64, BBox, f64)> = Vec::with_capacity(n);
        for (a, b) in agents.iter().zip(&boxes) {
            if config.detection_dropout > 0.0 && rng.gen_bool(config.detection_dropout) {
                continue;
            }
            let j = config.box_jitter;
            let det = if j > 0.0 {
                BBox::new(
                    b.left + rng.gen_range(-j..=j),
                    b.top + rng.gen_range(-j..=j),
                    b.width + rng.gen_range(-j..=j),
                    b.height + rng.gen_range(-j..=j),
                )
            } else {
                *b
            };
            frame.push((a.tracker_id, det, rng.gen_range(0.6..1.0)));
        }
        frame.sort_by_key(|(id, _, _)| *id);
        rows.extend(frame.into_iter().map(|(id, b, c)| (t, Some(id), b, c)));
    }

    Ok(SimScene {
        ground_truth,
        track_set: TrackSet::from_rows(config.total_frames, rows),
        events,
        rwids,
        switches,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub count: usize,
    pub repeat: usize,
    pub confusion: IdentityConfusion,
    pub scores: Scores,
    /// For fusion runs: the smallest matching value among emitted pairs.
    pub min_assigned_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub method: String,
    pub count: usize,
    pub runs: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub records: Vec<SweepRecord>,
}

impl SweepTable {
    /// Mean and sample standard deviation of F1 per (method, count).
    pub fn summary(&self) -> Vec<SweepSummaryRow> {
        let mut out: Vec<SweepSummaryRow> = Vec::new();
        for chunk in self
            .records
            .chunk_by(|a, b| a.method == b.method && a.count == b.count)
        {
            let f1: Vec<f64> = chunk.iter().map(|r| r.scores.f1).collect();
            let n = f1.len() as f64;
            let mean = f1.iter().sum::<f64>() / n;
            let var = if f1.len() > 1 {
                f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            out.push(SweepSummaryRow {
                method: chunk[0].method.to_string(),
                count: chunk[0].count,
                runs: f1.len(),
                mean_f1: mean,
                std_f1: var.sqrt(),
            });
        }
        out
    }

    pub fn mean_f1(&self, method: Method, count: usize) -> Option<f64> {
        let method = method.to_string();
        self.summary()
            .into_iter()
            .find(|r| r.method == method && r.count == count)
            .map(|r| r.mean_f1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams<'a> {
    pub counts: &'a [usize],
    pub noise_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
    pub smoothing: SmoothingConfig,
    pub emission: EmissionConfig,
}

fn score(gt: &GroundTruth, a: &IdentityTrackSet) -> (IdentityConfusion, Scores) {
    let c = identity_confusion(gt, a);
    (c, micro_scores(&c))
}

/// Scores fusion, re-identification and the first-frame baseline on one
/// scene for every identification count and repeat. Each run draws its own
/// identifications from a generator keyed on `(seed, count, repeat)`.
pub fn sweep_scene(
    scene: &SimScene,
    population: usize,
    params: &SweepParams<'_>,
) -> Result<SweepTable> {
    if params.repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let ts = &scene.track_set;
    let gt = &scene.ground_truth;
    let transitions = transitions_from_tracks(ts, params.smoothing)?;
    let first = first_frame_assign(ts, &initial_positions(gt))?;
    let first_score = score(gt, &first);

    let jobs: Vec<(usize, usize)> = params
        .counts
        .iter()
        .flat_map(|&c| (0..params.repeats).map(move |r| (c, r)))
        .collect();

    let runs: Vec<Vec<SweepRecord>> = jobs
        .par_iter()
        .map(|&(count, repeat)| -> Result<Vec<SweepRecord>> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(((count as u64) << 32) | repeat as u64);
            let events = if count == 0 {
                Vec::new()
            } else {
                simulate_identifications(
                    gt,
                    ts,
                    count,
                    params.noise_fraction,
                    params.emission.distance_floor,
                    &mut rng,
                )?
            };
            let rwids = observed_rwids(&scene.rwids, &events);
            let fused = fuse_with_transitions(
                &transitions,
                ts,
                &events,
                &rwids,
                population,
                &params.emission,
            )?;
            let reid = reid_swap(&first, &events, ts)?;

            let record =
                |method, (confusion, scores): (IdentityConfusion, Scores), min| SweepRecord {
                    method,
                    count,
                    repeat,
                    confusion,
                    scores,
                    min_assigned_value: min,
                };
            Ok(vec![
                record(
                    Method::Hmm,
                    score(gt, &fused.assignment),
                    fused.min_assigned_value(),
                ),
                record(Method::Reid, score(gt, &reid), None),
                record(Method::FirstFrame, first_score, None),
            ])
        })
        .collect::<Result<_>>()?;

    let mut records: Vec<SweepRecord> = runs.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.method, r.count, r.repeat));
    Ok(SweepTable { records })
}

/// Generates the scene from `config` and sweeps it.
pub fn sweep(config: &SimConfig, params: &SweepParams<'_>) -> Result<SweepTable> {
    let scene = generate_scene(config)?;
    sweep_scene(&scene, config.population, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            population: 5,
            total_frames: 600,
            visit_rate: 5.0,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn clean_tracker_ids_match_identities() {
        let cfg = SimConfig {
            switch_rate: 0.0,
            ..small(3)
        };
        let scene = generate_scene(&cfg).unwrap();
        assert_eq!(scene.switches, 0);
        for (t, objs) in scene.ground_truth.iter() {
            let dets = scene.track_set.frame(t);
            assert_eq!(dets.len(), 5);
            for (k, o) in objs.iter().enumerate() {
                let d = dets
                    .iter()
                    .find(|d| d.tracker_id == Some(k as u64 + 1))
                    .unwrap();
                assert!(iou(&d.bbox, &o.bbox) > 0.8);
            }
        }
    }

    #[test]
    fn no_visits_no_events() {
        let cfg = SimConfig {
            visit_rate: 0.0,
            ..small(1)
        };
        assert!(generate_scene(&cfg).unwrap().events.is_empty());
    }

    #[test]
    fn scene_is_seeded() {
        assert_eq!(
            generate_scene(&small(9)).unwrap(),
            generate_scene(&small(9)).unwrap()
        );
        assert_ne!(
            generate_scene(&small(9)).unwrap(),
            generate_scene(&small(10)).unwrap()
        );
    }

    #[test]
    fn population_conserved_in_ground_truth() {
        let cfg = SimConfig {
            detection_dropout: 0.2,
            ..small(4)
        };
        let scene = generate_scene(&cfg).unwrap();
        assert!(scene.ground_truth.iter().all(|(_, objs)| objs.len() == 5));
        assert!(scene.track_set.frames().iter().any(|f| f.len() < 5));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SimConfig {
            switch_rate: 1.5,
            ..small(0)
        };
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn zero_count_sweep() {
        let cfg = small(2);
        let params = SweepParams {
            counts: &[0],
            noise_fraction: 0.25,
            repeats: 2,
            seed: 1,
            smoothing: SmoothingConfig::default(),
            emission: EmissionConfig::default(),
        };
        let table = sweep(&cfg, &params).unwrap();
        assert_eq!(table.records.len(), 6);
        assert_eq!(table.mean_f1(Method::Hmm, 0), Some(0.0));
        let first = table.mean_f1(Method::FirstFrame, 0).unwrap();
        assert_eq!(table.mean_f1(Method::Reid, 0), Some(first));
        assert_eq!(sweep(&cfg, &params).unwrap(), table);
    }
}
