//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored; anything after a `#`
//! on a value line is a comment. Every key can also be set from the command
//! line, and later assignments win. Relative input paths (`tracks`,
//! `events`, `gt`) in a loaded file are taken relative to that file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::emission::EmissionConfig;
use crate::error::{Error, Result};
use crate::metrics::SeriesMode;
use crate::simulator::{Rect, SimConfig};
use crate::transition::SmoothingConfig;
use crate::types::{Point, Rwid, SceneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracks: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub smoothing: SmoothingConfig,
    pub emission: EmissionConfig,
    /// Overrides the location of every station-form identification.
    pub station: Option<Point>,
    /// Population size N; defaults to the catalog size.
    pub population: Option<usize>,
    /// Identity catalog; defaults to the identities seen in the events.
    pub rwids: Vec<Rwid>,
    pub window: usize,
    pub series_mode: SeriesMode,
    pub sim: SimConfig,
    pub counts: Vec<usize>,
    pub repeats: usize,
    pub noise: f64,
    pub sweep_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tracks: None,
            events: None,
            gt: None,
            out: None,
            smoothing: SmoothingConfig::default(),
            emission: EmissionConfig::default(),
            station: None,
            population: None,
            rwids: Vec::new(),
            window: 1000,
            series_mode: SeriesMode::Cumulative,
            sim: SimConfig::default(),
            counts: vec![5, 10, 20, 40, 80],
            repeats: 20,
            noise: 0.25,
            sweep_seed: 0,
        }
    }
}

/// Recognized keys, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "tracks",
    "events",
    "gt",
    "out",
    "epsilon",
    "lost_persistence",
    "distance_floor",
    "defer_window",
    "station_x",
    "station_y",
    "population",
    "rwids",
    "window",
    "series_mode",
    "sim_pen_width",
    "sim_pen_height",
    "sim_population",
    "sim_frames",
    "sim_speed",
    "sim_box_width",
    "sim_box_height",
    "sim_feeder_x0",
    "sim_feeder_y0",
    "sim_feeder_x1",
    "sim_feeder_y1",
    "sim_visit_rate",
    "sim_switch_rate",
    "sim_dropout",
    "sim_box_jitter",
    "sim_annotation_interval",
    "sim_frame_rate",
    "sim_seed",
    "counts",
    "repeats",
    "noise",
    "sweep_seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        cfg.merge_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.tracks, &mut cfg.events, &mut cfg.gt]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies every assignment in `text` on top of the current values.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: PathBuf::new(),
                line: n + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {pair:?}")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let sim = &mut self.sim;
        match key {
            "tracks" => self.tracks = Some(value.into()),
            "events" => self.events = Some(value.into()),
            "gt" => self.gt = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "epsilon" => self.smoothing.epsilon = parse(key, value)?,
            "lost_persistence" => self.smoothing.lost_self_persistence = parse(key, value)?,
            "distance_floor" => self.emission.distance_floor = parse(key, value)?,
            "defer_window" => self.emission.defer_window = parse(key, value)?,
            "station_x" => self.station.get_or_insert_with(Point::default).x = parse(key, value)?,
            "station_y" => self.station.get_or_insert_with(Point::default).y = parse(key, value)?,
            "population" => self.population = Some(parse(key, value)?),
            "rwids" => self.rwids = list(key, value)?,
            "window" => self.window = parse(key, value)?,
            "series_mode" => {
                self.series_mode = match value {
                    "cumulative" => SeriesMode::Cumulative,
                    "windowed" => SeriesMode::Windowed,
                    _ => {
                        return Err(Error::Config(format!(
                            "series_mode: expected cumulative|windowed, got {value:?}"
                        )))
                    }
                }
            }
            "sim_pen_width" => sim.pen_width = parse(key, value)?,
            "sim_pen_height" => sim.pen_height = parse(key, value)?,
            "sim_population" => sim.population = parse(key, value)?,
            "sim_frames" => sim.total_frames = parse(key, value)?,
            "sim_speed" => sim.speed = parse(key, value)?,
            "sim_box_width" => sim.box_width = parse(key, value)?,
            "sim_box_height" => sim.box_height = parse(key, value)?,
            "sim_feeder_x0" => sim.feeder_zone.x0 = parse(key, value)?,
            "sim_feeder_y0" => sim.feeder_zone.y0 = parse(key, value)?,
            "sim_feeder_x1" => sim.feeder_zone.x1 = parse(key, value)?,
            "sim_feeder_y1" => sim.feeder_zone.y1 = parse(key, value)?,
            "sim_visit_rate" => sim.visit_rate = parse(key, value)?,
            "sim_switch_rate" => sim.switch_rate = parse(key, value)?,
            "sim_dropout" => sim.detection_dropout = parse(key, value)?,
            "sim_box_jitter" => sim.box_jitter = parse(key, value)?,
            "sim_annotation_interval" => sim.annotation_interval = parse(key, value)?,
            "sim_frame_rate" => sim.frame_rate = parse(key, value)?,
            "sim_seed" => sim.seed = parse(key, value)?,
            "counts" => self.counts = list(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "sweep_seed" => self.sweep_seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Checks value ranges; paths are checked by the commands using them.
    pub fn check(&self) -> Result<()> {
        self.smoothing.check()?;
        if !(self.emission.distance_floor > 0.0) {
            return Err(Error::Config("distance_floor must be positive".into()));
        }
        if self.population == Some(0) {
            return Err(Error::Config("population must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must lie in [0, 1]".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }

    /// Scene description for a run over `total_frames` frames. The catalog
    /// falls back to `observed` when no `rwids` are configured.
    pub fn scene_config(&self, total_frames: usize, observed: &[Rwid]) -> SceneConfig {
        let catalog = if self.rwids.is_empty() {
            observed.to_vec()
        } else {
            self.rwids.clone()
        };
        let mut scene = SceneConfig::new(total_frames, catalog);
        if let Some(n) = self.population {
            scene.population = n;
        }
        scene
    }

    /// Serializes every key, so the output round-trips through `merge_text`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let sim = &self.sim;
        let z: &Rect = &sim.feeder_zone;
        for key in KEYS {
            let value = match *key {
                "tracks" => path(&self.tracks),
                "events" => path(&self.events),
                "gt" => path(&self.gt),
                "out" => path(&self.out),
                "epsilon" => Some(self.smoothing.epsilon.to_string()),
                "lost_persistence" => Some(self.smoothing.lost_self_persistence.to_string()),
                "distance_floor" => Some(self.emission.distance_floor.to_string()),
                "defer_window" => Some(self.emission.defer_window.to_string()),
                "station_x" => self.station.map(|p| p.x.to_string()),
                "station_y" => self.station.map(|p| p.y.to_string()),
                "population" => self.population.map(|n| n.to_string()),
                "rwids" => (!self.rwids.is_empty()).then(|| self.rwids.join(",")),
                "window" => Some(self.window.to_string()),
                "series_mode" => Some(
                    match self.series_mode {
                        SeriesMode::Cumulative => "cumulative",
                        SeriesMode::Windowed => "windowed",
                    }
                    .to_string(),
                ),
                "sim_pen_width" => Some(sim.pen_width.to_string()),
                "sim_pen_height" => Some(sim.pen_height.to_string()),
                "sim_population" => Some(sim.population.to_string()),
                "sim_frames" => Some(sim.total_frames.to_string()),
                "sim_speed" => Some(sim.speed.to_string()),
                "sim_box_width" => Some(sim.box_width.to_string()),
                "sim_box_height" => Some(sim.box_height.to_string()),
                "sim_feeder_x0" => Some(z.x0.to_string()),
                "sim_feeder_y0" => Some(z.y0.to_string()),
                "sim_feeder_x1" => Some(z.x1.to_string()),
                "sim_feeder_y1" => Some(z.y1.to_string()),
                "sim_visit_rate" => Some(sim.visit_rate.to_string()),
                "sim_switch_rate" => Some(sim.switch_rate.to_string()),
                "sim_dropout" => Some(sim.detection_dropout.to_string()),
                "sim_box_jitter" => Some(sim.box_jitter.to_string()),
                "sim_annotation_interval" => Some(sim.annotation_interval.to_string()),
                "sim_frame_rate" => Some(sim.frame_rate.to_string()),
                "sim_seed" => Some(sim.seed.to_string()),
                "counts" => Some(join(&self.counts)),
                "repeats" => Some(self.repeats.to_string()),
                "noise" => Some(self.noise.to_string()),
                "sweep_seed" => Some(self.sweep_seed.to_string()),
                _ => unreachable!("every key is serialized"),
            };
            if let Some(v) = value {
                let _ = writeln!(s, "{key} = {v}");
            }
        }
        s
    }
}
