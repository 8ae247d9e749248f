use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use idfuse::baselines::{first_frame_assign, initial_positions, reid_swap};
use idfuse::config::RunConfig;
use idfuse::emission::build_emission_sequence;
use idfuse::fusion::{fuse, FusionConfig};
use idfuse::hmm::infer;
use idfuse::io;
use idfuse::metrics::{evaluate, f1_over_time, SeriesMode};
use idfuse::oracle::{brute_force_posterior, PATH_BOUND};
use idfuse::simulator::{generate_scene, sweep, SweepParams};
use idfuse::transition::transitions_from_tracks;
use idfuse::{EventSource, IdentificationEvent, Rwid};

#[derive(Parser)]
#[command(
    name = "idfuse",
    version,
    about = "Identity-aware long-term track fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse tracker output with identifications into per-frame identities.
    Fuse {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        population: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a reference method.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        tracks: Option<PathBuf>,
        /// Ground truth; its first annotated frame seeds the identities.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Identifications (required for `reid`).
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score an assignment against ground truth.
    Evaluate {
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic scene.
    Simulate {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep identification counts on a synthetic scene.
    Sweep {
        /// Comma-separated identification counts.
        #[arg(long)]
        counts: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check forward-backward against exhaustive enumeration on a prefix.
    Verify {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Upper bound on the prefix length.
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    #[value(name = "first_frame")]
    FirstFrame,
    Reid,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Cumulative,
    Windowed,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| {
        anyhow!(idfuse::Error::Config(format!(
            "missing {key} (flag --{key} or config key {key})"
        )))
    })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = required(&cfg.out, "out")?.to_path_buf();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn override_station(cfg: &RunConfig, events: &mut [IdentificationEvent]) {
    if let Some(at) = cfg.station {
        for e in events {
            if let EventSource::Station(p) = &mut e.source {
                *p = at;
            }
        }
    }
}

fn sorted_rwids(events: &[IdentificationEvent]) -> Vec<Rwid> {
    let mut ids: Vec<Rwid> = events.iter().map(|e| e.rwid.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

fn read_tracks(path: &Path) -> Result<idfuse::TrackSet> {
    io::read_tracks(path).with_context(|| format!("reading tracks {}", path.display()))
}

fn read_events(path: &Path) -> Result<Vec<IdentificationEvent>> {
    io::read_events(path).with_context(|| format!("reading events {}", path.display()))
}

fn read_ground_truth(path: &Path) -> Result<idfuse::GroundTruth> {
    io::read_ground_truth(path).with_context(|| format!("reading ground truth {}", path.display()))
}

fn read_assignment(path: &Path) -> Result<idfuse::IdentityTrackSet> {
    io::read_assignment(path).with_context(|| format!("reading assignment {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse {
            tracks,
            events,
            epsilon,
            population,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.tracks = tracks.or(cfg.tracks);
            cfg.events = events.or(cfg.events);
            if let Some(e) = epsilon {
                cfg.smoothing.epsilon = e;
            }
            cfg.population = population.or(cfg.population);
            cfg.check()?;
            let ts = read_tracks(required(&cfg.tracks, "tracks")?)?;
            let mut ev = read_events(required(&cfg.events, "events")?)?;
            override_station(&cfg, &mut ev);
            let scene = cfg.scene_config(ts.total_frames(), &sorted_rwids(&ev));
            let fusion = FusionConfig {
                smoothing: cfg.smoothing,
                emission: cfg.emission,
            };
            let out = fuse(&ts, &ev, &scene, &fusion)?;
            let dir = out_dir(&cfg)?;
            io::write_assignment(&dir.join("assignment.csv"), &out.assignment)?;
            io::write_json(
                &dir.join("posterior_summary.json"),
                &out.summary(scene.population),
            )?;
            println!(
                "frames={} detections={} assigned={} rwids_modelled={}",
                ts.total_frames(),
                ts.counts().iter().sum::<usize>(),
                out.assignment.assigned_count(),
                out.tables.len()
            );
        }
        Command::Baseline {
            method,
            tracks,
            gt,
            events,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.tracks = tracks.or(cfg.tracks);
            cfg.gt = gt.or(cfg.gt);
            cfg.events = events.or(cfg.events);
            let ts = read_tracks(required(&cfg.tracks, "tracks")?)?;
            let gt = read_ground_truth(required(&cfg.gt, "gt")?)?;
            let base = first_frame_assign(&ts, &initial_positions(&gt))?;
            let assignment = match method {
                BaselineMethod::FirstFrame => base,
                BaselineMethod::Reid => {
                    let mut ev = read_events(required(&cfg.events, "events")?)?;
                    override_station(&cfg, &mut ev);
                    reid_swap(&base, &ev, &ts)?
                }
            };
            let dir = out_dir(&cfg)?;
            let name = match method {
                BaselineMethod::FirstFrame => "first_frame",
                BaselineMethod::Reid => "reid",
            };
            let path = dir.join(format!("assignment_{name}.csv"));
            io::write_assignment(&path, &assignment)?;
            println!(
                "method={name} frames={} assigned={}",
                assignment.total_frames(),
                assignment.assigned_count()
            );
        }
        Command::Evaluate {
            gt,
            pred,
            window,
            mode,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.gt = gt.or(cfg.gt);
            if let Some(w) = window {
                cfg.window = w;
            }
            if let Some(m) = mode {
                cfg.series_mode = match m {
                    Mode::Cumulative => SeriesMode::Cumulative,
                    Mode::Windowed => SeriesMode::Windowed,
                };
            }
            cfg.check()?;
            let gt = read_ground_truth(required(&cfg.gt, "gt")?)?;
            let pred = read_assignment(&pred)?;
            let report = evaluate(&gt, &pred);
            let series = f1_over_time(&gt, &pred, cfg.window, cfg.series_mode);
            let dir = out_dir(&cfg)?;
            io::write_json(&dir.join("scores.json"), &report)?;
            io::write_series(&dir.join("f1_over_time.csv"), &series)?;
            println!(
                "i_tp={} i_fp={} i_fn={} precision={:.6} recall={:.6} f1={:.6}",
                report.i_tp,
                report.i_fp,
                report.i_fn,
                report.micro_precision,
                report.micro_recall,
                report.micro_f1
            );
        }
        Command::Simulate { seed, common } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let scene = generate_scene(&cfg.sim)?;
            let dir = out_dir(&cfg)?;
            io::write_tracks(&dir.join("tracks.csv"), &scene.track_set)?;
            io::write_ground_truth(&dir.join("gt.csv"), &scene.ground_truth)?;
            io::write_events(&dir.join("events.jsonl"), &scene.events)?;
            // a config for running `fuse` on the generated files
            let run = RunConfig {
                tracks: Some("tracks.csv".into()),
                events: Some("events.jsonl".into()),
                gt: Some("gt.csv".into()),
                smoothing: cfg.smoothing,
                emission: cfg.emission,
                population: Some(cfg.sim.population),
                rwids: scene.rwids.clone(),
                sim: cfg.sim.clone(),
                ..RunConfig::default()
            };
            io::write_atomic(&dir.join("run.conf"), run.to_text().as_bytes())?;
            println!(
                "frames={} agents={} switches={} events={}",
                cfg.sim.total_frames,
                cfg.sim.population,
                scene.switches,
                scene.events.len()
            );
        }
        Command::Sweep {
            counts,
            repeats,
            noise,
            seed,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(c) = counts {
                cfg.set("counts", &c)?;
            }
            cfg.repeats = repeats.unwrap_or(cfg.repeats);
            cfg.noise = noise.unwrap_or(cfg.noise);
            cfg.sweep_seed = seed.unwrap_or(cfg.sweep_seed);
            cfg.check()?;
            let params = SweepParams {
                counts: &cfg.counts,
                noise_fraction: cfg.noise,
                repeats: cfg.repeats,
                seed: cfg.sweep_seed,
                smoothing: cfg.smoothing,
                emission: cfg.emission,
            };
            let table = sweep(&cfg.sim, &params)?;
            let dir = out_dir(&cfg)?;
            let summary_path = io::write_sweep(&dir.join("sweep.csv"), &table)?;
            info!("summary written to {}", summary_path.display());
            for row in table.summary() {
                println!(
                    "method={} count={} runs={} mean_f1={:.6} std_f1={:.6}",
                    row.method, row.count, row.runs, row.mean_f1, row.std_f1
                );
            }
        }
        Command::Verify {
            tracks,
            events,
            frames,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.tracks = tracks.or(cfg.tracks);
            cfg.events = events.or(cfg.events);
            cfg.check()?;
            let ts = read_tracks(required(&cfg.tracks, "tracks")?)?;
            let mut ev = match &cfg.events {
                Some(p) => read_events(p)?,
                None => Vec::new(),
            };
            override_station(&cfg, &mut ev);
            verify(&cfg, &ts, &ev, frames)?;
        }
    }
    Ok(())
}

/// Longest prefix whose state-path count stays within the oracle bound.
fn oracle_prefix(counts: &[usize], cap: usize) -> usize {
    let mut paths: u128 = 1;
    let mut len = 0;
    for &m in counts.iter().take(cap) {
        paths = paths.saturating_mul(m as u128 + 1);
        if paths > PATH_BOUND {
            break;
        }
        len += 1;
    }
    len
}

fn verify(
    cfg: &RunConfig,
    ts: &idfuse::TrackSet,
    events: &[IdentificationEvent],
    cap: Option<usize>,
) -> Result<()> {
    let len = oracle_prefix(&ts.counts(), cap.unwrap_or(usize::MAX));
    if len == 0 {
        bail!(idfuse::Error::BoundExceeded(
            "first frame alone exceeds the enumeration bound".into()
        ));
    }
    let prefix = ts.truncated(len);
    let events: Vec<IdentificationEvent> =
        events.iter().filter(|e| e.frame <= len).cloned().collect();
    let mut rwids = sorted_rwids(&events);
    if rwids.is_empty() {
        // still exercise the recursions with uniform evidence
        rwids.push("unidentified".into());
    }
    let transitions = transitions_from_tracks(&prefix, cfg.smoothing)?;
    let mut max_dev: f64 = 0.0;
    for r in &rwids {
        let em = build_emission_sequence(r, &events, &prefix, &cfg.emission)?;
        let table = infer(&transitions, &em).with_context(|| format!("rwid {r}"))?;
        let exact = brute_force_posterior(&transitions, &em)?;
        for t in 1..=len {
            for (a, b) in table.values(t).iter().zip(exact.row(t)) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
    }
    println!(
        "frames={len} rwids={} max_abs_deviation={max_dev:e}",
        rwids.len()
    );
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("IDFUSE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        idfuse::Error::Config(format!("IDFUSE_THREADS: expected a count, got {raw:?}"))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<idfuse::Error>() {
        return e.kind();
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return "io";
    }
    "error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = format!("{err:#}").replace(['\n', '\r'], " ");
            eprintln!("error kind={} msg={msg:?}", error_kind(&err));
            ExitCode::from(2)
        }
    }
}
