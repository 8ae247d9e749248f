use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idfuse::emission::{simulate_identifications, EmissionConfig};
use idfuse::fusion::{fuse_with_transitions, observed_rwids};
use idfuse::io;
use idfuse::metrics::evaluate;
use idfuse::simulator::{generate_scene, SimConfig};
use idfuse::transition::{transitions_from_tracks, SmoothingConfig};
use idfuse::{BBox, GroundTruth, IdentificationEvent, Point, TrackSet};

fn idfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = idfuse(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .unwrap_or_else(|| panic!("{key} missing from {line:?}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn three_tracks(frames: usize) -> TrackSet {
    let rows = (1..=frames).flat_map(|t| {
        (0..3).map(move |k| {
            let c = Point::new(30.0 * k as f64 + t as f64, 10.0);
            (t, Some(k as u64 + 1), BBox::centered(c, 8.0, 8.0), 0.9)
        })
    });
    TrackSet::from_rows(frames, rows)
}

#[test]
fn fuse_without_events_is_all_unassigned() {
    let dir = tempfile::tempdir().unwrap();
    let tracks = dir.path().join("tracks.csv");
    let events = dir.path().join("events.jsonl");
    io::write_tracks(&tracks, &three_tracks(20)).unwrap();
    fs::write(&events, "").unwrap();
    let stdout = ok(&[
        "fuse",
        "--tracks",
        s(&tracks),
        "--events",
        s(&events),
        "--set",
        "rwids=4801,4802,4803",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(field(&stdout, "assigned"), "0");
    assert_eq!(field(&stdout, "rwids_modelled"), "0");
    let a = io::read_assignment(&dir.path().join("assignment.csv")).unwrap();
    assert_eq!(a.total_frames(), 20);
    assert!(a.frames().iter().flatten().all(|e| e.rwid.is_none()));
    assert!(dir.path().join("posterior_summary.json").exists());
}

#[test]
fn evaluate_identical_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let mut gt = GroundTruth::new();
    for t in 1..=10 {
        for k in 0..3 {
            let b = BBox::new(40.0 * k as f64, t as f64, 20.0, 20.0);
            gt.insert(t, format!("48{k:02}"), b);
        }
    }
    let gt_path = dir.path().join("gt.csv");
    io::write_ground_truth(&gt_path, &gt).unwrap();
    // a ground-truth file is also a valid assignment file
    let stdout = ok(&[
        "evaluate",
        "--gt",
        s(&gt_path),
        "--pred",
        s(&gt_path),
        "--window",
        "4",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(field(&stdout, "f1").parse::<f64>().unwrap(), 1.0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scores.json")).unwrap()).unwrap();
    assert_eq!(report["micro_f1"], 1.0);
    assert_eq!(report["i_tp"], 30);
    let series = fs::read_to_string(dir.path().join("f1_over_time.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("frame,precision,recall,f1"));
    assert_eq!(series.lines().count(), 1 + 3);
}

#[test]
fn verify_small_instance_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let mut ts = three_tracks(6);
    // break one track mid-way so the transitions are not all continuations
    let mut frames = ts.frames().to_vec();
    frames[3][1].tracker_id = Some(9);
    ts = TrackSet::new(frames);
    let tracks = dir.path().join("tracks.csv");
    let events = dir.path().join("events.jsonl");
    io::write_tracks(&tracks, &ts).unwrap();
    io::write_events(
        &events,
        &[
            IdentificationEvent::station(2, "a", Point::new(32.0, 10.0)),
            IdentificationEvent::row(5, "b", vec![0.2, 0.5, 0.3]),
            IdentificationEvent::station(6, "a", Point::new(0.0, 0.0)),
        ],
    )
    .unwrap();
    let stdout = ok(&["verify", "--tracks", s(&tracks), "--events", s(&events)]);
    assert_eq!(field(&stdout, "frames"), "6");
    assert_eq!(field(&stdout, "rwids"), "2");
    let dev: f64 = field(&stdout, "max_abs_deviation").parse().unwrap();
    assert!(dev < 1e-9, "{dev}");
}

#[test]
fn malformed_line_fails_with_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let tracks = dir.path().join("tracks.csv");
    fs::write(&tracks, "1,1,0,0,5,5,1,-1,-1,-1\n2,1,0,0,5\n").unwrap();
    let out = idfuse(&["verify", "--tracks", s(&tracks)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("error kind=parse "), "{err}");
    assert!(lines[0].contains(":2:"), "{err}");
}

#[test]
fn missing_input_reports_config_error() {
    let out = idfuse(&["fuse", "--out", "/nonexistent"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error kind=config "), "{err}");
}

#[test]
fn bad_thread_count_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_idfuse"))
        .args(["verify", "--tracks", "x"])
        .env("IDFUSE_THREADS", "many")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("IDFUSE_THREADS"));
}

#[test]
fn reid_without_events_matches_first_frame_bytes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--set",
        "sim_frames=300",
        "--set",
        "sim_population=4",
        "--seed",
        "5",
        "--out",
        s(dir.path()),
    ]);
    let conf = dir.path().join("run.conf");
    let empty = dir.path().join("none.jsonl");
    fs::write(&empty, "").unwrap();
    ok(&[
        "baseline",
        "--method",
        "first_frame",
        "--config",
        s(&conf),
        "--out",
        s(dir.path()),
    ]);
    ok(&[
        "baseline",
        "--method",
        "reid",
        "--config",
        s(&conf),
        "--events",
        s(&empty),
        "--out",
        s(dir.path()),
    ]);
    let first = fs::read(dir.path().join("assignment_first_frame.csv")).unwrap();
    let reid = fs::read(dir.path().join("assignment_reid.csv")).unwrap();
    assert_eq!(first, reid);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--set",
            "sim_frames=200",
            "--seed",
            "11",
            "--out",
            s(d.path()),
        ]);
    }
    for f in ["tracks.csv", "gt.csv", "events.jsonl", "run.conf"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn fuse_then_evaluate_equals_library_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig {
        population: 6,
        total_frames: 800,
        seed: 21,
        ..SimConfig::default()
    };
    let scene = generate_scene(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let events = simulate_identifications(
        &scene.ground_truth,
        &scene.track_set,
        12,
        0.25,
        1.0,
        &mut rng,
    )
    .unwrap();

    let smoothing = SmoothingConfig::default();
    let transitions = transitions_from_tracks(&scene.track_set, smoothing).unwrap();
    let rwids = observed_rwids(&scene.rwids, &events);
    let expected = fuse_with_transitions(
        &transitions,
        &scene.track_set,
        &events,
        &rwids,
        6,
        &EmissionConfig::default(),
    )
    .unwrap();
    let expected = evaluate(&scene.ground_truth, &expected.assignment);

    let p = |f: &str| dir.path().join(f);
    io::write_tracks(&p("tracks.csv"), &scene.track_set).unwrap();
    io::write_ground_truth(&p("gt.csv"), &scene.ground_truth).unwrap();
    io::write_events(&p("events.jsonl"), &events).unwrap();
    ok(&[
        "fuse",
        "--tracks",
        s(&p("tracks.csv")),
        "--events",
        s(&p("events.jsonl")),
        "--set",
        &format!("rwids={}", scene.rwids.join(",")),
        "--population",
        "6",
        "--out",
        s(dir.path()),
    ]);
    ok(&[
        "evaluate",
        "--gt",
        s(&p("gt.csv")),
        "--pred",
        s(&p("assignment.csv")),
        "--out",
        s(dir.path()),
    ]);
    let got: idfuse::ScoreReport =
        serde_json::from_str(&fs::read_to_string(p("scores.json")).unwrap()).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "sweep",
        "--set",
        "sim_frames=300",
        "--set",
        "sim_population=4",
        "--counts",
        "0,4",
        "--repeats",
        "2",
        "--noise",
        "0.25",
        "--seed",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(stdout.lines().count(), 6);
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(
        table.lines().next(),
        Some("method,count,repeat,i_tp,i_fp,i_fn,precision,recall,f1")
    );
    assert_eq!(table.lines().count(), 1 + 3 * 2 * 2);
    assert!(dir.path().join("sweep_summary.csv").exists());
}
