//! Python bindings. Matrices cross the boundary as lists of lists; boxes as
//! `(left, top, width, height)` tuples.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idfuse::baselines::{first_frame_assign, initial_positions, reid_swap};
use idfuse::emission::{build_emission_sequence, simulate_identifications, EmissionConfig};
use idfuse::fusion::FusionConfig;
use idfuse::simulator::SimConfig;
use idfuse::transition::SmoothingConfig;
use idfuse::{io, oracle, BBox, EventSource, Point, SceneConfig};

create_exception!(idfuse, IdfuseError, PyValueError);

fn err(e: idfuse::Error) -> PyErr {
    IdfuseError::new_err(format!("{}: {e}", e.kind()))
}

type BoxTuple = (f64, f64, f64, f64);

fn bbox(b: BoxTuple) -> BBox {
    BBox::new(b.0, b.1, b.2, b.3)
}

fn tuple(b: &BBox) -> BoxTuple {
    (b.left, b.top, b.width, b.height)
}

fn smoothing(epsilon: f64, lost_persistence: f64) -> PyResult<SmoothingConfig> {
    SmoothingConfig::new(epsilon, lost_persistence).map_err(err)
}

/// Per-frame detections of a base tracker.
#[pyclass(name = "TrackSet", module = "idfuse", from_py_object)]
#[derive(Clone)]
struct PyTrackSet(idfuse::TrackSet);

#[pymethods]
impl PyTrackSet {
    /// `rows`: `(frame, tracker_id or None, (left, top, width, height), confidence)`.
    #[new]
    #[pyo3(signature = (rows, total_frames=None))]
    fn new(
        rows: Vec<(usize, Option<u64>, BoxTuple, f64)>,
        total_frames: Option<usize>,
    ) -> PyResult<Self> {
        if rows.iter().any(|r| r.0 == 0) {
            return Err(IdfuseError::new_err("frames are 1-indexed"));
        }
        let max = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let total = total_frames.unwrap_or(max).max(max);
        let mut rows = rows;
        rows.sort_by_key(|r| r.0);
        Ok(PyTrackSet(idfuse::TrackSet::from_rows(
            total,
            rows.into_iter().map(|(t, id, b, c)| (t, id, bbox(b), c)),
        )))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        io::read_tracks(&path).map(PyTrackSet).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_tracks(&path, &self.0).map_err(err)
    }

    #[getter]
    fn total_frames(&self) -> usize {
        self.0.total_frames()
    }

    fn counts(&self) -> Vec<usize> {
        self.0.counts()
    }

    /// Detections at 1-indexed frame `t` as `(tracker_id, box, confidence)`.
    fn frame(&self, t: usize) -> PyResult<Vec<(Option<u64>, BoxTuple, f64)>> {
        if t == 0 || t > self.0.total_frames() {
            return Err(IdfuseError::new_err(format!(
                "frame {t} outside 1..={}",
                self.0.total_frames()
            )));
        }
        Ok(self
            .0
            .frame(t)
            .iter()
            .map(|d| (d.tracker_id, tuple(&d.bbox), d.confidence))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.0.total_frames()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrackSet(frames={}, detections={})",
            self.0.total_frames(),
            self.0.counts().iter().sum::<usize>()
        )
    }
}

/// Annotated identities and boxes on some frames.
#[pyclass(name = "GroundTruth", module = "idfuse", from_py_object)]
#[derive(Clone)]
struct PyGroundTruth(idfuse::GroundTruth);

#[pymethods]
impl PyGroundTruth {
    /// `rows`: `(frame, rwid, (left, top, width, height))`.
    #[new]
    fn new(rows: Vec<(usize, String, BoxTuple)>) -> Self {
        let mut gt = idfuse::GroundTruth::new();
        for (t, r, b) in rows {
            gt.insert(t, r, bbox(b));
        }
        PyGroundTruth(gt)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        io::read_ground_truth(&path).map(PyGroundTruth).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_ground_truth(&path, &self.0).map_err(err)
    }

    fn annotated_frames(&self) -> Vec<usize> {
        self.0.annotated_frames().collect()
    }

    fn frame(&self, t: usize) -> Option<Vec<(String, BoxTuple)>> {
        self.0.frame(t).map(|objs| {
            objs.iter()
                .map(|o| (o.rwid.clone(), tuple(&o.bbox)))
                .collect()
        })
    }

    fn rwids(&self) -> Vec<String> {
        self.0.rwids()
    }

    fn __repr__(&self) -> String {
        format!("GroundTruth(annotated_frames={})", self.0.len())
    }
}

/// A sporadic identification: a station read or an explicit probability row.
#[pyclass(name = "IdentificationEvent", module = "idfuse", from_py_object)]
#[derive(Clone)]
struct PyEvent(idfuse::IdentificationEvent);

#[pymethods]
impl PyEvent {
    #[staticmethod]
    fn station(frame: usize, rwid: String, x: f64, y: f64) -> Self {
        PyEvent(idfuse::IdentificationEvent::station(
            frame,
            rwid,
            Point::new(x, y),
        ))
    }

    #[staticmethod]
    fn row(frame: usize, rwid: String, probabilities: Vec<f64>) -> Self {
        PyEvent(idfuse::IdentificationEvent::row(frame, rwid, probabilities))
    }

    #[getter]
    fn frame(&self) -> usize {
        self.0.frame
    }

    #[getter]
    fn rwid(&self) -> String {
        self.0.rwid.clone()
    }

    #[getter]
    fn station_xy(&self) -> Option<(f64, f64)> {
        match &self.0.source {
            EventSource::Station(p) => Some((p.x, p.y)),
            EventSource::Row(_) => None,
        }
    }

    #[getter]
    fn probabilities(&self) -> Option<Vec<f64>> {
        match &self.0.source {
            EventSource::Row(r) => Some(r.clone()),
            EventSource::Station(_) => None,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "IdentificationEvent(frame={}, rwid={:?})",
            self.0.frame, self.0.rwid
        )
    }
}

fn unwrap_events(events: &[PyEvent]) -> Vec<idfuse::IdentificationEvent> {
    events.iter().map(|e| e.0.clone()).collect()
}

/// Frame-by-frame identity labels over every detection.
#[pyclass(name = "Assignment", module = "idfuse", from_py_object)]
#[derive(Clone)]
struct PyAssignment(idfuse::IdentityTrackSet);

#[pymethods]
impl PyAssignment {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        io::read_assignment(&path).map(PyAssignment).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_assignment(&path, &self.0).map_err(err)
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.as_str()
    }

    #[getter]
    fn total_frames(&self) -> usize {
        self.0.total_frames()
    }

    fn assigned_count(&self) -> usize {
        self.0.assigned_count()
    }

    /// `(local_index, rwid or None)` for each detection at frame `t`.
    fn frame(&self, t: usize) -> Vec<(usize, Option<String>)> {
        self.0
            .frame(t)
            .iter()
            .map(|e| (e.local_index, e.rwid.clone()))
            .collect()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Assignment(method={}, frames={}, assigned={})",
            self.0.method,
            self.0.total_frames(),
            self.0.assigned_count()
        )
    }
}

#[pyfunction]
fn read_events(path: PathBuf) -> PyResult<Vec<PyEvent>> {
    Ok(io::read_events(&path)
        .map_err(err)?
        .into_iter()
        .map(PyEvent)
        .collect())
}

#[pyfunction]
fn write_events(path: PathBuf, events: Vec<PyEvent>) -> PyResult<()> {
    io::write_events(&path, &unwrap_events(&events)).map_err(err)
}

/// Transition matrices into frames 2..T, LOST state last.
#[pyfunction]
#[pyo3(signature = (tracks, epsilon=1e-3, lost_persistence=0.5))]
fn transitions(
    tracks: &PyTrackSet,
    epsilon: f64,
    lost_persistence: f64,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let tr = idfuse::transitions_from_tracks(&tracks.0, smoothing(epsilon, lost_persistence)?)
        .map_err(err)?;
    Ok(tr
        .matrices()
        .iter()
        .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
        .collect())
}

/// Scaled forward-backward for one identity. Returns a dict with `alpha`,
/// `beta` and `values` (one row per frame, LOST last) and `log_evidence`.
#[pyfunction]
#[pyo3(signature = (tracks, events, rwid, epsilon=1e-3, lost_persistence=0.5, distance_floor=1.0, defer_window=5))]
#[allow(clippy::too_many_arguments)]
fn forward_backward<'py>(
    py: Python<'py>,
    tracks: &PyTrackSet,
    events: Vec<PyEvent>,
    rwid: &str,
    epsilon: f64,
    lost_persistence: f64,
    distance_floor: f64,
    defer_window: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let tr = idfuse::transitions_from_tracks(&tracks.0, smoothing(epsilon, lost_persistence)?)
        .map_err(err)?;
    let cfg = EmissionConfig {
        distance_floor,
        defer_window,
    };
    let em =
        build_emission_sequence(rwid, &unwrap_events(&events), &tracks.0, &cfg).map_err(err)?;
    let table = idfuse::infer(&tr, &em).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("alpha", table.alpha.to_vecs())?;
    d.set_item("beta", table.beta.to_vecs())?;
    d.set_item("values", table.values.to_vecs())?;
    d.set_item("log_evidence", table.log_evidence())?;
    Ok(d)
}

/// Exact marginals by path enumeration; small inputs only.
#[pyfunction]
#[pyo3(signature = (tracks, events, rwid, epsilon=1e-3, lost_persistence=0.5))]
fn brute_force_posterior(
    tracks: &PyTrackSet,
    events: Vec<PyEvent>,
    rwid: &str,
    epsilon: f64,
    lost_persistence: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let tr = idfuse::transitions_from_tracks(&tracks.0, smoothing(epsilon, lost_persistence)?)
        .map_err(err)?;
    let em = build_emission_sequence(
        rwid,
        &unwrap_events(&events),
        &tracks.0,
        &EmissionConfig::default(),
    )
    .map_err(err)?;
    Ok(oracle::brute_force_posterior(&tr, &em)
        .map_err(err)?
        .to_vecs())
}

fn matrix(values: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    if values.iter().any(|r| r.len() != cols) {
        return Err(IdfuseError::new_err("ragged matrix"));
    }
    Array2::from_shape_vec((rows, cols), values.into_iter().flatten().collect())
        .map_err(|e| IdfuseError::new_err(e.to_string()))
}

/// Maximum-weight assignment; returns `(row, column)` pairs sorted by row.
#[pyfunction]
fn hungarian_max(values: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize)>> {
    let m = matrix(values)?;
    Ok(idfuse::hungarian_max(m.view()).map_err(err)?.pairs)
}

#[pyfunction]
fn iou(a: BoxTuple, b: BoxTuple) -> f64 {
    idfuse::iou(&bbox(a), &bbox(b))
}

/// `(precision, recall, f1)` from identity-aware counts.
#[pyfunction]
fn micro_scores(i_tp: u64, i_fp: u64, i_fn: u64) -> (f64, f64, f64) {
    let s = idfuse::micro_scores(&idfuse::IdentityConfusion { i_tp, i_fp, i_fn });
    (s.precision, s.recall, s.f1)
}

#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    gt: &PyGroundTruth,
    assignment: &PyAssignment,
) -> PyResult<Bound<'py, PyDict>> {
    let r = idfuse::evaluate(&gt.0, &assignment.0);
    let d = PyDict::new(py);
    d.set_item("i_tp", r.i_tp)?;
    d.set_item("i_fp", r.i_fp)?;
    d.set_item("i_fn", r.i_fn)?;
    d.set_item("precision", r.micro_precision)?;
    d.set_item("recall", r.micro_recall)?;
    d.set_item("f1", r.micro_f1)?;
    Ok(d)
}

/// Fuses tracks with identifications. `rwids` is the identity catalog;
/// `population` defaults to its size.
#[pyfunction]
#[pyo3(signature = (tracks, events, rwids, population=None, epsilon=1e-3, lost_persistence=0.5, distance_floor=1.0, defer_window=5))]
#[allow(clippy::too_many_arguments)]
fn fuse(
    tracks: &PyTrackSet,
    events: Vec<PyEvent>,
    rwids: Vec<String>,
    population: Option<usize>,
    epsilon: f64,
    lost_persistence: f64,
    distance_floor: f64,
    defer_window: usize,
) -> PyResult<PyAssignment> {
    let mut scene = SceneConfig::new(tracks.0.total_frames(), rwids);
    if let Some(n) = population {
        scene.population = n;
    }
    let cfg = FusionConfig {
        smoothing: smoothing(epsilon, lost_persistence)?,
        emission: EmissionConfig {
            distance_floor,
            defer_window,
        },
    };
    let out = idfuse::fuse(&tracks.0, &unwrap_events(&events), &scene, &cfg).map_err(err)?;
    Ok(PyAssignment(out.assignment))
}

/// Identities fixed to tracker ids by nearest matching at frame 1, seeded
/// from the first annotated ground-truth frame.
#[pyfunction]
fn first_frame(tracks: &PyTrackSet, gt: &PyGroundTruth) -> PyResult<PyAssignment> {
    first_frame_assign(&tracks.0, &initial_positions(&gt.0))
        .map(PyAssignment)
        .map_err(err)
}

#[pyfunction]
fn reid(base: &PyAssignment, events: Vec<PyEvent>, tracks: &PyTrackSet) -> PyResult<PyAssignment> {
    reid_swap(&base.0, &unwrap_events(&events), &tracks.0)
        .map(PyAssignment)
        .map_err(err)
}

/// Synthetic pen scene. Returns `(ground_truth, tracks, feeder_events, rwids)`.
#[pyfunction]
#[pyo3(signature = (population=15, total_frames=15000, seed=0, switch_rate=0.05, visit_rate=2.0, dropout=0.0))]
fn simulate(
    population: usize,
    total_frames: usize,
    seed: u64,
    switch_rate: f64,
    visit_rate: f64,
    dropout: f64,
) -> PyResult<(PyGroundTruth, PyTrackSet, Vec<PyEvent>, Vec<String>)> {
    let cfg = SimConfig {
        population,
        total_frames,
        seed,
        switch_rate,
        visit_rate,
        detection_dropout: dropout,
        ..SimConfig::default()
    };
    let scene = idfuse::generate_scene(&cfg).map_err(err)?;
    Ok((
        PyGroundTruth(scene.ground_truth),
        PyTrackSet(scene.track_set),
        scene.events.into_iter().map(PyEvent).collect(),
        scene.rwids,
    ))
}

/// Artificial identifications drawn from ground truth: a `noise` fraction
/// carry uniform rows, the rest favour the true identity by distance.
#[pyfunction]
#[pyo3(signature = (gt, tracks, count, noise=0.25, seed=0))]
fn artificial_identifications(
    gt: &PyGroundTruth,
    tracks: &PyTrackSet,
    count: usize,
    noise: f64,
    seed: u64,
) -> PyResult<Vec<PyEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events =
        simulate_identifications(&gt.0, &tracks.0, count, noise, 1.0, &mut rng).map_err(err)?;
    Ok(events.into_iter().map(PyEvent).collect())
}

#[pymodule]
#[pyo3(name = "idfuse")]
fn idfuse_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IdfuseError", m.py().get_type::<IdfuseError>())?;
    m.add_class::<PyTrackSet>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PyEvent>()?;
    m.add_class::<PyAssignment>()?;
    m.add_function(wrap_pyfunction!(read_events, m)?)?;
    m.add_function(wrap_pyfunction!(write_events, m)?)?;
    m.add_function(wrap_pyfunction!(transitions, m)?)?;
    m.add_function(wrap_pyfunction!(forward_backward, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian_max, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(micro_scores, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(first_frame, m)?)?;
    m.add_function(wrap_pyfunction!(reid, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(artificial_identifications, m)?)?;
    Ok(())
}
