//! File formats.
//!
//! Tracks, ground truth and assignments use MOT-challenge CSV lines
//! `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z`. In tracks a
//! negative id means "no tracker id"; in ground truth the id is the
//! identity label; assignments put the identity label (or `-1`) in the id
//! column and append `assigned|unassigned`. A leading `# frames=T` comment
//! records trailing empty frames. Identifications are JSON lines.
//!
//! Every writer replaces its target atomically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SeriesPoint;
use crate::simulator::SweepTable;
use crate::types::{
    BBox, EventSource, GroundTruth, IdentificationEvent, IdentityEntry, IdentityTrackSet, Method,
    Point, Rwid, TrackSet,
};
use crate::validate::ROW_SUM_TOLERANCE;

/// Writes `contents` to a temporary file beside `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Lines<'a> {
    path: &'a Path,
    header: BTreeMap<String, String>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl Lines<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn header_usize(&self, key: &str) -> Result<Option<usize>> {
        self.header
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| self.err(1, format!("bad {key}={v:?} in header")))
            })
            .transpose()
    }
}

/// Splits CSV text into trimmed fields; `# key=value ...` comments fill the
/// header map and other comments are ignored.
fn split_csv<'a>(path: &'a Path, text: &'a str) -> Lines<'a> {
    let mut header = BTreeMap::new();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        rows.push((n + 1, line.split(',').map(str::trim).collect()));
    }
    Lines { path, header, rows }
}

struct MotRow<'a> {
    frame: usize,
    id: &'a str,
    bbox: BBox,
    confidence: f64,
}

fn mot_row<'a>(lines: &Lines<'_>, line: usize, fields: &[&'a str]) -> Result<MotRow<'a>> {
    if fields.len() < 7 {
        return Err(lines.err(
            line,
            format!(
                "expected at least 7 comma-separated fields, found {}",
                fields.len()
            ),
        ));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| lines.err(line, format!("{name}: cannot parse {:?}", fields[i])))
    };
    let frame = fields[0]
        .parse::<usize>()
        .ok()
        .filter(|&f| f >= 1)
        .ok_or_else(|| {
            lines.err(
                line,
                format!("frame: expected a positive integer, got {:?}", fields[0]),
            )
        })?;
    Ok(MotRow {
        frame,
        id: fields[1],
        bbox: BBox::new(
            num(2, "bb_left")?,
            num(3, "bb_top")?,
            num(4, "bb_width")?,
            num(5, "bb_height")?,
        ),
        confidence: num(6, "conf")?,
    })
}

/// Total frame count from the header and the largest frame seen; warns about
/// gaps, which become empty frames.
fn frame_span(lines: &Lines<'_>, frames_seen: &[usize]) -> Result<usize> {
    let max_seen = frames_seen.iter().copied().max().unwrap_or(0);
    let total = lines.header_usize("frames")?.unwrap_or(0).max(max_seen);
    let mut present = vec![false; total + 1];
    for &f in frames_seen {
        present[f] = true;
    }
    let missing = present[1..=max_seen].iter().filter(|p| !**p).count();
    if missing > 0 {
        warn!(
            "{}: {missing} frame(s) up to {max_seen} have no lines; treated as empty",
            lines.path.display()
        );
    }
    Ok(total)
}

pub fn parse_tracks(path: &Path, text: &str) -> Result<TrackSet> {
    let lines = split_csv(path, text);
    let mut rows = Vec::with_capacity(lines.rows.len());
    for (n, fields) in &lines.rows {
        let r = mot_row(&lines, *n, fields)?;
        let id = match r.id.parse::<i64>() {
            Ok(v) if v < 0 => None,
            Ok(v) => Some(v as u64),
            Err(_) => return Err(lines.err(*n, format!("id: expected an integer, got {:?}", r.id))),
        };
        rows.push((r.frame, id, r.bbox, r.confidence));
    }
    let seen: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let total = frame_span(&lines, &seen)?;
    // stable sort keeps the file order within a frame
    rows.sort_by_key(|r| r.0);
    Ok(TrackSet::from_rows(total, rows))
}

pub fn read_tracks(path: &Path) -> Result<TrackSet> {
    parse_tracks(path, &fs::read_to_string(path)?)
}

fn bbox_fields(s: &mut String, b: &BBox) {
    let _ = write!(s, "{},{},{},{}", b.left, b.top, b.width, b.height);
}

pub fn format_tracks(track_set: &TrackSet) -> String {
    let mut s = format!("# frames={}\n", track_set.total_frames());
    for d in track_set.frames().iter().flatten() {
        let id = d.tracker_id.map_or(-1, |v| v as i64);
        let _ = write!(s, "{},{id},", d.frame);
        bbox_fields(&mut s, &d.bbox);
        let _ = writeln!(s, ",{},-1,-1,-1", d.confidence);
    }
    s
}

pub fn write_tracks(path: &Path, track_set: &TrackSet) -> Result<()> {
    write_atomic(path, format_tracks(track_set).as_bytes())
}

pub fn parse_ground_truth(path: &Path, text: &str) -> Result<GroundTruth> {
    let lines = split_csv(path, text);
    let mut gt = GroundTruth::new();
    if let Some(empty) = lines.header.get("empty") {
        for f in empty.split(',').filter(|f| !f.is_empty()) {
            let t = f
                .parse::<usize>()
                .map_err(|_| lines.err(1, format!("bad empty frame {f:?} in header")))?;
            gt.annotate_empty(t);
        }
    }
    for (n, fields) in &lines.rows {
        let r = mot_row(&lines, *n, fields)?;
        if r.id.is_empty() {
            return Err(lines.err(*n, "empty identity label"));
        }
        gt.insert(r.frame, r.id, r.bbox);
    }
    Ok(gt)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    parse_ground_truth(path, &fs::read_to_string(path)?)
}

pub fn format_ground_truth(gt: &GroundTruth) -> String {
    let empty: Vec<String> = gt
        .iter()
        .filter(|(_, objs)| objs.is_empty())
        .map(|(t, _)| t.to_string())
        .collect();
    let mut s = String::new();
    if !empty.is_empty() {
        let _ = writeln!(s, "# empty={}", empty.join(","));
    }
    for (t, objs) in gt.iter() {
        for o in objs {
            let _ = write!(s, "{t},{},", o.rwid);
            bbox_fields(&mut s, &o.bbox);
            s.push_str(",1,-1,-1,-1\n");
        }
    }
    s
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    write_atomic(path, format_ground_truth(gt).as_bytes())
}

pub fn format_assignment(assignment: &IdentityTrackSet) -> String {
    let mut s = format!(
        "# method={} frames={}\n",
        assignment.method,
        assignment.total_frames()
    );
    for (i, entries) in assignment.frames().iter().enumerate() {
        for e in entries {
            let (id, status) = match &e.rwid {
                Some(r) => (r.as_str(), "assigned"),
                None => ("-1", "unassigned"),
            };
            let _ = write!(s, "{},{id},", i + 1);
            bbox_fields(&mut s, &e.bbox);
            let _ = writeln!(s, ",{},-1,-1,-1,{status}", e.confidence);
        }
    }
    s
}

pub fn write_assignment(path: &Path, assignment: &IdentityTrackSet) -> Result<()> {
    write_atomic(path, format_assignment(assignment).as_bytes())
}

pub fn parse_assignment(path: &Path, text: &str) -> Result<IdentityTrackSet> {
    let lines = split_csv(path, text);
    let method = match lines.header.get("method") {
        Some(m) => m
            .parse::<Method>()
            .map_err(|e| lines.err(1, e.to_string()))?,
        None => Method::Hmm,
    };
    let mut rows = Vec::with_capacity(lines.rows.len());
    for (n, fields) in &lines.rows {
        let r = mot_row(&lines, *n, fields)?;
        let status = fields.get(10).copied();
        let rwid = match (r.id, status) {
            ("-1", None | Some("unassigned")) => None,
            (id, None | Some("assigned")) if id != "-1" && !id.is_empty() => Some(id.to_string()),
            _ => {
                return Err(lines.err(
                    *n,
                    format!(
                        "id {:?} disagrees with status {:?}",
                        r.id,
                        status.unwrap_or("")
                    ),
                ))
            }
        };
        rows.push((r.frame, r.bbox, r.confidence, rwid));
    }
    let seen: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let total = frame_span(&lines, &seen)?;
    rows.sort_by_key(|r| r.0);
    let mut frames: Vec<Vec<IdentityEntry>> = vec![Vec::new(); total];
    for (frame, bbox, confidence, rwid) in rows {
        let f = &mut frames[frame - 1];
        f.push(IdentityEntry {
            local_index: f.len(),
            bbox,
            confidence,
            rwid,
        });
    }
    Ok(IdentityTrackSet::new(method, frames))
}

pub fn read_assignment(path: &Path) -> Result<IdentityTrackSet> {
    parse_assignment(path, &fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RwidField {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    frame: usize,
    rwid: RwidField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    station: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    row: Option<Vec<f64>>,
}

fn parse_event(line: &str) -> std::result::Result<IdentificationEvent, String> {
    let raw: EventLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.frame == 0 {
        return Err("frame must be at least 1".into());
    }
    let rwid: Rwid = match raw.rwid {
        RwidField::Text(s) => s,
        RwidField::Number(n) => n.to_string(),
    };
    let source = match (raw.station, raw.row) {
        (Some(at), None) => EventSource::Station(at),
        (None, Some(row)) => {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err("row entries must be finite and non-negative".into());
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(format!("row sums to {sum}, expected 1"));
            }
            EventSource::Row(row)
        }
        (Some(_), Some(_)) => return Err("both station and row given; expected exactly one".into()),
        (None, None) => return Err("neither station nor row given; expected exactly one".into()),
    };
    Ok(IdentificationEvent {
        frame: raw.frame,
        rwid,
        source,
    })
}

pub fn parse_events(path: &Path, text: &str) -> Result<Vec<IdentificationEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            parse_event(l).map_err(|msg| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            })
        })
        .collect()
}

pub fn read_events(path: &Path) -> Result<Vec<IdentificationEvent>> {
    parse_events(path, &fs::read_to_string(path)?)
}

pub fn format_events(events: &[IdentificationEvent]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        let (station, row) = match &e.source {
            EventSource::Station(p) => (Some(*p), None),
            EventSource::Row(r) => (None, Some(r.clone())),
        };
        let line = EventLine {
            frame: e.frame,
            rwid: RwidField::Text(e.rwid.clone()),
            station,
            row,
        };
        s.push_str(&serde_json::to_string(&line)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_events(path: &Path, events: &[IdentificationEvent]) -> Result<()> {
    write_atomic(path, format_events(events)?.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn format_series(series: &[SeriesPoint]) -> String {
    let mut s = String::from("frame,precision,recall,f1\n");
    for p in series {
        let _ = writeln!(s, "{},{},{},{}", p.frame, p.precision, p.recall, p.f1);
    }
    s
}

pub fn write_series(path: &Path, series: &[SeriesPoint]) -> Result<()> {
    write_atomic(path, format_series(series).as_bytes())
}

pub fn format_sweep(table: &SweepTable) -> String {
    let mut s = String::from("method,count,repeat,i_tp,i_fp,i_fn,precision,recall,f1\n");
    for r in &table.records {
        let c = &r.confusion;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.count,
            r.repeat,
            c.i_tp,
            c.i_fp,
            c.i_fn,
            r.scores.precision,
            r.scores.recall,
            r.scores.f1
        );
    }
    s
}

pub fn format_sweep_summary(table: &SweepTable) -> String {
    let mut s = String::from("method,count,runs,mean_f1,std_f1\n");
    for r in table.summary() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method, r.count, r.runs, r.mean_f1, r.std_f1
        );
    }
    s
}

/// Writes the per-run table to `path` and the per-point summary next to it
/// with a `_summary` suffix; returns the summary path.
pub fn write_sweep(path: &Path, table: &SweepTable) -> Result<PathBuf> {
    write_atomic(path, format_sweep(table).as_bytes())?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let summary = path.with_file_name(format!("{stem}_summary.csv"));
    write_atomic(&summary, format_sweep_summary(table).as_bytes())?;
    Ok(summary)
}
