//! File formats: CSV tables and JSON descriptors.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anatomy::{Segment, SwayTrajectory};
use crate::camera::{CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::features::FeatureObservation;
use crate::metrics::TplResult;
use crate::pose::{FitReport, FrameStatus, KinematicParams, PoseTrack, TrackedFrame};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Intrinsics JSON with the calibration residual alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    #[serde(flatten)]
    pub intrinsics: CameraIntrinsics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_px: Option<f64>,
}

pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<CameraIntrinsics> {
    let path = path.as_ref();
    let f: IntrinsicsFile = read_json(path)?;
    f.intrinsics
        .validate()
        .map_err(|e| Error::format(path, e))?;
    Ok(f.intrinsics)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    frame: usize,
    model_index: Option<usize>,
    u: f64,
    v: f64,
    score: f64,
}

/// `frame,model_index,u,v,score`; an empty model index marks an unmatched detection.
pub fn write_features(path: impl AsRef<Path>, frames: &[Vec<FeatureObservation>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for (k, frame) in frames.iter().enumerate() {
        for o in frame {
            w.serialize(FeatureRow {
                frame: k,
                model_index: o.model_index,
                u: o.position.x,
                v: o.position.y,
                score: o.score,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-frame observations; frames without rows are empty up to the largest frame index.
pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<Vec<FeatureObservation>>> {
    let path = path.as_ref();
    let mut frames: Vec<Vec<FeatureObservation>> = Vec::new();
    for row in csv_reader(path)?.deserialize::<FeatureRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if !(row.u.is_finite() && row.v.is_finite()) {
            return Err(Error::format(path, format!("non-finite position in frame {}", row.frame)));
        }
        if frames.len() <= row.frame {
            frames.resize(row.frame + 1, Vec::new());
        }
        frames[row.frame].push(FeatureObservation {
            position: PixelPoint::new(row.u, row.v),
            score: row.score,
            model_index: row.model_index,
        });
    }
    Ok(frames)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    frame: usize,
    t_sec: f64,
    status: FrameStatus,
    theta1: Option<f64>,
    theta2: Option<f64>,
    theta3: Option<f64>,
    theta4: Option<f64>,
    theta5: Option<f64>,
    theta6: Option<f64>,
    rms_px: Option<f64>,
    iters: Option<usize>,
}

/// `frame,t_sec,status,theta1..theta6,rms_px,iters`; gap rows leave the numeric fields empty.
pub fn write_pose_track(path: impl AsRef<Path>, track: &PoseTrack) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for (k, f) in track.frames().iter().enumerate() {
        let th = f.report.as_ref().map(|r| *r.theta.as_array());
        let get = |i: usize| th.map(|t| t[i]);
        w.serialize(PoseRow {
            frame: k,
            t_sec: track.time(k),
            status: f.status,
            theta1: get(0),
            theta2: get(1),
            theta3: get(2),
            theta4: get(3),
            theta5: get(4),
            theta6: get(5),
            rms_px: f.report.as_ref().map(|r| r.rms_residual_px),
            iters: f.report.as_ref().map(|r| r.iterations),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Poses only; fit diagnostics other than RMS and iterations are not stored.
pub fn write_pose_sequence(path: impl AsRef<Path>, rate_hz: f64, thetas: &[KinematicParams]) -> Result<()> {
    let frames = thetas
        .iter()
        .map(|t| {
            TrackedFrame::fitted(FitReport {
                theta: *t,
                rms_residual_px: 0.0,
                iterations: 0,
                converged: true,
                degenerate: false,
                covariance_diagonal: [0.0; 6],
                cost_history: Vec::new(),
            })
        })
        .collect();
    write_pose_track(path, &PoseTrack::new(rate_hz, frames)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t_sec: f64,
    segment: Segment,
    #[serde(rename = "AP_mm")]
    ap: Option<f64>,
    #[serde(rename = "ML_mm")]
    ml: Option<f64>,
    #[serde(rename = "SI_mm")]
    si: Option<f64>,
    valid: u8,
}

/// `t_sec,segment,AP_mm,ML_mm,SI_mm,valid`, one block per trajectory.
pub fn write_trajectories(path: impl AsRef<Path>, trajectories: &[&SwayTrajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for traj in trajectories {
        for (k, (s, v)) in traj.samples().iter().zip(traj.valid()).enumerate() {
            let val = |x: f64| if *v { Some(x) } else { None };
            w.serialize(TrajectoryRow {
                t_sec: traj.time(k),
                segment: traj.segment(),
                ap: val(s.x),
                ml: val(s.y),
                si: val(s.z),
                valid: u8::from(*v),
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trajectories by segment; the sample rate is recovered from the timestamps.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<SwayTrajectory>> {
    let path = path.as_ref();
    let mut by_segment: BTreeMap<String, (Segment, Vec<TrajectoryRow>)> = BTreeMap::new();
    for row in csv_reader(path)?.deserialize::<TrajectoryRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        by_segment
            .entry(row.segment.to_string())
            .or_insert_with(|| (row.segment, Vec::new()))
            .1
            .push(row);
    }
    let mut out = Vec::new();
    for (_, (segment, rows)) in by_segment {
        if rows.len() < 2 {
            return Err(Error::format(path, format!("{segment} trajectory needs at least 2 rows")));
        }
        let span = rows[rows.len() - 1].t_sec - rows[0].t_sec;
        let rate = (rows.len() - 1) as f64 / span;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::format(path, format!("{segment} timestamps are not increasing")));
        }
        for (k, r) in rows.iter().enumerate() {
            let expect = rows[0].t_sec + k as f64 / rate;
            if (r.t_sec - expect).abs() > 1e-3 / rate.max(1.0) + 1e-6 {
                return Err(Error::format(path, format!("{segment} timebase is not uniform at row {k}")));
            }
        }
        let mut samples = Vec::with_capacity(rows.len());
        let mut valid = Vec::with_capacity(rows.len());
        for r in &rows {
            match (r.valid, r.ap, r.ml, r.si) {
                (1, Some(a), Some(m), Some(s)) => {
                    samples.push(Vector3::new(a, m, s));
                    valid.push(true);
                }
                (0, ..) => {
                    samples.push(Vector3::repeat(f64::NAN));
                    valid.push(false);
                }
                _ => return Err(Error::format(path, format!("bad {segment} sample at t={}", r.t_sec))),
            }
        }
        out.push(
            SwayTrajectory::with_start(rate, rows[0].t_sec, segment, samples, valid).map_err(|e| Error::format(path, e))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TplRow {
    segment: Segment,
    direction: String,
    bin: String,
    tpl_mm: f64,
}

/// `segment,direction,bin,tpl_mm`.
pub fn write_tpl(path: impl AsRef<Path>, rows: &[TplResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(TplRow {
            segment: r.segment,
            direction: r.direction.to_string(),
            bin: r.bin.clone(),
            tpl_mm: r.value_mm,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tpl(path: impl AsRef<Path>) -> Result<Vec<TplResult>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for row in csv_reader(path)?.deserialize::<TplRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        out.push(TplResult {
            segment: row.segment,
            direction: row.direction.parse().map_err(|e| Error::format(path, e))?,
            bin: row.bin,
            value_mm: row.tpl_mm,
        });
    }
    Ok(out)
}

/// Generic CSV writer for serializable rows.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
