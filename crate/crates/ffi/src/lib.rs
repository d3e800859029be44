//! C ABI over `swaykin`.
//!
//! Every entry point returns a [`SwkStatus`]; on failure a message is kept per
//! thread and can be read with [`swk_last_error_message`]. Panics never cross
//! the boundary. Trackers are opaque handles created with [`swk_tracker_new`]
//! and released with [`swk_tracker_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use swaykin::anatomy::{savitzky_golay, Axis, Segment, SwaySample, SwayTrajectory};
use swaykin::camera::{project_distorted, CameraIntrinsics, PixelPoint, WorldPoint};
use swaykin::features::FeatureObservation;
use swaykin::metrics::{bland_altman, cohens_d, total_path_length, Direction, TimeBin};
use swaykin::pipeline::undistort_observations;
use swaykin::pose::{fit_pose, initialize_first_frame, FitConfig, KinematicParams};
use swaykin::target::{virtual_point, GeometricTargetModel};
use swaykin::Error;

/// Result of every fallible call; anything but `Ok` sets the thread's last error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientCorrespondence = 3,
    BehindCamera = 4,
    Numerical = 5,
    NoEstimate = 6,
    Io = 7,
    Panic = 8,
}

/// Path-length direction: single axes or planar combinations.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwkDirection {
    Ap = 0,
    Ml = 1,
    Si = 2,
    Apml = 3,
    Apsi = 4,
    Mlsi = 5,
}

/// Pinhole intrinsics in pixels with two radial coefficients.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwkCamera {
    pub fx: f64,
    pub fy: f64,
    pub s: f64,
    pub x0: f64,
    pub y0: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Bland-Altman agreement of `b` against `a`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SwkAgreement {
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub sd: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Frame-to-frame pose tracker for one target.
pub struct SwkTracker {
    model: GeometricTargetModel,
    camera: CameraIntrinsics,
    fit: FitConfig,
    last: Option<KinematicParams>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SwkStatus {
    match e {
        Error::InsufficientCorrespondence { .. } | Error::TooFewPoints { .. } => SwkStatus::InsufficientCorrespondence,
        Error::BehindCamera { .. } | Error::FeatureBehindCamera { .. } => SwkStatus::BehindCamera,
        Error::NoFittableFrame => SwkStatus::NoEstimate,
        Error::Io { .. } | Error::Format { .. } => SwkStatus::Io,
        Error::InvalidParameter(_)
        | Error::InvalidModel(_)
        | Error::AmbiguousTarget { .. }
        | Error::LengthMismatch { .. }
        | Error::SeriesTooShort { .. } => SwkStatus::InvalidArgument,
        _ => SwkStatus::Numerical,
    }
}

enum Failure {
    Status(SwkStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(SwkStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Status(SwkStatus::InvalidArgument, message.into())
}

/// Runs `f`, converting errors and panics into a status plus a thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwkStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => {
            set_last_error(m);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {m}"));
            SwkStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn theta_from(p: *const f64) -> Result<KinematicParams, Failure> {
    Ok(KinematicParams::new(*slice(p, 6, "theta")?.first_chunk::<6>().expect("six values"))?)
}

fn camera_from(c: &SwkCamera) -> Result<CameraIntrinsics, Failure> {
    Ok(CameraIntrinsics::new(c.fx, c.fy, c.s, c.x0, c.y0, c.k1, c.k2)?)
}

fn direction_from(d: SwkDirection) -> Direction {
    match d {
        SwkDirection::Ap => Direction::AP,
        SwkDirection::Ml => Direction::ML,
        SwkDirection::Si => Direction::SI,
        SwkDirection::Apml => Direction::APML,
        SwkDirection::Apsi => Direction::APSI,
        SwkDirection::Mlsi => Direction::MLSI,
    }
}

/// Message for the most recent failure on this thread, or null.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn swk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Projects a target-frame point through pose `theta` (`[θ1, θ2, θ3, θ4, θ5, θ6]`,
/// radians and millimetres) into distorted pixel coordinates.
///
/// # Safety
/// `theta` must point to 6 doubles, `point` to 3 and `out_uv` to 2 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_project(
    camera: *const SwkCamera,
    theta: *const f64,
    point: *const f64,
    out_uv: *mut f64,
) -> SwkStatus {
    guard(|| {
        let k = camera_from(camera.as_ref().ok_or_else(|| null("camera"))?)?;
        let theta = theta_from(theta)?;
        let g = slice(point, 3, "point")?;
        if out_uv.is_null() {
            return Err(null("out_uv"));
        }
        let p = project_distorted(&k, &theta.to_transform(), &WorldPoint::new(g[0], g[1], g[2]))?;
        *out_uv = p.x;
        *out_uv.add(1) = p.y;
        Ok(())
    })
}

/// Creates a tracker for a built-in model name (`"shoulder"`, `"lumbar"`) or a
/// target JSON path.
///
/// `init_theta` may be null; the first frame is then initialized from its own
/// observations.
///
/// # Safety
/// `model` must be a NUL-terminated string; `init_theta` null or 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_tracker_new(
    camera: *const SwkCamera,
    model: *const c_char,
    init_theta: *const f64,
    out_tracker: *mut *mut SwkTracker,
) -> SwkStatus {
    guard(|| {
        let out_tracker = out(out_tracker, "out_tracker")?;
        *out_tracker = ptr::null_mut();
        let camera = camera_from(camera.as_ref().ok_or_else(|| null("camera"))?)?;
        if model.is_null() {
            return Err(null("model"));
        }
        let name = CStr::from_ptr(model).to_str().map_err(|_| invalid("model name is not UTF-8"))?;
        let model = GeometricTargetModel::resolve(name, None)?;
        let last = if init_theta.is_null() { None } else { Some(theta_from(init_theta)?) };
        *out_tracker = Box::into_raw(Box::new(SwkTracker {
            model,
            camera,
            fit: FitConfig::default(),
            last,
        }));
        Ok(())
    })
}

/// Releases a tracker; null is ignored.
///
/// # Safety
/// `tracker` must come from [`swk_tracker_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn swk_tracker_free(tracker: *mut SwkTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Fits one frame of labeled observations, warm-started from the last fitted pose.
///
/// `uv` holds `n` raw pixel pairs and `model_index` the matching model feature
/// for each. On failure the tracker keeps its previous pose, so the next frame
/// warm-starts from it. `out_rms_px` may be null.
///
/// # Safety
/// `uv` must hold `2 * n` doubles, `model_index` `n` values and `out_theta` 6
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_tracker_push_frame(
    tracker: *mut SwkTracker,
    uv: *const f64,
    model_index: *const usize,
    n: usize,
    out_theta: *mut f64,
    out_rms_px: *mut f64,
) -> SwkStatus {
    guard(|| {
        let t = out(tracker, "tracker")?;
        let uv = slice(uv, 2 * n, "uv")?;
        let idx = slice(model_index, n, "model_index")?;
        if out_theta.is_null() {
            return Err(null("out_theta"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.model.len()) {
            return Err(invalid(format!("model index {bad} out of range for {} features", t.model.len())));
        }
        let obs: Vec<FeatureObservation> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| FeatureObservation::matched(PixelPoint::new(uv[2 * k], uv[2 * k + 1]), 1.0, i))
            .collect();
        let obs = undistort_observations(&t.camera, obs)?;
        let init = match t.last {
            Some(theta) => theta,
            None => initialize_first_frame(&t.model, &obs, &t.camera, &t.fit)?,
        };
        let report = fit_pose(&init, &t.model, &obs, &t.camera, &t.fit)?;
        t.last = Some(report.theta);
        std::slice::from_raw_parts_mut(out_theta, 6).copy_from_slice(report.theta.as_array());
        if let Some(rms) = out_rms_px.as_mut() {
            *rms = report.rms_residual_px;
        }
        Ok(())
    })
}

/// Camera-frame position of the model's tracked body point at the last fitted pose.
///
/// # Safety
/// `out_xyz` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_tracker_virtual_point(tracker: *const SwkTracker, out_xyz: *mut f64) -> SwkStatus {
    guard(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        if out_xyz.is_null() {
            return Err(null("out_xyz"));
        }
        let theta = t.last.ok_or(Failure::Status(SwkStatus::NoEstimate, "no pose estimated yet".into()))?;
        let z = virtual_point(&theta, &t.model.virtual_offset());
        std::slice::from_raw_parts_mut(out_xyz, 3).copy_from_slice(&[z.x, z.y, z.z]);
        Ok(())
    })
}

unsafe fn trajectory(xyz: *const f64, n: usize, rate_hz: f64) -> Result<SwayTrajectory, Failure> {
    let v = slice(xyz, 3 * n, "xyz")?;
    let samples: Vec<SwaySample> = v.chunks_exact(3).map(|c| SwaySample::new(c[0], c[1], c[2])).collect();
    Ok(SwayTrajectory::from_samples(rate_hz, Segment::Lower, samples)?)
}

/// Total path length (mm) of `n` anatomical samples `[AP, ML, SI]` at `rate_hz`
/// over the stance bin `[start_sec, end_sec)`.
///
/// # Safety
/// `xyz` must hold `3 * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_total_path_length(
    xyz: *const f64,
    n: usize,
    rate_hz: f64,
    start_sec: f64,
    end_sec: f64,
    direction: SwkDirection,
    out_mm: *mut f64,
) -> SwkStatus {
    guard(|| {
        let out_mm = out(out_mm, "out_mm")?;
        let traj = trajectory(xyz, n, rate_hz)?;
        let bin = TimeBin::new("bin", start_sec, end_sec)?;
        *out_mm = total_path_length(&traj, direction_from(direction), &bin)?;
        Ok(())
    })
}

/// Bland-Altman agreement of `n` paired measurements.
///
/// # Safety
/// `a` and `b` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_bland_altman(a: *const f64, b: *const f64, n: usize, out_report: *mut SwkAgreement) -> SwkStatus {
    guard(|| {
        let out_report = out(out_report, "out_report")?;
        let r = bland_altman(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *out_report = SwkAgreement {
            bias: r.bias_mm,
            loa_low: r.loa[0],
            loa_high: r.loa[1],
            sd: r.sd_mm,
            slope: r.slope,
            intercept: r.intercept,
            r2: r.r2,
            n: r.n,
        };
        Ok(())
    })
}

/// Cohen's d of `b` against `a` with the pooled standard deviation.
///
/// # Safety
/// `a` must hold `n_a` doubles and `b` `n_b` doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_cohens_d(a: *const f64, n_a: usize, b: *const f64, n_b: usize, out_d: *mut f64) -> SwkStatus {
    guard(|| {
        let out_d = out(out_d, "out_d")?;
        *out_d = cohens_d(slice(a, n_a, "a")?, slice(b, n_b, "b")?)?;
        Ok(())
    })
}

/// Savitzky-Golay smoothing of one series sampled at `rate_hz`; `out` may alias `x`.
///
/// # Safety
/// `x` and `out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn swk_savitzky_golay(
    x: *const f64,
    n: usize,
    rate_hz: f64,
    window_sec: f64,
    order: usize,
    out: *mut f64,
) -> SwkStatus {
    guard(|| {
        let samples: Vec<SwaySample> = slice(x, n, "x")?.iter().map(|&v| SwaySample::new(v, 0.0, 0.0)).collect();
        if out.is_null() {
            return Err(null("out"));
        }
        let traj = SwayTrajectory::from_samples(rate_hz, Segment::Lower, samples)?;
        let smoothed = savitzky_golay(&traj, window_sec, order)?.axis(Axis::AP);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&smoothed);
        Ok(())
    })
}
