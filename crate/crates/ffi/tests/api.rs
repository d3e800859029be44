use std::ffi::CStr;
use std::ptr;

use swaykin_ffi::*;

fn camera() -> SwkCamera {
    SwkCamera {
        fx: 4000.0,
        fy: 4000.0,
        s: 0.0,
        x0: 1024.0,
        y0: 1024.0,
        k1: -0.05,
        k2: 0.01,
    }
}

fn last_error() -> String {
    let p = swk_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn lumbar_points() -> Vec<[f64; 3]> {
    (0..4)
        .flat_map(|r| (0..4).map(move |c| (r, c)))
        .filter(|&rc| rc != (3, 3))
        .map(|(r, c)| [20.0 * c as f64, 20.0 * r as f64, 0.0])
        .collect()
}

fn observe(theta: &[f64; 6]) -> (Vec<f64>, Vec<usize>) {
    let mut uv = Vec::new();
    for p in lumbar_points() {
        let mut q = [0.0; 2];
        assert_eq!(unsafe { swk_project(&camera(), theta.as_ptr(), p.as_ptr(), q.as_mut_ptr()) }, SwkStatus::Ok);
        uv.extend(q);
    }
    let n = uv.len() / 2;
    (uv, (0..n).collect())
}

#[test]
fn tracker_follows_a_moving_target() {
    let mut tracker = ptr::null_mut();
    assert_eq!(unsafe { swk_tracker_new(&camera(), c"lumbar".as_ptr(), ptr::null(), &mut tracker) }, SwkStatus::Ok);
    let mut z = [0.0; 3];
    assert_eq!(unsafe { swk_tracker_virtual_point(tracker, z.as_mut_ptr()) }, SwkStatus::NoEstimate);

    for k in 0..20 {
        let t = k as f64 / 30.0;
        let truth = [0.05 * t, -0.02, 0.01, -30.0 + 5.0 * t, 120.0, 1000.0 + 10.0 * t];
        let (uv, idx) = observe(&truth);
        let (mut theta, mut rms) = ([0.0; 6], 0.0);
        let s = unsafe { swk_tracker_push_frame(tracker, uv.as_ptr(), idx.as_ptr(), idx.len(), theta.as_mut_ptr(), &mut rms) };
        assert_eq!(s, SwkStatus::Ok);
        for i in 0..6 {
            assert!((theta[i] - truth[i]).abs() < 1e-6, "frame {k}: {theta:?} vs {truth:?}");
        }
        assert!(rms < 1e-6);
    }
    assert_eq!(unsafe { swk_tracker_virtual_point(tracker, z.as_mut_ptr()) }, SwkStatus::Ok);
    assert!(z[2] > 1000.0, "{z:?}");
    unsafe { swk_tracker_free(tracker) };
}

#[test]
fn tracker_keeps_last_pose_after_a_failed_frame() {
    let truth = [0.0, 0.0, 0.0, -30.0, 120.0, 1000.0];
    let mut tracker = ptr::null_mut();
    assert_eq!(unsafe { swk_tracker_new(&camera(), c"lumbar".as_ptr(), truth.as_ptr(), &mut tracker) }, SwkStatus::Ok);
    let (uv, idx) = observe(&truth);
    let mut theta = [0.0; 6];
    let short = unsafe { swk_tracker_push_frame(tracker, uv.as_ptr(), idx.as_ptr(), 3, theta.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(short, SwkStatus::InsufficientCorrespondence);
    assert!(last_error().contains("insufficient"));
    let ok = unsafe { swk_tracker_push_frame(tracker, uv.as_ptr(), idx.as_ptr(), idx.len(), theta.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(ok, SwkStatus::Ok);
    assert!((theta[5] - 1000.0).abs() < 1e-6);

    let bad = [99usize; 15];
    let s = unsafe { swk_tracker_push_frame(tracker, uv.as_ptr(), bad.as_ptr(), 15, theta.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(s, SwkStatus::InvalidArgument);
    unsafe { swk_tracker_free(tracker) };
}

#[test]
fn constructor_rejects_bad_input() {
    let mut tracker = ptr::null_mut();
    assert_eq!(unsafe { swk_tracker_new(&camera(), c"elbow".as_ptr(), ptr::null(), &mut tracker) }, SwkStatus::Io);
    assert!(tracker.is_null());
    assert_eq!(unsafe { swk_tracker_new(ptr::null(), c"lumbar".as_ptr(), ptr::null(), &mut tracker) }, SwkStatus::NullPointer);
    assert!(last_error().contains("camera"));
    let mut bad = camera();
    bad.fx = -1.0;
    assert_eq!(unsafe { swk_tracker_new(&bad, c"lumbar".as_ptr(), ptr::null(), &mut tracker) }, SwkStatus::InvalidArgument);
    unsafe { swk_tracker_free(ptr::null_mut()) };
}

#[test]
fn path_length_of_a_square_walk() {
    // AP, ML, SI samples tracing a 10 mm square in the AP-ML plane.
    let xyz = [0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0];
    let mut out = 0.0;
    let s = unsafe { swk_total_path_length(xyz.as_ptr(), 5, 1.0, 0.0, 10.0, SwkDirection::Apml, &mut out) };
    assert_eq!(s, SwkStatus::Ok);
    assert!((out - 40.0).abs() < 1e-12);
    unsafe { swk_total_path_length(xyz.as_ptr(), 5, 1.0, 0.0, 10.0, SwkDirection::Ap, &mut out) };
    assert!((out - 20.0).abs() < 1e-12);
    let s = unsafe { swk_total_path_length(xyz.as_ptr(), 5, 1.0, 5.0, 1.0, SwkDirection::Ap, &mut out) };
    assert_eq!(s, SwkStatus::InvalidArgument);
}

#[test]
fn statistics_entry_points() {
    let a = [1.0, 2.0, 3.0, 4.0, 6.0];
    let b = [1.5, 2.5, 3.5, 4.5, 6.5];
    let mut r = SwkAgreement::default();
    assert_eq!(unsafe { swk_bland_altman(a.as_ptr(), b.as_ptr(), 5, &mut r) }, SwkStatus::Ok);
    assert!((r.bias - 0.5).abs() < 1e-12 && (r.r2 - 1.0).abs() < 1e-12 && r.n == 5);

    let mut d = 0.0;
    let (x, y) = ([1.0, 2.0, 3.0], [3.0, 4.0, 5.0]);
    assert_eq!(unsafe { swk_cohens_d(x.as_ptr(), 3, y.as_ptr(), 3, &mut d) }, SwkStatus::Ok);
    assert!((d - 2.0).abs() < 1e-12);
    assert_eq!(unsafe { swk_cohens_d(ptr::null(), 3, y.as_ptr(), 3, &mut d) }, SwkStatus::NullPointer);
}

#[test]
fn smoothing_preserves_a_quadratic_in_place() {
    let n = 90;
    let mut x: Vec<f64> = (0..n).map(|k| (k as f64 / 30.0).powi(2) - 2.0).collect();
    let expected = x.clone();
    let p = x.as_mut_ptr();
    assert_eq!(unsafe { swk_savitzky_golay(p, n, 30.0, 0.5, 2, p) }, SwkStatus::Ok);
    for (a, b) in x.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(unsafe { swk_savitzky_golay(p, n, 30.0, 0.5, 20, p) }, SwkStatus::InvalidArgument);
}
