use std::ffi::CString;
use std::ptr;

use xevent_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = xe_last_error(ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; n + 1];
        xe_last_error(buf.as_mut_ptr(), buf.len());
        std::ffi::CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn model(name: &str) -> *mut XeModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { xe_model_new(name.as_ptr(), ptr::null(), &mut m) }, XeStatus::Ok);
    assert!(!m.is_null());
    m
}

fn simulate(m: *const XeModel, n_steps: usize) -> *mut XeTrajectory {
    let (mut dx, mut dy) = (0, 0);
    unsafe {
        assert_eq!(xe_model_dims(m, &mut dx, &mut dy), XeStatus::Ok);
        let (x0, y0) = (vec![0.0; dx], vec![0.0; dy]);
        let mut t = ptr::null_mut();
        let s = xe_simulate(m, x0.as_ptr(), dx, y0.as_ptr(), dy, 0.005, n_steps, 3, &mut t);
        assert_eq!(s, XeStatus::Ok, "{}", last_error());
        t
    }
}

#[test]
fn model_filter_smoother_kl_lifecycle() {
    let m = model("intermittent");
    let t = simulate(m, 400);
    unsafe {
        assert_eq!(xe_trajectory_len(t), 401);
        let mut len = 0;
        assert_eq!(xe_trajectory_obs(t, 0, ptr::null_mut(), 0, &mut len), XeStatus::Ok);
        assert_eq!(len, 401);
        let mut u = vec![f64::NAN; len];
        assert_eq!(xe_trajectory_obs(t, 0, u.as_mut_ptr(), u.len(), &mut len), XeStatus::Ok);
        assert!(u.iter().all(|v| v.is_finite()));

        let (mut f, mut s) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(xe_filter(m, t, &mut f), XeStatus::Ok);
        assert_eq!(xe_smooth(m, t, f, &mut s), XeStatus::Ok);
        assert_eq!(xe_belief_path_len(f), 401);
        let d = xe_belief_path_dim(f);
        assert_eq!(d, xe_belief_path_dim(s));

        let mut mean = vec![0.0; d];
        assert_eq!(xe_belief_mean(s, 200, mean.as_mut_ptr(), d, &mut len), XeStatus::Ok);
        assert_eq!(len, d);
        let mut cov = vec![0.0; d * d];
        assert_eq!(xe_belief_cov(f, 200, cov.as_mut_ptr(), cov.len(), &mut len), XeStatus::Ok);
        for i in 0..d {
            assert!(cov[i * d + i] > 0.0);
            for j in 0..d {
                assert!((cov[i * d + j] - cov[j * d + i]).abs() < 1e-12);
            }
        }

        let mut kl = vec![0.0; 401];
        assert_eq!(xe_kl_filter_smoother(s, f, kl.as_mut_ptr(), kl.len(), &mut len), XeStatus::Ok);
        assert_eq!(len, 401);
        assert!(kl.iter().all(|&k| k >= -1e-10));
        assert!(kl[400].abs() < 1e-8, "smoother equals filter at the final time");

        xe_belief_path_free(s);
        xe_belief_path_free(f);
        xe_trajectory_free(t);
        xe_model_free(m);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(xe_model_new(ptr::null(), ptr::null(), &mut m), XeStatus::NullPointer);
        assert!(m.is_null());
        assert_eq!(last_error(), "null pointer argument");

        let (mut a, mut b) = (0, 0);
        assert_eq!(xe_model_dims(ptr::null(), &mut a, &mut b), XeStatus::NullPointer);
        assert_eq!(xe_trajectory_len(ptr::null()), 0);
        assert_eq!(xe_belief_path_len(ptr::null()), 0);
        let mut len = 0;
        assert_eq!(xe_trajectory_obs(ptr::null(), 0, ptr::null_mut(), 0, &mut len), XeStatus::NullPointer);
        assert_eq!(xe_run_pipeline(ptr::null(), ptr::null()), XeStatus::NullPointer);

        // Freeing NULL is a no-op.
        xe_model_free(ptr::null_mut());
        xe_trajectory_free(ptr::null_mut());
        xe_belief_path_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_map_to_status_codes() {
    unsafe {
        let bad = CString::new("no_such_model").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(xe_model_new(bad.as_ptr(), ptr::null(), &mut m), XeStatus::InvalidArgument);
        assert!(last_error().contains("no_such_model"));

        let name = CString::new("intermittent").unwrap();
        let params = CString::new(r#"{"not_a_parameter": 1.0}"#).unwrap();
        assert_eq!(xe_model_new(name.as_ptr(), params.as_ptr(), &mut m), XeStatus::InvalidArgument);

        let m = model("intermittent");
        let t = simulate(m, 10);
        let mut len = 0;
        assert_eq!(xe_trajectory_obs(t, 99, ptr::null_mut(), 0, &mut len), XeStatus::InvalidArgument);

        // The topographic model has no conditional-Gaussian filter.
        let topo = model("topographic");
        let mut f = ptr::null_mut();
        assert_eq!(xe_filter(topo, t, &mut f), XeStatus::InvalidArgument);
        assert!(f.is_null());

        xe_trajectory_free(t);
        xe_model_free(topo);
        xe_model_free(m);
    }
}

#[test]
fn short_buffers_are_rejected_with_required_length() {
    let m = model("intermittent");
    let t = simulate(m, 20);
    unsafe {
        let mut buf = [0.0; 5];
        let mut len = 0;
        assert_eq!(xe_trajectory_obs(t, 0, buf.as_mut_ptr(), buf.len(), &mut len), XeStatus::InvalidArgument);
        assert_eq!(len, 21);
        assert!(last_error().contains("21"));
        assert_eq!(buf, [0.0; 5]);

        // Truncated error message stays NUL-terminated.
        let mut small = [1 as std::ffi::c_char; 4];
        let full = xe_last_error(small.as_mut_ptr(), small.len());
        assert!(full > 3);
        assert_eq!(small[3], 0);

        xe_trajectory_free(t);
        xe_model_free(m);
    }
}

#[test]
fn runs_pipeline_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"example": "intermittent"},
            "simulate": {"dt": 0.005, "n_steps": 2000, "seed": 1},
            "events": {"mode": "percentile", "percentile": 90},
            "diagnostics": {}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (c, o) = (CString::new(cfg.to_str().unwrap()).unwrap(), CString::new(out.to_str().unwrap()).unwrap());
    unsafe {
        assert_eq!(xe_run_pipeline(c.as_ptr(), o.as_ptr()), XeStatus::Ok, "{}", last_error());
        // No output.directory in the config and none given.
        assert_eq!(xe_run_pipeline(c.as_ptr(), ptr::null()), XeStatus::InvalidArgument);
        let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
        assert_eq!(xe_run_pipeline(missing.as_ptr(), o.as_ptr()), XeStatus::InvalidArgument);
        assert!(last_error().contains("not found"));
    }
    assert!(out.join("manifest.json").exists());
    assert!(out.join("report/report.json").exists());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/xevent.h")).unwrap();
    for f in [
        "xe_last_error",
        "xe_model_new",
        "xe_model_free",
        "xe_model_dims",
        "xe_simulate",
        "xe_trajectory_free",
        "xe_trajectory_len",
        "xe_trajectory_obs",
        "xe_trajectory_hidden",
        "xe_filter",
        "xe_smooth",
        "xe_belief_path_free",
        "xe_belief_path_len",
        "xe_belief_path_dim",
        "xe_belief_mean",
        "xe_belief_cov",
        "xe_kl_filter_smoother",
        "xe_run_pipeline",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("XE_STATUS_OK = 0"));
}
