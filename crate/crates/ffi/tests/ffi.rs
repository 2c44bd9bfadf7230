use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hyperspeckle_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        hs_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn tensor_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(&dir.path().join("t.htm"));
    let dims = [2usize, 3];
    let data = [1.0, 2.0, 3.0, 4.0, 5.0, -6.5];
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(
            hs_tensor_new(dims.as_ptr(), 2, data.as_ptr(), 6, &mut t),
            HsStatus::Ok
        );
        assert_eq!(hs_tensor_write(t, path.as_ptr()), HsStatus::Ok);
        hs_tensor_free(t);

        let mut r = ptr::null_mut();
        assert_eq!(hs_tensor_read(path.as_ptr(), &mut r), HsStatus::Ok);
        assert_eq!(hs_tensor_ndim(r), 2);
        assert_eq!(hs_tensor_len(r), 6);
        let mut got = [0usize; 2];
        assert_eq!(hs_tensor_dims(r, got.as_mut_ptr(), 2), HsStatus::Ok);
        assert_eq!(got, dims);
        assert_eq!(
            hs_tensor_dims(r, got.as_mut_ptr(), 1),
            HsStatus::BufferTooSmall
        );
        assert_eq!(std::slice::from_raw_parts(hs_tensor_data(r), 6), &data);
        hs_tensor_free(r);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let dims = [2usize, 2];
        let data = [1.0; 3];
        let mut t = ptr::null_mut();
        assert_eq!(
            hs_tensor_new(dims.as_ptr(), 2, data.as_ptr(), 3, &mut t),
            HsStatus::Dimension
        );
        assert!(t.is_null());
        assert!(!last_error().is_empty());

        let missing = CString::new("/nonexistent/x.htm").unwrap();
        assert_eq!(hs_tensor_read(missing.as_ptr(), &mut t), HsStatus::Io);
        assert!(last_error().contains("nonexistent"));

        assert_eq!(hs_tensor_read(ptr::null(), &mut t), HsStatus::NullPointer);

        let mut v = 0.0;
        let a = [1.0, 1.0, 1.0];
        assert_eq!(
            hs_correlation(a.as_ptr(), a.as_ptr(), 3, &mut v),
            HsStatus::UndefinedCorrelation
        );
        let b = [1.0, 2.0, 3.0];
        assert_eq!(
            hs_correlation(b.as_ptr(), b.as_ptr(), 3, &mut v),
            HsStatus::Ok
        );
        assert_eq!(hs_last_error_message(ptr::null_mut(), 0), 0);
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn image_metrics() {
    let a: Vec<f64> = (0..64).map(|i| (i % 7) as f64).collect();
    let b: Vec<f64> = a.iter().map(|v| v * 0.9 + 0.1).collect();
    unsafe {
        let mut s = 0.0;
        assert_eq!(hs_ssim(a.as_ptr(), a.as_ptr(), 8, 8, &mut s), HsStatus::Ok);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(hs_ssim(b.as_ptr(), a.as_ptr(), 8, 8, &mut s), HsStatus::Ok);
        assert!(s < 1.0 && s > 0.5);
        let mut p = 0.0;
        assert_eq!(hs_psnr(a.as_ptr(), a.as_ptr(), 8, 8, &mut p), HsStatus::Ok);
        assert!(p.is_infinite());
        assert_eq!(hs_psnr(b.as_ptr(), a.as_ptr(), 8, 8, &mut p), HsStatus::Ok);
        assert!(p.is_finite() && p > 0.0);
    }
}

#[test]
fn wiener_inverts_a_delta_psf() {
    let (w, h) = (16, 12);
    let speckle: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 11) as f64).collect();
    let mut psf = [0.0; 9];
    psf[4] = 1.0;
    let mut out = vec![0.0; w * h];
    unsafe {
        assert_eq!(
            hs_wiener_deconv(
                speckle.as_ptr(),
                w,
                h,
                psf.as_ptr(),
                3,
                3,
                1e-12,
                out.as_mut_ptr()
            ),
            HsStatus::Ok
        );
    }
    for (a, b) in out.iter().zip(&speckle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let zero = [0.0; 9];
    unsafe {
        let s = hs_wiener_deconv(
            speckle.as_ptr(),
            w,
            h,
            zero.as_ptr(),
            3,
            3,
            1e-3,
            out.as_mut_ptr(),
        );
        assert_eq!(s, HsStatus::Precondition);
    }
}

#[test]
fn pipeline_then_solver_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = cstr(dir.path());
    let scenario = CString::new("broad-linewidth").unwrap();
    let mut corr = 0.0;
    unsafe {
        let s = hs_pipeline_run(ptr::null(), scenario.as_ptr(), out_dir.as_ptr(), &mut corr);
        assert_eq!(s, HsStatus::Ok, "{}", last_error());
    }
    assert!(corr > 1.0 - 1e-6, "{corr}");

    let tc_path = cstr(&dir.path().join("tc.htm"));
    let meas_path = cstr(&dir.path().join("measurements.htm"));
    unsafe {
        let mut tm = ptr::null_mut();
        assert_eq!(
            hs_tm_read(tc_path.as_ptr(), &mut tm),
            HsStatus::Ok,
            "{}",
            last_error()
        );
        let (mut w, mut h) = (0, 0);
        assert_eq!(hs_tm_image_dims(tm, &mut w, &mut h), HsStatus::Ok);
        assert_eq!(w * h, hs_tm_n_pixels(tm));
        let n = hs_tm_n_columns(tm);
        assert_eq!(n, 32);

        let mut solver = ptr::null_mut();
        assert_eq!(hs_solver_new(tm, 0, 0.0, &mut solver), HsStatus::Ok);
        assert_eq!(hs_solver_rank(solver), n);
        assert!(hs_solver_condition(solver).is_finite());

        let mut meas = ptr::null_mut();
        assert_eq!(hs_tensor_read(meas_path.as_ptr(), &mut meas), HsStatus::Ok);
        let frame = hs_tensor_data(meas);
        let mut spectrum = vec![0.0; n];
        assert_eq!(
            hs_solver_recover(solver, frame, w, h, spectrum.as_mut_ptr(), n - 1),
            HsStatus::BufferTooSmall
        );
        assert_eq!(
            hs_solver_recover(solver, frame, w, h, spectrum.as_mut_ptr(), n),
            HsStatus::Ok
        );
        let peak = (0..n)
            .max_by(|&a, &b| spectrum[a].total_cmp(&spectrum[b]))
            .unwrap();
        assert_eq!(peak, 10);

        let mut refined = vec![0.0; n];
        let s = hs_solver_l1_refine(
            solver,
            frame,
            w,
            h,
            spectrum.as_ptr(),
            0.3,
            200,
            refined.as_mut_ptr(),
            n,
        );
        assert_eq!(s, HsStatus::Ok, "{}", last_error());
        assert!(refined.iter().all(|v| *v >= 0.0));

        hs_tensor_free(meas);
        hs_solver_free(solver);
        hs_tm_free(tm);
    }
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = cstr(dir.path());
    let scenario = CString::new("nope").unwrap();
    unsafe {
        let s = hs_pipeline_run(
            ptr::null(),
            scenario.as_ptr(),
            out_dir.as_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(s, HsStatus::Config);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(hs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hyperspeckle.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "hs_solver_recover",
        "hs_last_error_message",
        "HS_STATUS_BUFFER_TOO_SMALL",
        "typedef struct HsSolver HsSolver",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(status.success());
}
