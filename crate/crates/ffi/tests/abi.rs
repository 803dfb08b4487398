use std::ffi::{CStr, CString};
use std::ptr;

use confspec_ffi::*;

fn last_error() -> String {
    let p = confspec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(spec: &str) -> *mut ConfspecMesh {
    let spec = CString::new(spec).unwrap();
    let mut mesh = ptr::null_mut();
    assert_eq!(
        unsafe { confspec_mesh_generate(spec.as_ptr(), &mut mesh) },
        ConfspecStatus::Ok
    );
    mesh
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(confspec_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn mesh_stats_and_spectrum() {
    let mesh = generate("icosphere:3");
    let (mut v, mut g, mut a) = (0usize, 7usize, 0.0f64);
    assert_eq!(
        unsafe { confspec_mesh_stats(mesh, &mut v, &mut g, &mut a) },
        ConfspecStatus::Ok
    );
    assert_eq!((v, g), (642, 0));
    assert!((a / (4.0 * std::f64::consts::PI) - 1.0).abs() < 0.01);
    let mut ev = [0.0; 4];
    assert_eq!(
        unsafe { confspec_spectrum(mesh, ptr::null(), 0, 4, ev.as_mut_ptr()) },
        ConfspecStatus::Ok
    );
    let target = 8.0 * std::f64::consts::PI;
    assert!(
        ev[..3].iter().all(|l| (l / target - 1.0).abs() < 0.01),
        "{ev:?}"
    );
    assert!(ev[3] > 2.5 * target);
    unsafe { confspec_mesh_free(mesh) };
}

#[test]
fn maximize_round_trip() {
    let mesh = generate("icosphere:2");
    let mut opts = confspec_ascent_options_default();
    let schedule = [4.0, 16.0];
    opts.n_schedule = schedule.as_ptr();
    opts.n_schedule_len = schedule.len();
    let mut result = ptr::null_mut();
    assert_eq!(
        unsafe { confspec_maximize(mesh, &opts, ConfspecInit::Random, 3, &mut result) },
        ConfspecStatus::Ok
    );
    let mut lambda = 0.0;
    assert_eq!(
        unsafe { confspec_result_lambda1_area(result, &mut lambda) },
        ConfspecStatus::Ok
    );
    assert!((lambda / (8.0 * std::f64::consts::PI) - 1.0).abs() < 0.02);
    let mut status = ConfspecRunStatus::IterationCap;
    assert_eq!(
        unsafe { confspec_result_status(result, &mut status) },
        ConfspecStatus::Ok
    );
    assert_eq!(status, ConfspecRunStatus::Converged);

    let mut len = 0usize;
    assert_eq!(
        unsafe { confspec_result_density(result, ptr::null_mut(), 0, &mut len) },
        ConfspecStatus::BufferTooSmall
    );
    assert_eq!(len, 162);
    let mut density = vec![0.0; len];
    assert_eq!(
        unsafe { confspec_result_density(result, density.as_mut_ptr(), len, &mut len) },
        ConfspecStatus::Ok
    );
    assert!(density.iter().all(|&d| d > 0.0));

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { confspec_result_certificate_json(result, &mut json) },
        ConfspecStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"schema\": \"confspec-cert-1\""), "{text}");
    unsafe {
        confspec_string_free(json);
        confspec_result_free(result);
        confspec_mesh_free(mesh);
    }
}

#[test]
fn errors_are_reported_with_messages() {
    let bad = CString::new("icosphere:-1").unwrap();
    let mut mesh = ptr::null_mut();
    assert_eq!(
        unsafe { confspec_mesh_generate(bad.as_ptr(), &mut mesh) },
        ConfspecStatus::InputError
    );
    assert!(mesh.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { confspec_mesh_generate(ptr::null(), &mut mesh) },
        ConfspecStatus::NullPointer
    );
    assert!(last_error().contains("spec"));

    let path = CString::new("/nonexistent/mesh.off").unwrap();
    assert_eq!(
        unsafe { confspec_mesh_load(path.as_ptr(), ptr::null(), &mut mesh) },
        ConfspecStatus::InputError
    );

    let mesh = generate("icosphere:1");
    let mut opts = confspec_ascent_options_default();
    opts.floor = 0.25;
    let mut result = ptr::null_mut();
    assert_eq!(
        unsafe { confspec_maximize(mesh, &opts, ConfspecInit::Uniform, 0, &mut result) },
        ConfspecStatus::InputError
    );
    assert!(last_error().contains("floor"));
    unsafe { confspec_mesh_free(mesh) };

    // A successful call clears the message.
    let _ = generate("icosphere:0");
    assert!(confspec_last_error().is_null());
}

#[test]
fn moebius_map_through_the_abi() {
    let e = [0.0, 0.0, 0.5];
    let x = [0.0, 0.0, 1.0];
    let mut y = [0.0; 3];
    assert_eq!(
        unsafe { confspec_moebius_map(e.as_ptr(), x.as_ptr(), y.as_mut_ptr()) },
        ConfspecStatus::Ok
    );
    assert!((y[2] - 1.0).abs() < 1e-15);
    let e = [0.0, 1.0, 0.0];
    assert_eq!(
        unsafe { confspec_moebius_map(e.as_ptr(), x.as_ptr(), y.as_mut_ptr()) },
        ConfspecStatus::InputError
    );
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        confspec_mesh_free(ptr::null_mut());
        confspec_result_free(ptr::null_mut());
        confspec_string_free(ptr::null_mut());
    }
}
