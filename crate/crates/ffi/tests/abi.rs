use std::ffi::{CStr, CString};
use std::ptr;

use gridforge_ffi::*;

fn last_error() -> String {
    let p = gf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(gf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generate_and_read_back() {
    let mut s: *mut GfState = ptr::null_mut();
    assert_eq!(unsafe { gf_generate(1, 0, 6.0, true, 0, &mut s) }, GfStatus::Ok);
    let n = unsafe { gf_state_len(s) };
    assert!(n > 20);
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { gf_state_amplitudes(s, re.as_mut_ptr(), im.as_mut_ptr(), n) }, GfStatus::Ok);
    let norm: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum();
    assert!((norm - 1.0).abs() < 1e-10);

    let mut q = 0.0;
    assert_eq!(unsafe { gf_state_q_db(s, 1, &mut q) }, GfStatus::Ok);
    assert!(q.is_finite());
    let mut f = 0.0;
    assert_eq!(unsafe { gf_state_comb_fidelity(s, 1, 0, 6.0, &mut f) }, GfStatus::Ok);
    assert!(f > 0.0 && f <= 1.0 + 1e-12);

    assert_eq!(unsafe { gf_state_amplitudes(s, re.as_mut_ptr(), im.as_mut_ptr(), n - 1) }, GfStatus::InvalidArgument);
    unsafe { gf_state_free(s) };
}

#[test]
fn errors_map_to_codes() {
    let mut s: *mut GfState = ptr::null_mut();
    assert_eq!(unsafe { gf_generate(4, 1, 6.0, true, 0, &mut s) }, GfStatus::InvalidArgument);
    assert!(s.is_null());
    assert!(last_error().contains("mu"));

    assert_eq!(unsafe { gf_generate(0, 3, 8.0, false, 40, &mut s) }, GfStatus::Truncation);
    assert!(last_error().contains("leakage"));

    assert_eq!(unsafe { gf_generate(0, 1, 6.0, true, 0, ptr::null_mut()) }, GfStatus::InvalidArgument);
    assert_eq!(unsafe { gf_state_len(ptr::null()) }, 0);
    unsafe { gf_state_free(ptr::null_mut()) };
}

#[test]
fn trivial_code_fidelity() {
    let mut c: *mut GfCode = ptr::null_mut();
    assert_eq!(unsafe { gf_code_new(GfFamily::Trivial, 0, 0.0, 40, &mut c) }, GfStatus::Ok);
    let (mut f, mut ell) = (0.0, 0usize);
    assert_eq!(unsafe { gf_code_channel_fidelity(c, 0.01, 0, &mut f, &mut ell) }, GfStatus::Ok);
    let g: f64 = 0.01;
    let a = 1.0 / (1.0 + g).sqrt() + (1.0 - g).sqrt();
    assert!((f - (a * a + g * g / (1.0 + g)) / 4.0).abs() < 1e-10);
    assert!(ell >= 2);
    assert_eq!(unsafe { gf_code_channel_fidelity(c, 0.01, 3, &mut f, ptr::null_mut()) }, GfStatus::Ok);
    unsafe { gf_code_free(c) };

    let mut n_r = 0usize;
    assert_eq!(unsafe { gf_qec_point(GfFamily::Trivial, 0, 0.0, 0.01, &mut f, &mut n_r) }, GfStatus::Ok);
    assert!(n_r >= 40);
}

#[test]
fn run_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(format!("families = trivial\ngammas = 0.01\noutput_dir = {:?}\n", dir.path().display().to_string())).unwrap();
    let cmd = CString::new("qec").unwrap();
    assert_eq!(unsafe { gf_run(cmd.as_ptr(), cfg.as_ptr()) }, GfStatus::Ok);
    assert!(dir.path().join("qec.csv").exists());

    let bad = CString::new("plot").unwrap();
    assert_eq!(unsafe { gf_run(bad.as_ptr(), cfg.as_ptr()) }, GfStatus::InvalidArgument);
    assert_eq!(unsafe { gf_run(cmd.as_ptr(), ptr::null()) }, GfStatus::InvalidArgument);
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/gridforge.h");
    let src = format!("#include \"{header}\"\nint main(void) {{ GfState *s = 0; return gf_state_len(s) == 0 ? GF_STATUS_OK : GF_STATUS_FAILURE; }}\n");
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("t.c");
    std::fs::write(&c, src).unwrap();
    match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&c).status() {
        Ok(st) => assert!(st.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler found; header check skipped"),
    }
}
