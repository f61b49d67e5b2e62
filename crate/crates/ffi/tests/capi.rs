use std::ffi::CString;
use std::ptr;

use spikerf::detequiv::TheoryProblem;
use spikerf::{Pointwise, VocabularySpec};
use spikerf_ffi::*;

fn erf_problem(alpha: f64) -> *mut SpikerfProblem {
    let zeta = [0.0];
    let pi = [1.0];
    let mut handle = ptr::null_mut();
    let status = unsafe {
        spikerf_problem_new(
            alpha,
            1.5,
            1,
            zeta.as_ptr(),
            pi.as_ptr(),
            SpikerfMap::Erf,
            SpikerfMap::Sin,
            &mut handle,
        )
    };
    assert_eq!(status, SpikerfStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { spikerf_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn stieltjes_matches_the_library() {
    let h = erf_problem(0.8);
    let (mut re, mut im) = (0.0, 0.0);
    let status = unsafe { spikerf_stieltjes(h, 1.0, 0.5, &mut re, &mut im) };
    assert_eq!(status, SpikerfStatus::Ok);
    let direct = TheoryProblem::new(
        0.8,
        1.5,
        &VocabularySpec::single(0.0),
        Pointwise::Erf,
        Pointwise::Sin,
    )
    .unwrap();
    let (m, _) = spikerf::spectrum::stieltjes(
        &direct,
        spikerf::c64::new(1.0, 0.5),
        None,
        &Default::default(),
    )
    .unwrap();
    assert!((re - m.re).abs() < 1e-12 && (im - m.im).abs() < 1e-12);
    assert!(im > 0.0);
    unsafe { spikerf_problem_free(h) };
}

#[test]
fn generror_fills_caller_arrays() {
    let h = erf_problem(2.0);
    assert_eq!(unsafe { spikerf_problem_k(h) }, 1);
    let mut t0 = [f64::NAN];
    let mut t1 = [f64::NAN];
    let mut out = SpikerfGenError {
        error: f64::NAN,
        tau2: f64::NAN,
        tau3: f64::NAN,
        tau0: t0.as_mut_ptr(),
        tau1: t1.as_mut_ptr(),
        k: 1,
    };
    let status = unsafe { spikerf_generror(h, 0.1, &mut out) };
    assert_eq!(status, SpikerfStatus::Ok, "{}", last_error());
    assert!(out.error.is_finite() && out.error > 0.0);
    assert!(t0[0].is_finite() && t1[0].is_finite());
    assert!(out.tau2 >= 0.0 && out.tau3 >= 0.0);
    unsafe { spikerf_problem_free(h) };
}

#[test]
fn wrong_array_length_is_rejected() {
    let h = erf_problem(1.0);
    let mut t = [0.0; 2];
    let mut out = SpikerfGenError {
        error: 0.0,
        tau2: 0.0,
        tau3: 0.0,
        tau0: t.as_mut_ptr(),
        tau1: t.as_mut_ptr(),
        k: 2,
    };
    let status = unsafe { spikerf_generror(h, 0.1, &mut out) };
    assert_eq!(status, SpikerfStatus::InvalidArgument);
    assert!(last_error().contains("k = 1"));
    unsafe { spikerf_problem_free(h) };
}

#[test]
fn null_pointers_are_reported() {
    let (mut re, mut im) = (0.0, 0.0);
    let status = unsafe { spikerf_stieltjes(ptr::null(), 1.0, 0.5, &mut re, &mut im) };
    assert_eq!(status, SpikerfStatus::NullPointer);
    assert_eq!(unsafe { spikerf_problem_k(ptr::null()) }, 0);
    unsafe { spikerf_problem_free(ptr::null_mut()) };
    let status = unsafe { spikerf_problem_from_json(ptr::null(), ptr::null_mut()) };
    assert_eq!(status, SpikerfStatus::NullPointer);
}

#[test]
fn invalid_vocabulary_is_rejected() {
    let zeta = [1.0, 2.0];
    let pi = [0.5, 0.2];
    let mut handle = ptr::null_mut();
    let status = unsafe {
        spikerf_problem_new(
            1.0,
            1.5,
            2,
            zeta.as_ptr(),
            pi.as_ptr(),
            SpikerfMap::Relu,
            SpikerfMap::Tanh,
            &mut handle,
        )
    };
    assert_eq!(status, SpikerfStatus::InvalidArgument);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn real_axis_point_in_spectrum_is_rejected() {
    let h = erf_problem(1.0);
    let (mut re, mut im) = (0.0, 0.0);
    let status = unsafe { spikerf_stieltjes(h, 1.0, 0.0, &mut re, &mut im) };
    assert_ne!(status, SpikerfStatus::Ok);
    unsafe { spikerf_problem_free(h) };
}

#[test]
fn problem_from_json_config() {
    let json = CString::new(
        r#"{"d":100,"p":150,"n":80,"eta_tilde":3.3,"lambda":0.01,"seed":0,
            "activation":"relu","link":"sin","vocab":{"zeta":[1.0],"pi":[1.0]}}"#,
    )
    .unwrap();
    let mut h = ptr::null_mut();
    let status = unsafe { spikerf_problem_from_json(json.as_ptr(), &mut h) };
    assert_eq!(status, SpikerfStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { spikerf_problem_k(h) }, 1);
    unsafe { spikerf_problem_free(h) };

    let bad = CString::new(r#"{"d":1}"#).unwrap();
    let mut h = ptr::null_mut();
    let status = unsafe { spikerf_problem_from_json(bad.as_ptr(), &mut h) };
    assert_eq!(status, SpikerfStatus::InvalidArgument);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(spikerf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spikerf.h")).unwrap();
    for name in [
        "spikerf_problem_new",
        "spikerf_problem_from_json",
        "spikerf_problem_free",
        "spikerf_stieltjes",
        "spikerf_generror",
        "spikerf_last_error",
        "typedef struct SpikerfProblem SpikerfProblem",
        "SPIKERF_STATUS_NOT_CONVERGED",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"spikerf.h\"\nint main(void) { SpikerfStatus s = SPIKERF_STATUS_OK; return (int)s; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc)
            .arg("--version")
            .output()
            .is_ok()
        {
            return Ok(cc);
        }
    }
    Err(())
}
