//! C ABI over the `spikerf` theory engine.
//!
//! Problems are opaque handles created by `spikerf_problem_new` or
//! `spikerf_problem_from_json` and released with `spikerf_problem_free`.
//! Every fallible call returns a [`SpikerfStatus`]; on failure the message is
//! kept per thread and can be copied out with `spikerf_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use spikerf::detequiv::{SolverOptions, TheoryProblem};
use spikerf::generror::{asymptotic_generror, GenErrorOptions};
use spikerf::spectrum::stieltjes;
use spikerf::{Error, ExperimentConfig, Pointwise, VocabularySpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikerfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    Singular = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Built-in pointwise maps, in the order of `Pointwise::ALL`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpikerfMap {
    Relu = 0,
    Erf = 1,
    Tanh = 2,
    Sin = 3,
    Identity = 4,
    H2 = 5,
    H3 = 6,
    Sign = 7,
    SmoothSign = 8,
    Square = 9,
}

impl From<SpikerfMap> for Pointwise {
    fn from(m: SpikerfMap) -> Self {
        Pointwise::ALL[m as usize]
    }
}

/// Opaque handle to a theory problem.
pub struct SpikerfProblem {
    inner: TheoryProblem,
}

/// Generalization error and order parameters at one ridge penalty.
///
/// `tau0` and `tau1` point to caller-owned arrays of length `k`.
#[repr(C)]
pub struct SpikerfGenError {
    pub error: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau0: *mut f64,
    pub tau1: *mut f64,
    pub k: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SpikerfStatus {
    match e {
        Error::Config(_) => SpikerfStatus::InvalidArgument,
        Error::NotConverged { .. } => SpikerfStatus::NotConverged,
        Error::Singular(_) => SpikerfStatus::Singular,
        Error::Io(_) => SpikerfStatus::Io,
        _ => SpikerfStatus::Numerical,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (SpikerfStatus, String)>) -> SpikerfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            SpikerfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SpikerfStatus::Panic
        }
    }
}

fn lift<T>(r: spikerf::Result<T>) -> Result<T, (SpikerfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SpikerfStatus, String) {
    (SpikerfStatus::NullPointer, format!("{what} is null"))
}

/// Creates a problem from spike-vocabulary values `zeta_u[0..k]` with
/// probabilities `pi[0..k]`.
///
/// # Safety
/// `zeta_u` and `pi` must point to `k` readable doubles and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn spikerf_problem_new(
    alpha: f64,
    beta: f64,
    k: usize,
    zeta_u: *const f64,
    pi: *const f64,
    activation: SpikerfMap,
    link: SpikerfMap,
    out: *mut *mut SpikerfProblem,
) -> SpikerfStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if zeta_u.is_null() || pi.is_null() {
            return Err(null("vocabulary"));
        }
        if k == 0 {
            return Err((
                SpikerfStatus::InvalidArgument,
                "k must be at least 1".into(),
            ));
        }
        // SAFETY: the caller guarantees both arrays hold k doubles.
        let (z, p) = unsafe {
            (
                std::slice::from_raw_parts(zeta_u, k).to_vec(),
                std::slice::from_raw_parts(pi, k).to_vec(),
            )
        };
        let vocab = lift(VocabularySpec::new(z, p))?;
        let inner = lift(TheoryProblem::new(
            alpha,
            beta,
            &vocab,
            activation.into(),
            link.into(),
        ))?;
        // SAFETY: out was checked for null above.
        unsafe { *out = Box::into_raw(Box::new(SpikerfProblem { inner })) };
        Ok(())
    })
}

/// Creates a problem from an experiment configuration in JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn spikerf_problem_from_json(
    json: *const c_char,
    out: *mut *mut SpikerfProblem,
) -> SpikerfStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if json.is_null() {
            return Err(null("json"));
        }
        // SAFETY: the caller guarantees a NUL-terminated string.
        let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|_| {
            (
                SpikerfStatus::InvalidArgument,
                "json is not UTF-8".to_string(),
            )
        })?;
        let cfg = lift(ExperimentConfig::from_json(text))?;
        let inner = lift(TheoryProblem::from_config(&cfg))?;
        // SAFETY: out was checked for null above.
        unsafe { *out = Box::into_raw(Box::new(SpikerfProblem { inner })) };
        Ok(())
    })
}

/// Releases a problem. Null is ignored.
///
/// # Safety
/// `problem` must come from a constructor of this library and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn spikerf_problem_free(problem: *mut SpikerfProblem) {
    if !problem.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Vocabulary size of a problem, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spikerf_problem_k(problem: *const SpikerfProblem) -> usize {
    // SAFETY: the caller guarantees a live handle or null.
    unsafe { problem.as_ref() }.map_or(0, |p| p.inner.k())
}

/// Bulk Stieltjes transform `m(z)` at `z = re + i·im`.
///
/// # Safety
/// `problem` must be a live handle; `out_re` and `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spikerf_stieltjes(
    problem: *const SpikerfProblem,
    re: f64,
    im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> SpikerfStatus {
    guarded(|| {
        // SAFETY: the caller guarantees a live handle or null.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let z = spikerf::c64::new(re, im);
        let (m, _) = lift(stieltjes(&p.inner, z, None, &SolverOptions::default()))?;
        // SAFETY: both outputs were checked for null above.
        unsafe {
            *out_re = m.re;
            *out_im = m.im;
        }
        Ok(())
    })
}

/// Asymptotic generalization error at ridge penalty `lambda`.
///
/// # Safety
/// `problem` must be a live handle and `out` must point to a struct whose
/// `tau0` and `tau1` arrays hold at least `out.k` doubles, with `out.k`
/// equal to the vocabulary size.
#[no_mangle]
pub unsafe extern "C" fn spikerf_generror(
    problem: *const SpikerfProblem,
    lambda: f64,
    out: *mut SpikerfGenError,
) -> SpikerfStatus {
    guarded(|| {
        // SAFETY: the caller guarantees a live handle or null.
        let p = unsafe { problem.as_ref() }.ok_or_else(|| null("problem"))?;
        // SAFETY: the caller guarantees a writable struct or null.
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let k = p.inner.k();
        if out.k != k {
            return Err((
                SpikerfStatus::InvalidArgument,
                format!(
                    "output arrays hold {} entries, the problem has k = {k}",
                    out.k
                ),
            ));
        }
        if out.tau0.is_null() || out.tau1.is_null() {
            return Err(null("tau arrays"));
        }
        let report = lift(asymptotic_generror(
            &p.inner,
            lambda,
            &GenErrorOptions::default(),
        ))?;
        // SAFETY: both arrays hold k doubles by contract.
        let (t0, t1) = unsafe {
            (
                std::slice::from_raw_parts_mut(out.tau0, k),
                std::slice::from_raw_parts_mut(out.tau1, k),
            )
        };
        t0.copy_from_slice(&report.tau.tau0);
        t1.copy_from_slice(&report.tau.tau1);
        out.error = report.error;
        out.tau2 = report.tau.tau2;
        out.tau3 = report.tau.tau3;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len − 1` bytes) and returns its full length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn spikerf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: buf holds len bytes and n < len.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spikerf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
