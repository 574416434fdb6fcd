//! C ABI over the gridforge library.
//!
//! Objects are opaque heap handles released with the matching `*_free`.
//! Every fallible call returns a `GfStatus`; on failure the message is kept
//! per thread and read back with `gf_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gridforge::config::ExperimentConfig;
use gridforge::experiments::{run, Command};
use gridforge::fock::{FockDim, StateVector};
use gridforge::metrics::{q_db, q_expectation};
use gridforge::protocol::{comb_fidelity, run_phased_comb, run_symmetry_enforced, suggest_dim, ProtocolConfig};
use gridforge::qec::{channel_fidelity, converged_point, CodeFamily, CodePair, CodeSpec, N_R_START};
use gridforge::Error;

/// Status codes. The nonzero values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    /// I/O or other failure.
    Failure = 1,
    /// Bad argument or config, including null pointers.
    InvalidArgument = 2,
    /// Truncation leakage, Kraus tail or convergence failure.
    Truncation = 3,
    /// Numerical failure (conditioning, matrix functions).
    Numerical = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

impl From<&Error> for GfStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => GfStatus::InvalidArgument,
            3 => GfStatus::Truncation,
            4 => GfStatus::Numerical,
            _ => GfStatus::Failure,
        }
    }
}

/// Family selector for `gf_code_new`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfFamily {
    PhasedComb = 0,
    Comb = 1,
    GaussianGkp = 2,
    Trivial = 3,
}

impl From<GfFamily> for CodeFamily {
    fn from(f: GfFamily) -> Self {
        match f {
            GfFamily::PhasedComb => CodeFamily::PhasedComb,
            GfFamily::Comb => CodeFamily::Comb,
            GfFamily::GaussianGkp => CodeFamily::GaussianGkp,
            GfFamily::Trivial => CodeFamily::Trivial,
        }
    }
}

/// A Fock-space state vector.
pub struct GfState {
    state: StateVector,
}

/// A pair of logical codewords.
pub struct GfCode {
    code: CodePair,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            GfStatus::from(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GfStatus::Panic
        }
    }
}

fn null(name: &str) -> Error {
    Error::InvalidArgument(format!("{name} is null"))
}

unsafe fn out_ref<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Error> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Error::InvalidArgument(format!("{name} is not UTF-8")))
}

fn dim_or_auto(n_max: usize, auto: impl FnOnce() -> FockDim) -> Result<FockDim, Error> {
    if n_max == 0 {
        Ok(auto())
    } else {
        FockDim::new(n_max)
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Runs the generation protocol. `n_max = 0` picks the size automatically.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn gf_generate(mu: u8, cycles: usize, r_db: f64, correction: bool, n_max: usize, out: *mut *mut GfState) -> GfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let dim = dim_or_auto(n_max, || suggest_dim(mu, cycles, r_db))?;
        let cfg = ProtocolConfig::new(mu, cycles, r_db, dim, correction);
        cfg.validate()?;
        let (state, _) = if correction { run_symmetry_enforced(&cfg)? } else { run_phased_comb(&cfg)? };
        *out = Box::into_raw(Box::new(GfState { state }));
        Ok(())
    })
}

/// # Safety
/// `state` must come from this library and not be used afterwards; null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn gf_state_free(state: *mut GfState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of Fock amplitudes (n_max + 1), or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gf_state_len(state: *const GfState) -> usize {
    state.as_ref().map_or(0, |s| s.state.dim.size())
}

/// Copies the amplitudes into `re` and `im`, each of length `len`, which must
/// equal `gf_state_len`.
///
/// # Safety
/// `state` must be a live handle; `re` and `im` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_state_amplitudes(state: *const GfState, re: *mut f64, im: *mut f64, len: usize) -> GfStatus {
    guard(|| {
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        let n = s.state.dim.size();
        if len != n {
            return Err(Error::DimMismatch { left: n, right: len });
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        let im = std::slice::from_raw_parts_mut(im, len);
        for (k, a) in s.state.amps.iter().enumerate() {
            re[k] = a.re;
            im[k] = a.im;
        }
        Ok(())
    })
}

/// <Q_mu> of the state in dB.
///
/// # Safety
/// `state` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_state_q_db(state: *const GfState, mu: u8, out: *mut f64) -> GfStatus {
    guard(|| {
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        let out = out_ref(out, "out")?;
        *out = q_db(q_expectation(&s.state, mu)?)?;
        Ok(())
    })
}

/// Fidelity to the equal-leg comb reached after `cycles` cycles.
///
/// # Safety
/// `state` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_state_comb_fidelity(state: *const GfState, mu: u8, cycles: usize, r_db: f64, out: *mut f64) -> GfStatus {
    guard(|| {
        let s = state.as_ref().ok_or_else(|| null("state"))?;
        let out = out_ref(out, "out")?;
        *out = comb_fidelity(&s.state, mu, cycles, r_db)?;
        Ok(())
    })
}

/// Builds a codeword pair at a fixed basis size `n_max`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_code_new(family: GfFamily, cycles: usize, r_db: f64, n_max: usize, out: *mut *mut GfCode) -> GfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let code = CodeSpec::new(family.into(), cycles, r_db).build(FockDim::new(n_max)?)?;
        *out = Box::into_raw(Box::new(GfCode { code }));
        Ok(())
    })
}

/// # Safety
/// `code` must come from this library and not be used afterwards; null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn gf_code_free(code: *mut GfCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Near-optimal channel fidelity under loss `gamma`. `ell = 0` selects the
/// Kraus count automatically; the count used is written to `ell_used` when
/// it is not null.
///
/// # Safety
/// `code` must be a live handle, `f_e` writable, `ell_used` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gf_code_channel_fidelity(code: *const GfCode, gamma: f64, ell: usize, f_e: *mut f64, ell_used: *mut usize) -> GfStatus {
    guard(|| {
        let c = code.as_ref().ok_or_else(|| null("code"))?;
        let f_out = out_ref(f_e, "f_e")?;
        let r = channel_fidelity(&c.code, gamma, (ell > 0).then_some(ell))?;
        *f_out = r.f_e;
        if let Some(l) = ell_used.as_mut() {
            *l = r.ell;
        }
        Ok(())
    })
}

/// Channel fidelity with the basis size escalated until converged; the final
/// size goes to `n_r_used` when it is not null.
///
/// # Safety
/// `f_e` must be writable, `n_r_used` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gf_qec_point(family: GfFamily, cycles: usize, r_db: f64, gamma: f64, f_e: *mut f64, n_r_used: *mut usize) -> GfStatus {
    guard(|| {
        let f_out = out_ref(f_e, "f_e")?;
        let family: CodeFamily = family.into();
        let start = if family == CodeFamily::Trivial { 40 } else { N_R_START };
        let row = converged_point(&CodeSpec::new(family, cycles, r_db), gamma, start)?;
        *f_out = row.f_e;
        if let Some(n) = n_r_used.as_mut() {
            *n = row.n_r;
        }
        Ok(())
    })
}

/// Runs a CLI command ("generate", "sweep-q", "noise", "qec", "hadamard",
/// "wigner") with a key-value or JSON config; files go to its output_dir.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gf_run(command: *const c_char, config: *const c_char) -> GfStatus {
    guard(|| {
        let command: Command = c_str(command, "command")?.parse()?;
        let cfg = ExperimentConfig::parse(c_str(config, "config")?)?;
        run(command, &cfg)?;
        Ok(())
    })
}
