//! C ABI over the xyent library.
//!
//! Every function returns an [`XyentStatus`]; results go through out-pointers.
//! Handles are opaque and must be released with their `_free` function. The
//! message of the last failure on the calling thread is available from
//! [`xyent_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use xyent::concurrence::c4_mixed;
use xyent::correlators::correlator;
use xyent::gmn::genuine_negativity_with;
use xyent::model::{ground_energy_density, ChainSize, ModelParams};
use xyent::rdm::{build_rdm, Arrangement, DensityMatrix};
use xyent::sdp::Settings;
use xyent::separability::{certify_biseparable, check_certificate, SeparabilityOptions};
use xyent::Error;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XyentStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Numerical = 3,
    Inconclusive = 4,
    BufferTooSmall = 5,
    Unphysical = 6,
    Panic = 7,
}

/// Model parameters: coupling, anisotropy and chain length.
pub struct XyentModel(ModelParams);

/// Real symmetric density matrix of a few qubits.
pub struct XyentState(DensityMatrix);

/// Result of a genuine negativity evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct XyentNegativity {
    pub value: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// 1 when the solver reached its tolerance, 0 otherwise.
    pub optimal: c_int,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> XyentStatus {
    match e {
        Error::Unphysical { .. } => XyentStatus::Unphysical,
        e if e.is_usage() => XyentStatus::InvalidParameter,
        _ => XyentStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), XyentStatus>>(f: F) -> XyentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XyentStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            XyentStatus::Panic
        }
    }
}

fn fail(e: Error) -> XyentStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> XyentStatus {
    set_error(format!("null pointer: {what}"));
    XyentStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, XyentStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), XyentStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Copies the last error message of this thread, NUL-terminated, into `buf`.
/// Returns the message length in bytes without the terminator; the copy is
/// truncated when `len` is too small. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn xyent_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xyent_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model. `length` is an odd chain length ≥ 3, or 0 for the
/// thermodynamic limit.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to free
/// with [`xyent_model_free`].
#[no_mangle]
pub unsafe extern "C" fn xyent_model_new(lambda: f64, gamma: f64, length: usize, out: *mut *mut XyentModel) -> XyentStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let size = if length == 0 {
            ChainSize::Thermodynamic
        } else {
            length.to_string().parse::<ChainSize>().map_err(fail)?
        };
        let params = ModelParams::new(lambda, gamma, size).map_err(fail)?;
        write(out, Box::into_raw(Box::new(XyentModel(params))), "out")
    })
}

/// # Safety
/// `model` must be null or a handle from [`xyent_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xyent_model_free(model: *mut XyentModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Two-point correlator `G_r`; `tol` is the quadrature tolerance in the
/// thermodynamic limit.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xyent_correlator(model: *const XyentModel, r: i64, tol: f64, out: *mut f64) -> XyentStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let v = correlator(&m.0, r, tol).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Ground-state energy per site.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xyent_energy_density(model: *const XyentModel, tol: f64, out: *mut f64) -> XyentStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let v = ground_energy_density(&m.0, tol).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Reduced density matrix of sites separated by `spacings[0..count]`.
///
/// # Safety
/// `model` must be a live handle, `spacings` must point to `count` values and
/// `out` must be valid; free the result with [`xyent_state_free`].
#[no_mangle]
pub unsafe extern "C" fn xyent_state_from_model(
    model: *const XyentModel,
    spacings: *const usize,
    count: usize,
    tol: f64,
    out: *mut *mut XyentState,
) -> XyentStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if spacings.is_null() {
            return Err(null("spacings"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let arr = Arrangement::new(std::slice::from_raw_parts(spacings, count).to_vec()).map_err(fail)?;
        let rho = build_rdm(&m.0, &arr, tol).map_err(fail)?;
        write(out, Box::into_raw(Box::new(XyentState(rho))), "out")
    })
}

/// State from a row-major `dim × dim` matrix, `dim` a power of two.
///
/// # Safety
/// `data` must point to `dim * dim` values and `out` must be valid; free the
/// result with [`xyent_state_free`].
#[no_mangle]
pub unsafe extern "C" fn xyent_state_from_matrix(data: *const f64, dim: usize, out: *mut *mut XyentState) -> XyentStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let n = dim.checked_mul(dim).ok_or_else(|| fail(Error::InvalidParameter("dimension overflow".into())))?;
        let values = std::slice::from_raw_parts(data, n);
        let m = xyent::nalgebra::DMatrix::from_row_slice(dim, dim, values);
        let rho = DensityMatrix::from_matrix(m).map_err(fail)?;
        let report = xyent::rdm::validate_state(&rho, 1e-8);
        if !report.passed {
            return Err(fail(Error::Unphysical {
                trace_deviation: report.trace_deviation,
                asymmetry: report.asymmetry,
                min_eigenvalue: report.min_eigenvalue,
            }));
        }
        write(out, Box::into_raw(Box::new(XyentState(rho))), "out")
    })
}

/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xyent_state_free(state: *mut XyentState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of qubits of a state, 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xyent_state_parties(state: *const XyentState) -> usize {
    state.as_ref().map_or(0, |s| s.0.parties())
}

/// Copies the matrix row-major into `buf`, which must hold `dim²` values.
///
/// # Safety
/// `state` must be a live handle and `buf` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn xyent_state_matrix(state: *const XyentState, buf: *mut f64, len: usize) -> XyentStatus {
    guard(|| {
        let s = deref(state, "state")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let d = s.0.dim();
        if len < d * d {
            set_error(format!("buffer holds {len} values, need {}", d * d));
            return Err(XyentStatus::BufferTooSmall);
        }
        let m = s.0.matrix();
        for r in 0..d {
            for c in 0..d {
                *buf.add(r * d + c) = m[(r, c)];
            }
        }
        Ok(())
    })
}

/// Genuine multiparticle negativity with SDP tolerance `tol`.
///
/// # Safety
/// `state` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xyent_genuine_negativity(state: *const XyentState, tol: f64, out: *mut XyentNegativity) -> XyentStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let settings = Settings {
            tol,
            ..Settings::default()
        };
        let res = genuine_negativity_with(&s.0, &settings).map_err(fail)?;
        let v = XyentNegativity {
            value: res.value,
            duality_gap: res.duality_gap,
            iterations: res.iterations,
            optimal: c_int::from(res.status == xyent::gmn::SolveStatus::Optimal),
        };
        write(out, v, "out")
    })
}

/// Four-qubit concurrence of a four-qubit state.
///
/// # Safety
/// `state` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn xyent_c4(state: *const XyentState, out: *mut f64) -> XyentStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let v = c4_mixed(&s.0).map_err(fail)?;
        write(out, v, "out")
    })
}

/// Searches for a biseparable decomposition. Returns `Ok` with a checked
/// certificate, `Inconclusive` when none was found. `iterations` may be null.
///
/// # Safety
/// `state` must be a live handle; `iterations` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn xyent_certify_biseparable(
    state: *const XyentState,
    seed: u64,
    max_iter: usize,
    iterations: *mut usize,
) -> XyentStatus {
    guard(|| {
        let s = deref(state, "state")?;
        let opts = SeparabilityOptions {
            seed,
            max_iter,
            ..SeparabilityOptions::default()
        };
        let outcome = certify_biseparable(&s.0, &opts).map_err(fail)?;
        let iters = match &outcome {
            xyent::separability::SeparabilityOutcome::Certified(c) => c.iterations,
            xyent::separability::SeparabilityOutcome::Inconclusive { iterations, .. } => *iterations,
        };
        if !iterations.is_null() {
            iterations.write(iters);
        }
        match outcome.certificate() {
            Some(cert) => {
                let check = check_certificate(cert, &s.0, 1e-8);
                if check.valid {
                    Ok(())
                } else {
                    Err(fail(Error::Numerical(check.messages.join("; "))))
                }
            }
            None => {
                set_error("no certificate found".into());
                Err(XyentStatus::Inconclusive)
            }
        }
    })
}
