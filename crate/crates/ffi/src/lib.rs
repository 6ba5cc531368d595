//! C ABI over `condensim`.
//!
//! Objects are opaque handles created by `cs_*_new`/`cs_*_solve` and released
//! with the matching `cs_*_free`. Every fallible call returns a [`CsStatus`];
//! the message of the last failure on the calling thread is available from
//! [`cs_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use condensim::meanfield::{self, MeanFieldParams, MeanFieldSolution};
use condensim::seed;
use condensim::state::{sample_initial, InitScheme};
use condensim::tagged::TaggedSimulator;
use condensim::{Error, RateKernel};
use rand_chacha::ChaCha8Rng;

/// Status codes. Values 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerical = 3,
    Invariant = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

pub struct CsKernel(RateKernel);

pub struct CsMeanField(MeanFieldSolution);

pub struct CsTagged {
    sim: TaggedSimulator,
    rng: ChaCha8Rng,
    time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CsStatus {
    match e.exit_code() {
        2 => CsStatus::Config,
        4 => CsStatus::Invariant,
        _ => CsStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CsStatus>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside condensim".into());
            CsStatus::Panic
        }
    }
}

fn fail(e: Error) -> CsStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> CsStatus {
    set_error("null pointer argument".into());
    CsStatus::NullPointer
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn cs_derive_seed(master: u64, index: u64) -> u64 {
    seed::derive_seed(master, index)
}

fn new_kernel(k: condensim::Result<RateKernel>, out: *mut *mut CsKernel) -> CsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let k = k.map_err(fail)?;
        // SAFETY: checked non-null; caller provides writable storage.
        unsafe { *out = Box::into_raw(Box::new(CsKernel(k))) };
        Ok(())
    })
}

/// `c(k, l) = k`.
#[no_mangle]
pub extern "C" fn cs_kernel_independent(out: *mut *mut CsKernel) -> CsStatus {
    new_kernel(Ok(RateKernel::independent_walkers()), out)
}

/// `c(k, l) = 1 + b / k` for `k >= 1`.
#[no_mangle]
pub extern "C" fn cs_kernel_zero_range(b: f64, out: *mut *mut CsKernel) -> CsStatus {
    new_kernel(RateKernel::zero_range(b), out)
}

/// `c(k, l) = k (d + l)`.
#[no_mangle]
pub extern "C" fn cs_kernel_inclusion(d: f64, out: *mut *mut CsKernel) -> CsStatus {
    new_kernel(RateKernel::inclusion(d), out)
}

/// # Safety
/// `kernel` must come from a `cs_kernel_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cs_kernel_free(kernel: *mut CsKernel) {
    if !kernel.is_null() {
        drop(unsafe { Box::from_raw(kernel) });
    }
}

/// # Safety
/// `kernel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_kernel_rate(kernel: *const CsKernel, k: usize, l: usize, out: *mut f64) -> CsStatus {
    guard(|| {
        let (Some(kernel), false) = (unsafe { kernel.as_ref() }, out.is_null()) else {
            return Err(null());
        };
        let v = kernel.0.evaluate(k, l).map_err(fail)?;
        unsafe { *out = v };
        Ok(())
    })
}

/// Solves the mean-field equations from Poisson(`rho`) on `[0, t_max]`,
/// storing the solution every `dt`.
///
/// # Safety
/// `kernel` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_meanfield_solve(
    kernel: *const CsKernel,
    rho: f64,
    t_max: f64,
    dt: f64,
    tol: f64,
    out: *mut *mut CsMeanField,
) -> CsStatus {
    guard(|| {
        let (Some(kernel), false) = (unsafe { kernel.as_ref() }, out.is_null()) else {
            return Err(null());
        };
        if !(t_max >= 0.0 && dt > 0.0 && t_max.is_finite()) {
            return Err(fail(Error::InvalidParameter(format!("t_max = {t_max}, dt = {dt}"))));
        }
        let n = ((t_max / dt).ceil() as usize).max(1);
        let grid: Vec<f64> = (0..=n).map(|i| if i == n { t_max } else { i as f64 * t_max / n as f64 }).collect();
        let params = MeanFieldParams {
            tol,
            ..MeanFieldParams::default()
        };
        let f0 = meanfield::poisson(rho).map_err(fail)?;
        let sol = meanfield::integrate(&f0, &kernel.0, &grid, params).map_err(fail)?;
        unsafe { *out = Box::into_raw(Box::new(CsMeanField(sol))) };
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`cs_meanfield_solve`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cs_meanfield_free(sol: *mut CsMeanField) {
    if !sol.is_null() {
        drop(unsafe { Box::from_raw(sol) });
    }
}

/// Writes `f_k(t)` for `k < cap` into `buf` and the number of classes into
/// `len`. Returns `BufferTooSmall` with `len` set when `cap` is short.
///
/// # Safety
/// `buf` must hold `cap` doubles; `sol` must be live and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_meanfield_f_at(
    sol: *const CsMeanField,
    t: f64,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> CsStatus {
    guard(|| {
        let (Some(sol), false) = (unsafe { sol.as_ref() }, len.is_null()) else {
            return Err(null());
        };
        let f = sol.0.f_at(t).map_err(fail)?;
        unsafe { *len = f.len() };
        if f.len() > cap {
            set_error(format!("buffer holds {cap} values, {} needed", f.len()));
            return Err(CsStatus::BufferTooSmall);
        }
        if buf.is_null() {
            return Err(null());
        }
        unsafe { ptr::copy_nonoverlapping(f.as_ptr(), buf, f.len()) };
        Ok(())
    })
}

/// `sum_k k^n f_k(t)`.
///
/// # Safety
/// `sol` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_meanfield_moment(sol: *const CsMeanField, t: f64, n: i32, out: *mut f64) -> CsStatus {
    guard(|| {
        let (Some(sol), false) = (unsafe { sol.as_ref() }, out.is_null()) else {
            return Err(null());
        };
        let f = sol.0.f_at(t).map_err(fail)?;
        unsafe { *out = meanfield::moment(&f, n) };
        Ok(())
    })
}

/// Tagged simulator on `sites` sites with `particles` particles, seeded with
/// `seed`. The tagged particle starts on site 1.
///
/// # Safety
/// `kernel` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tagged_new(
    kernel: *const CsKernel,
    sites: u64,
    particles: u64,
    seed: u64,
    out: *mut *mut CsTagged,
) -> CsStatus {
    guard(|| {
        let (Some(kernel), false) = (unsafe { kernel.as_ref() }, out.is_null()) else {
            return Err(null());
        };
        let mut rng = seed::path_rng(seed, 0);
        let st = sample_initial(sites, particles, InitScheme::default(), &mut rng).map_err(fail)?;
        let sim = TaggedSimulator::new(st, kernel.0.clone()).map_err(fail)?;
        unsafe { *out = Box::into_raw(Box::new(CsTagged { sim, rng, time: 0.0 })) };
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`cs_tagged_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cs_tagged_free(sim: *mut CsTagged) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Runs the simulator forward by `dt` and writes the tagged occupation.
///
/// # Safety
/// `sim` must be live and `w` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_tagged_advance(sim: *mut CsTagged, dt: f64, w: *mut u64) -> CsStatus {
    guard(|| {
        let (Some(sim), false) = (unsafe { sim.as_mut() }, w.is_null()) else {
            return Err(null());
        };
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(fail(Error::InvalidParameter(format!("dt = {dt}"))));
        }
        let tr = sim.sim.simulate(dt, &[dt], &mut sim.rng).map_err(fail)?;
        sim.time += dt;
        unsafe { *w = tr.w[0] };
        Ok(())
    })
}

/// Time reached by [`cs_tagged_advance`]; NaN for a null handle.
///
/// # Safety
/// `sim` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn cs_tagged_time(sim: *const CsTagged) -> f64 {
    unsafe { sim.as_ref() }.map_or(f64::NAN, |s| s.time)
}
