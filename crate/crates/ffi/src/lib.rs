//! C interface to the open-stirap simulator.
//!
//! Objects are opaque handles created by `os_*_new` style functions and
//! released with the matching `os_*_free`. Every fallible function returns
//! an [`OsStatus`]; on failure a description is available from
//! [`os_last_error_message`] on the same thread until the next failure.
//! Output buffers are caller-allocated with their capacity passed
//! alongside; a too-small buffer yields `OS_STATUS_BUFFER_TOO_SMALL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use open_stirap::liouvillian::{LiouvillianAffine, LossCase, StirapGenerator};
use open_stirap::propagator::{evolve_bloch, IntegratorConfig, Trajectory};
use open_stirap::spectral::{self, SpectralDecomposition};
use open_stirap::stirap::{dark_bloch, ConstantCouplings, PulseSchedule};
use open_stirap::Error;

/// No loss.
pub const OS_CASE_CLOSED: u32 = 0;
/// Dephasing of the two ground levels, `L = |1><1| - |3><3|`.
pub const OS_CASE_DEPHASING: u32 = 1;
/// Independent decay of the excited level into each ground level.
pub const OS_CASE_EMISSION: u32 = 2;
/// Decay into a coherent superposition, `L = |1><2| + |3><2|`.
pub const OS_CASE_COHERENT_EMISSION: u32 = 3;

/// Bloch vector length of the three-level system.
pub const OS_BLOCH_LEN: usize = 8;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    /// Eigen-solver failure, ill-conditioning or secular growth.
    Numerical = 4,
    /// Integrator step-size underflow (stiff problem).
    Stiff = 5,
    /// Unexpected internal failure; the message carries details.
    Internal = 6,
}

/// Gaussian pulse pair and integration settings for a single run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsStirapParams {
    /// One of the `OS_CASE_*` constants.
    pub loss_case: u32,
    pub gamma: f64,
    pub g0: f64,
    pub a: f64,
    pub tau: f64,
    pub sigma: f64,
    pub delta: f64,
    pub t0: f64,
    pub t1: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of output samples, end points included.
    pub samples: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OsObservables {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// `p1 - p3`.
    pub z: f64,
    pub purity: f64,
}

/// Affine Bloch generator `dR/dt = M R + b` at fixed parameters.
pub struct OsGenerator {
    inner: LiouvillianAffine,
}

/// Eigendecomposition of a generator matrix.
pub struct OsSpectrum {
    inner: SpectralDecomposition,
}

/// Sampled Bloch trajectory with observables.
pub struct OsTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: OsStatus, msg: impl Into<String>) -> OsStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> OsStatus {
    let status = match &e {
        Error::InvalidDimension(_)
        | Error::Validation(_)
        | Error::InvalidRate(_)
        | Error::DegenerateFrame
        | Error::Config(_) => OsStatus::InvalidArgument,
        Error::NoConvergence { .. }
        | Error::EmptySpectrum
        | Error::IllConditioned { .. }
        | Error::SecularGrowth { .. } => OsStatus::Numerical,
        Error::StepSizeUnderflow { .. } => OsStatus::Stiff,
        _ => OsStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into `OsStatus::Internal`.
fn guard<F: FnOnce() -> OsStatus>(f: F) -> OsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(OsStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn loss_case(code: u32) -> Result<LossCase, OsStatus> {
    match code {
        OS_CASE_CLOSED => Ok(LossCase::Closed),
        OS_CASE_DEPHASING => Ok(LossCase::Dephasing),
        OS_CASE_EMISSION => Ok(LossCase::Emission),
        OS_CASE_COHERENT_EMISSION => Ok(LossCase::coherent_emission()),
        other => Err(fail(OsStatus::InvalidArgument, format!("unknown loss case {other}"))),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(OsStatus::NullPointer, concat!("argument '", stringify!($p), "' is null"));
        })+
    };
}

macro_rules! try_os {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

/// Copies `src` into a caller buffer of capacity `cap`.
///
/// # Safety
/// `dst` must be valid for `cap` writes.
unsafe fn copy_out(src: &[f64], dst: *mut f64, cap: usize) -> OsStatus {
    if cap < src.len() {
        return fail(OsStatus::BufferTooSmall, format!("buffer holds {cap} values, need {}", src.len()));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    OsStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn os_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn os_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Forgets the last error message.
#[no_mangle]
pub extern "C" fn os_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn os_status_name(status: OsStatus) -> *const c_char {
    let s: &CStr = match status {
        OsStatus::Ok => c"ok",
        OsStatus::NullPointer => c"null pointer",
        OsStatus::InvalidArgument => c"invalid argument",
        OsStatus::BufferTooSmall => c"buffer too small",
        OsStatus::Numerical => c"numerical failure",
        OsStatus::Stiff => c"stiff problem",
        OsStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Default parameters: closed system, `g0 = 1`, `a = 1`, `tau = sigma = 10`,
/// `t` in `[-100, 100]`, 1001 samples.
#[no_mangle]
pub extern "C" fn os_stirap_params_default() -> OsStirapParams {
    let s = PulseSchedule::default();
    let c = IntegratorConfig::default();
    OsStirapParams {
        loss_case: OS_CASE_CLOSED,
        gamma: 0.0,
        g0: s.g0,
        a: s.a,
        tau: s.tau,
        sigma: s.sigma,
        delta: s.delta,
        t0: -100.0,
        t1: 100.0,
        rel_tol: c.rel_tol,
        abs_tol: c.abs_tol,
        samples: c.samples,
    }
}

/// Generator at constant couplings.
///
/// # Safety
/// `out` must be a valid pointer; on success it receives a handle to be
/// released with `os_generator_free`.
#[no_mangle]
pub unsafe extern "C" fn os_generator_new_constant(
    loss: u32,
    gamma: f64,
    g1: f64,
    g2: f64,
    delta: f64,
    out: *mut *mut OsGenerator,
) -> OsStatus {
    guard(|| {
        non_null!(out);
        let case = match loss_case(loss) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if ![gamma, g1, g2, delta].iter().all(|x| x.is_finite()) {
            return fail(OsStatus::InvalidArgument, "parameters must be finite");
        }
        let gen = try_os!(StirapGenerator::new(ConstantCouplings { g1, g2, delta }, &case, gamma));
        *out = Box::into_raw(Box::new(OsGenerator { inner: gen.at(0.0) }));
        OsStatus::Ok
    })
}

/// Generator of the pulse schedule in `params` at time `t`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn os_generator_new_at(
    params: *const OsStirapParams,
    t: f64,
    out: *mut *mut OsGenerator,
) -> OsStatus {
    guard(|| {
        non_null!(params, out);
        let p = &*params;
        let case = match loss_case(p.loss_case) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let sched = try_os!(PulseSchedule::new(p.g0, p.a, p.tau, p.sigma, p.delta));
        let gen = try_os!(StirapGenerator::new(sched, &case, p.gamma));
        *out = Box::into_raw(Box::new(OsGenerator { inner: gen.at(t) }));
        OsStatus::Ok
    })
}

/// # Safety
/// `gen` must come from an `os_generator_new_*` call and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn os_generator_free(gen: *mut OsGenerator) {
    if !gen.is_null() {
        drop(Box::from_raw(gen));
    }
}

/// Bloch vector length `n`; `M` is `n x n`.
///
/// # Safety
/// `gen` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn os_generator_len(gen: *const OsGenerator) -> usize {
    gen.as_ref().map_or(0, |g| g.inner.len())
}

/// Copies `M` (row-major, `n * n` values) and `b` (`n` values).
///
/// # Safety
/// `gen` must be a live handle; `m` and `b` valid for `m_cap` and `b_cap`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn os_generator_copy(
    gen: *const OsGenerator,
    m: *mut f64,
    m_cap: usize,
    b: *mut f64,
    b_cap: usize,
) -> OsStatus {
    guard(|| {
        non_null!(gen, m, b);
        let g = &(*gen).inner;
        let n = g.len();
        let rows: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g.m[(i, j)]).collect();
        let s = copy_out(&rows, m, m_cap);
        if s != OsStatus::Ok {
            return s;
        }
        copy_out(g.b.as_slice(), b, b_cap)
    })
}

/// Stationary Bloch vector `-M^{-1} b`. When `M` is singular the
/// particular least-squares solution is written and `*unique` is set to 0.
///
/// # Safety
/// `gen` must be a live handle; `r` valid for `cap` writes; `unique` valid.
#[no_mangle]
pub unsafe extern "C" fn os_generator_steady_state(
    gen: *const OsGenerator,
    r: *mut f64,
    cap: usize,
    unique: *mut i32,
) -> OsStatus {
    guard(|| {
        non_null!(gen, r, unique);
        let ss = spectral::steady_state(&(*gen).inner);
        *unique = ss.is_unique() as i32;
        copy_out(ss.vector().as_slice(), r, cap)
    })
}

/// Eigendecomposition of the generator matrix.
///
/// # Safety
/// `gen` must be a live handle and `out` valid; release the result with
/// `os_spectrum_free`.
#[no_mangle]
pub unsafe extern "C" fn os_spectrum_new(gen: *const OsGenerator, out: *mut *mut OsSpectrum) -> OsStatus {
    guard(|| {
        non_null!(gen, out);
        let spec = try_os!(spectral::eigendecompose(&(*gen).inner.m));
        *out = Box::into_raw(Box::new(OsSpectrum { inner: spec }));
        OsStatus::Ok
    })
}

/// # Safety
/// `spec` must come from `os_spectrum_new` and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn os_spectrum_free(spec: *mut OsSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of eigenvalues.
///
/// # Safety
/// `spec` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn os_spectrum_len(spec: *const OsSpectrum) -> usize {
    spec.as_ref().map_or(0, |s| s.inner.len())
}

/// Real and imaginary parts of the eigenvalues, sorted by decreasing real
/// part, together with per-eigenvalue condition numbers. `cond` may be
/// null.
///
/// # Safety
/// `spec` must be a live handle; `re`, `im` (and `cond` if non-null) valid
/// for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn os_spectrum_eigenvalues(
    spec: *const OsSpectrum,
    re: *mut f64,
    im: *mut f64,
    cond: *mut f64,
    cap: usize,
) -> OsStatus {
    guard(|| {
        non_null!(spec, re, im);
        let s = &(*spec).inner;
        let (r, i): (Vec<f64>, Vec<f64>) = s.eigenvalues.iter().map(|z| (z.re, z.im)).unzip();
        for (src, dst) in [(&r, re), (&i, im)] {
            let st = copy_out(src, dst, cap);
            if st != OsStatus::Ok {
                return st;
            }
        }
        if !cond.is_null() {
            return copy_out(&s.condition, cond, cap);
        }
        OsStatus::Ok
    })
}

/// Liouvillian gap: smallest decay rate among the non-zero modes.
///
/// # Safety
/// `spec` and `gap` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn os_spectrum_gap(spec: *const OsSpectrum, gap: *mut f64) -> OsStatus {
    guard(|| {
        non_null!(spec, gap);
        *gap = try_os!(spectral::liouvillian_gap(&(*spec).inner, spectral::ZERO_TOL));
        OsStatus::Ok
    })
}

fn run(p: &OsStirapParams) -> Result<Trajectory, OsStatus> {
    let case = loss_case(p.loss_case)?;
    let sched = PulseSchedule::new(p.g0, p.a, p.tau, p.sigma, p.delta).map_err(from_error)?;
    let cfg = IntegratorConfig {
        rel_tol: p.rel_tol,
        abs_tol: p.abs_tol,
        samples: p.samples,
        ..IntegratorConfig::default()
    }
    .for_schedule(&sched);
    let gen = StirapGenerator::new(sched, &case, p.gamma).map_err(from_error)?;
    evolve_bloch(&gen, &dark_bloch(0.0), (p.t0, p.t1), &cfg).map_err(from_error)
}

/// Integrates the pulse-driven dynamics from level 1.
///
/// # Safety
/// `params` and `out` must be valid; release the result with
/// `os_trajectory_free`.
#[no_mangle]
pub unsafe extern "C" fn os_evolve_stirap(params: *const OsStirapParams, out: *mut *mut OsTrajectory) -> OsStatus {
    guard(|| {
        non_null!(params, out);
        match run(&*params) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(OsTrajectory { inner: t }));
                OsStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Final target population of the pulse-driven dynamics.
///
/// # Safety
/// `params` and `p3` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn os_final_population(params: *const OsStirapParams, p3: *mut f64) -> OsStatus {
    guard(|| {
        non_null!(params, p3);
        match run(&*params) {
            Ok(t) => {
                *p3 = t.final_observables().p3;
                OsStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `traj` must come from `os_evolve_stirap` and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_free(traj: *mut OsTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of samples.
///
/// # Safety
/// `traj` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_len(traj: *const OsTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Sample times.
///
/// # Safety
/// `traj` must be a live handle and `times` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_times(traj: *const OsTrajectory, times: *mut f64, cap: usize) -> OsStatus {
    guard(|| {
        non_null!(traj, times);
        copy_out(&(*traj).inner.times, times, cap)
    })
}

/// Bloch vector at sample `index`.
///
/// # Safety
/// `traj` must be a live handle and `r` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_state(
    traj: *const OsTrajectory,
    index: usize,
    r: *mut f64,
    cap: usize,
) -> OsStatus {
    guard(|| {
        non_null!(traj, r);
        let t = &(*traj).inner;
        match t.states.get(index) {
            Some(s) => copy_out(s.as_slice(), r, cap),
            None => fail(OsStatus::InvalidArgument, format!("sample {index} out of range ({} samples)", t.len())),
        }
    })
}

/// Populations, imbalance and purity at sample `index`.
///
/// # Safety
/// `traj` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_observables(
    traj: *const OsTrajectory,
    index: usize,
    out: *mut OsObservables,
) -> OsStatus {
    guard(|| {
        non_null!(traj, out);
        let t = &(*traj).inner;
        match t.observables.get(index) {
            Some(o) => {
                *out = OsObservables { p1: o.p1, p2: o.p2, p3: o.p3, z: o.z, purity: o.purity };
                OsStatus::Ok
            }
            None => fail(OsStatus::InvalidArgument, format!("sample {index} out of range ({} samples)", t.len())),
        }
    })
}

/// Largest purity and smallest density-matrix eigenvalue over all samples.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn os_trajectory_check(
    traj: *const OsTrajectory,
    max_purity: *mut f64,
    min_eigenvalue: *mut f64,
) -> OsStatus {
    guard(|| {
        non_null!(traj, max_purity, min_eigenvalue);
        let c = (*traj).inner.check();
        *max_purity = c.max_purity;
        *min_eigenvalue = c.min_eigenvalue;
        OsStatus::Ok
    })
}

/// Dark-state Bloch vector at mixing angle `theta`.
///
/// # Safety
/// `r` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn os_dark_bloch(theta: f64, r: *mut f64, cap: usize) -> OsStatus {
    guard(|| {
        non_null!(r);
        copy_out(dark_bloch(theta).as_slice(), r, cap)
    })
}
