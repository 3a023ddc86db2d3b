//! C interface to `relaxbv`.
//!
//! Densities are opaque handles created from a catalog name or an
//! expression and released with [`rbv_density_free`]. Every fallible call
//! returns an [`RbvStatus`]; on failure the message is available from
//! [`rbv_last_error_message`] on the same thread. Vector arguments are
//! borrowed `double` arrays whose lengths follow from the density's
//! dimensions (`x`: N, `u`: d, `b`: m, `xi`: d·N row-major, `nu`: N).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use relaxbv::cell::SolverSettings;
use relaxbv::density::{catalog, recession_infty, recession_p, Dimensions, Exponent, Integrand, Point, Schedule};
use relaxbv::envelope::{cq_envelope, EnvelopeProblem};
use relaxbv::surface::{closed_form_k, solve_kinfty, solve_kp, solve_kr, JumpData};
use relaxbv::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidDimensions = 4,
    DimensionMismatch = 5,
    UnknownDensity = 6,
    Expression = 7,
    NonfiniteValue = 8,
    AllStartsFailed = 9,
    NonunitNormal = 10,
    DegenerateNormal = 11,
    UDependentDensity = 12,
    Other = 13,
    Panic = 14,
}

impl From<&Error> for RbvStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => RbvStatus::InvalidArgument,
            Error::InvalidDimensions(_) => RbvStatus::InvalidDimensions,
            Error::DimensionMismatch { .. } => RbvStatus::DimensionMismatch,
            Error::UnknownDensity(_) => RbvStatus::UnknownDensity,
            Error::Expression(_) => RbvStatus::Expression,
            Error::NonfiniteValue { .. } => RbvStatus::NonfiniteValue,
            Error::AllStartsFailed => RbvStatus::AllStartsFailed,
            Error::NonunitNormal { .. } => RbvStatus::NonunitNormal,
            Error::DegenerateNormal => RbvStatus::DegenerateNormal,
            Error::UDependentDensity => RbvStatus::UDependentDensity,
            _ => RbvStatus::Other,
        }
    }
}

/// Which recession function to use.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbvRecession {
    /// `(p, 1)`-recession, `1 < p < ∞`.
    P = 0,
    /// Standard recession, `p = ∞`.
    Infinity = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbvCellKind {
    Kp = 0,
    Kinfinity = 1,
    Kr = 2,
}

/// Opaque density handle.
pub struct RbvDensity {
    inner: Integrand,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbvDims {
    pub space_dim: usize,
    pub target_dim: usize,
    pub field_dim: usize,
    /// `INFINITY` for `p = ∞`.
    pub exponent: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbvSolverSettings {
    pub grid_n: usize,
    pub multistart: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbvEnvelopeResult {
    pub value: f64,
    pub f_value: f64,
    pub grid_n: usize,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbvCellResult {
    pub value: f64,
    pub err_est: f64,
    pub residual: f64,
    pub grid_n: usize,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F>(body: F) -> RbvStatus
where
    F: FnOnce() -> Result<(), (RbvStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RbvStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside relaxbv".into());
            RbvStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (RbvStatus, String)>;
}

impl<T> IntoFfi<T> for relaxbv::Result<T> {
    fn ffi(self) -> Result<T, (RbvStatus, String)> {
        self.map_err(|e| (RbvStatus::from(&e), e.to_string()))
    }
}

fn null(what: &str) -> (RbvStatus, String) {
    (RbvStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (RbvStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (RbvStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

/// Copies `len` values; a null pointer is accepted only for `len == 0`.
unsafe fn array(ptr: *const f64, len: usize, what: &str) -> Result<Vec<f64>, (RbvStatus, String)> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len).to_vec())
}

unsafe fn handle<'a>(d: *const RbvDensity) -> Result<&'a Integrand, (RbvStatus, String)> {
    d.as_ref().map(|h| &h.inner).ok_or_else(|| null("density"))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, (RbvStatus, String)> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn dims(space_dim: usize, target_dim: usize, field_dim: usize, exponent: f64) -> relaxbv::Result<Dimensions> {
    let p = if exponent.is_infinite() && exponent > 0.0 { Exponent::Infinity } else { Exponent::Finite(exponent) };
    Dimensions::new(space_dim, target_dim, field_dim, p)
}

unsafe fn point(f: &Integrand, x: *const f64, u: *const f64, b: *const f64, xi: *const f64) -> Result<Point, (RbvStatus, String)> {
    let d = f.dims();
    Ok(Point::new(
        array(x, d.space_dim, "x")?,
        array(u, d.target_dim, "u")?,
        array(b, d.field_dim, "b")?,
        array(xi, d.xi_len(), "xi")?,
    ))
}

fn settings(s: *const RbvSolverSettings) -> SolverSettings {
    // SAFETY: callers pass null or a valid pointer
    match unsafe { s.as_ref() } {
        Some(s) => SolverSettings { grid_n: s.grid_n, multistart: s.multistart, seed: s.seed, ..Default::default() },
        None => SolverSettings::default(),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rbv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rbv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Default cell solver settings.
#[no_mangle]
pub extern "C" fn rbv_solver_settings_default() -> RbvSolverSettings {
    let s = SolverSettings::default();
    RbvSolverSettings { grid_n: s.grid_n, multistart: s.multistart, seed: s.seed }
}

/// Creates a catalog density. `exponent` may be `INFINITY`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rbv_density_catalog(
    name: *const c_char,
    space_dim: usize,
    target_dim: usize,
    field_dim: usize,
    exponent: f64,
    out_density: *mut *mut RbvDensity,
) -> RbvStatus {
    guard(|| {
        let name = text(name, "name")?;
        let slot = out(out_density, "out_density")?;
        let f = catalog(name, dims(space_dim, target_dim, field_dim, exponent).ffi()?).ffi()?;
        *slot = Box::into_raw(Box::new(RbvDensity { inner: f }));
        Ok(())
    })
}

/// Creates a density from an expression in `x`, `u`, `b`, `xi` and `p`.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rbv_density_expression(
    source: *const c_char,
    space_dim: usize,
    target_dim: usize,
    field_dim: usize,
    exponent: f64,
    out_density: *mut *mut RbvDensity,
) -> RbvStatus {
    guard(|| {
        let source = text(source, "source")?;
        let slot = out(out_density, "out_density")?;
        let f = Integrand::from_expression(source, dims(space_dim, target_dim, field_dim, exponent).ffi()?).ffi()?;
        *slot = Box::into_raw(Box::new(RbvDensity { inner: f }));
        Ok(())
    })
}

/// Releases a density; null is ignored.
///
/// # Safety
/// `density` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rbv_density_free(density: *mut RbvDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// # Safety
/// `density` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rbv_density_dims(density: *const RbvDensity, out_dims: *mut RbvDims) -> RbvStatus {
    guard(|| {
        let d = handle(density)?.dims();
        *out(out_dims, "out_dims")? = RbvDims {
            space_dim: d.space_dim,
            target_dim: d.target_dim,
            field_dim: d.field_dim,
            exponent: d.exponent.as_f64(),
        };
        Ok(())
    })
}

/// `f(x, u, b, ξ)`.
///
/// # Safety
/// Arrays must hold the lengths given by the density's dimensions.
#[no_mangle]
pub unsafe extern "C" fn rbv_density_eval(
    density: *const RbvDensity,
    x: *const f64,
    u: *const f64,
    b: *const f64,
    xi: *const f64,
    out_value: *mut f64,
) -> RbvStatus {
    guard(|| {
        let f = handle(density)?;
        let pt = point(f, x, u, b, xi)?;
        *out(out_value, "out_value")? = f.evaluate_at(&pt).ffi()?;
        Ok(())
    })
}

/// Recession function of the density at `(x, u, b, ξ)`.
///
/// # Safety
/// As [`rbv_density_eval`].
#[no_mangle]
pub unsafe extern "C" fn rbv_recession_eval(
    density: *const RbvDensity,
    kind: RbvRecession,
    x: *const f64,
    u: *const f64,
    b: *const f64,
    xi: *const f64,
    out_value: *mut f64,
) -> RbvStatus {
    guard(|| {
        let f = handle(density)?;
        let pt = point(f, x, u, b, xi)?;
        let rec = match kind {
            RbvRecession::P => recession_p(f, &Schedule::default()),
            RbvRecession::Infinity => recession_infty(f, &Schedule::default()),
        }
        .ffi()?;
        *out(out_value, "out_value")? = rec.evaluate(&pt.x, &pt.u, &pt.b, &pt.xi).ffi()?;
        Ok(())
    })
}

/// Convex-quasiconvex envelope at `(x, u, b, ξ)`. `settings` may be null.
///
/// # Safety
/// As [`rbv_density_eval`].
#[no_mangle]
pub unsafe extern "C" fn rbv_cq_envelope(
    density: *const RbvDensity,
    x: *const f64,
    u: *const f64,
    b: *const f64,
    xi: *const f64,
    settings_ptr: *const RbvSolverSettings,
    out_result: *mut RbvEnvelopeResult,
) -> RbvStatus {
    guard(|| {
        let f = handle(density)?;
        let pt = point(f, x, u, b, xi)?;
        let slot = out(out_result, "out_result")?;
        let prob = EnvelopeProblem::new(f, pt).with_settings(&settings(settings_ptr));
        let sol = cq_envelope(&prob).ffi()?;
        *slot = RbvEnvelopeResult { value: sol.value, f_value: sol.f_value, grid_n: sol.grid_n, converged: sol.converged };
        Ok(())
    })
}

unsafe fn jump(
    f: &Integrand,
    x: *const f64,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    nu: *const f64,
) -> Result<JumpData, (RbvStatus, String)> {
    let dm = f.dims();
    Ok(JumpData {
        x: array(x, dm.space_dim, "x")?,
        b: array(b, dm.field_dim, "b")?,
        c: array(c, dm.target_dim, "c")?,
        d: array(d, dm.target_dim, "d")?,
        nu: array(nu, dm.space_dim, "nu")?,
    })
}

/// Jump cell problem `K_p`, `K_∞` or `K_r` (with `r`) at `(x, b, c, d, ν)`.
/// `settings` may be null.
///
/// # Safety
/// `x`, `nu` hold N values, `b` m values, `c`, `d` d values.
#[no_mangle]
pub unsafe extern "C" fn rbv_surface_density(
    density: *const RbvDensity,
    kind: RbvCellKind,
    x: *const f64,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    nu: *const f64,
    r: f64,
    settings_ptr: *const RbvSolverSettings,
    out_result: *mut RbvCellResult,
) -> RbvStatus {
    guard(|| {
        let f = handle(density)?;
        let jd = jump(f, x, b, c, d, nu)?;
        let slot = out(out_result, "out_result")?;
        let s = settings(settings_ptr);
        let sol = match kind {
            RbvCellKind::Kp => solve_kp(&recession_p(f, &Schedule::default()).ffi()?, &jd, &s),
            RbvCellKind::Kinfinity => solve_kinfty(&recession_infty(f, &Schedule::default()).ffi()?, &jd, &s),
            RbvCellKind::Kr => solve_kr(&recession_infty(f, &Schedule::default()).ffi()?, &jd, r, &s),
        }
        .ffi()?;
        *slot = RbvCellResult {
            value: sol.value,
            err_est: sol.err_est,
            residual: sol.residual,
            grid_n: sol.grid_n,
            converged: sol.converged,
        };
        Ok(())
    })
}

/// `f^∞(x, b, (c − d) ⊗ ν)` for densities without explicit `u`-dependence.
///
/// # Safety
/// As [`rbv_surface_density`].
#[no_mangle]
pub unsafe extern "C" fn rbv_closed_form_k(
    density: *const RbvDensity,
    kind: RbvRecession,
    x: *const f64,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    nu: *const f64,
    out_value: *mut f64,
) -> RbvStatus {
    guard(|| {
        let f = handle(density)?;
        let jd = jump(f, x, b, c, d, nu)?;
        let rec = match kind {
            RbvRecession::P => recession_p(f, &Schedule::default()),
            RbvRecession::Infinity => recession_infty(f, &Schedule::default()),
        }
        .ffi()?;
        *out(out_value, "out_value")? = closed_form_k(&rec, &jd).ffi()?;
        Ok(())
    })
}
