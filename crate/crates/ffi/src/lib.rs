//! C interface to `randwidth`.
//!
//! Every function returns an [`RwStatus`]; on failure a message is kept per
//! thread and can be read with [`rw_last_error`]. Results go through out
//! pointers. Handles are created by `*_new`/`*_sample` functions and released
//! with the matching `*_free`, which accepts null.
//!
//! Array arguments are `(pointer, length)` pairs; a null pointer is allowed
//! only with length 0.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use randwidth::lawcheck::{arbitrary_lower_bound, fit_rate};
use randwidth::orlicz::{luxemburg_norm, OrliczFn};
use randwidth::polytope::{f_estimate, mean_width_mc, support};
use randwidth::randsrc::{
    make_rng, sample_isotropic, IsotropicFamily, IsotropicModel, Perturbation, PointCloud, RngState,
};
use randwidth::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Regime = 4,
    Numeric = 5,
    Panic = 6,
}

/// Isotropic coordinate law of a point cloud.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwFamily {
    Gaussian = 0,
    Cube = 1,
    Laplace = 2,
}

impl From<RwFamily> for IsotropicFamily {
    fn from(f: RwFamily) -> Self {
        match f {
            RwFamily::Gaussian => IsotropicFamily::Gaussian,
            RwFamily::Cube => IsotropicFamily::Cube,
            RwFamily::Laplace => IsotropicFamily::Laplace,
        }
    }
}

/// Seeded random stream.
pub struct RwRng {
    inner: RngState,
}

/// Point cloud of `len` rows in dimension `dim`.
pub struct RwCloud {
    inner: PointCloud,
}

/// Orlicz function.
pub struct RwOrlicz {
    inner: OrliczFn,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => RwStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => RwStatus::DimensionMismatch,
            Error::Regime(_) => RwStatus::Regime,
            Error::Numeric(_) => RwStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RwStatus::NullPointer, format!("null pointer for `{what}`"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RwStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RwStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_rng_new(seed: u64, out: *mut *mut RwRng) -> RwStatus {
    guard(|| {
        let rng = Box::new(RwRng {
            inner: make_rng(seed),
        });
        put(out, Box::into_raw(rng), "out")
    })
}

/// Independent child stream `idx`; does not advance `rng`.
///
/// # Safety
/// `rng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_rng_substream(
    rng: *const RwRng,
    idx: u64,
    out: *mut *mut RwRng,
) -> RwStatus {
    guard(|| {
        let child = handle(rng, "rng")?.inner.substream(idx);
        put(out, Box::into_raw(Box::new(RwRng { inner: child })), "out")
    })
}

/// # Safety
/// `rng` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rw_rng_free(rng: *mut RwRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Draws `count` points of the isotropic model, advancing `rng`.
///
/// # Safety
/// `rng` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_cloud_sample(
    family: RwFamily,
    dim: usize,
    count: usize,
    rng: *mut RwRng,
    out: *mut *mut RwCloud,
) -> RwStatus {
    guard(|| {
        let rng = handle_mut(rng, "rng")?;
        let model = IsotropicModel::new(family.into(), dim)?;
        let cloud = sample_isotropic(model, count, &mut rng.inner)?;
        put(
            out,
            Box::into_raw(Box::new(RwCloud { inner: cloud })),
            "out",
        )
    })
}

/// Wraps `count` row-major rows of length `dim`.
///
/// # Safety
/// `rows` must point to `count * dim` readable doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_cloud_from_rows(
    family: RwFamily,
    dim: usize,
    count: usize,
    rows: *const f64,
    out: *mut *mut RwCloud,
) -> RwStatus {
    guard(|| {
        let model = IsotropicModel::new(family.into(), dim)?;
        let total = count
            .checked_mul(dim)
            .ok_or_else(|| Failure(RwStatus::InvalidArgument, "cloud size overflows".into()))?;
        let data = slice(rows, total, "rows")?;
        let rows: Vec<Vec<f64>> = data.chunks(dim).map(<[f64]>::to_vec).collect();
        let cloud = PointCloud::from_rows(model, &rows)?;
        put(
            out,
            Box::into_raw(Box::new(RwCloud { inner: cloud })),
            "out",
        )
    })
}

/// # Safety
/// `cloud` must be a live handle; `len` and `dim` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_cloud_shape(
    cloud: *const RwCloud,
    len: *mut usize,
    dim: *mut usize,
) -> RwStatus {
    guard(|| {
        let c = &handle(cloud, "cloud")?.inner;
        put(len, c.len(), "len")?;
        put(dim, c.dim(), "dim")
    })
}

/// # Safety
/// `cloud` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rw_cloud_free(cloud: *mut RwCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// `max_i |y_i <X_i, theta>|`.
///
/// # Safety
/// Arrays must be readable for their lengths; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_support(
    cloud: *const RwCloud,
    y: *const f64,
    y_len: usize,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> RwStatus {
    guard(|| {
        let cloud = &handle(cloud, "cloud")?.inner;
        let y = Perturbation::fixed(slice(y, y_len, "y")?.to_vec());
        let h = support(cloud, &y, slice(theta, theta_len, "theta")?)?;
        put(out, h, "out")
    })
}

/// Monte Carlo mean width of `K_{N,y}` over `directions` random directions,
/// advancing `rng`.
///
/// # Safety
/// `y` readable for `y_len`; `rng` a live handle; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_mean_width(
    cloud: *const RwCloud,
    y: *const f64,
    y_len: usize,
    directions: usize,
    rng: *mut RwRng,
    value: *mut f64,
    std_error: *mut f64,
) -> RwStatus {
    guard(|| {
        let cloud = &handle(cloud, "cloud")?.inner;
        let rng = handle_mut(rng, "rng")?;
        let y = Perturbation::fixed(slice(y, y_len, "y")?.to_vec());
        let w = mean_width_mc(cloud, &y, directions, &mut rng.inner)?;
        put(value, w.value, "value")?;
        put(std_error, w.std_error, "std_error")
    })
}

/// `f(y) = E_X w(K_{N,y})` with `N = y_len`, from `replicates` clouds and
/// `directions` directions each. Does not advance `rng`.
///
/// # Safety
/// `y` readable for `y_len`; `rng` a live handle; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_f_estimate(
    family: RwFamily,
    dim: usize,
    y: *const f64,
    y_len: usize,
    replicates: usize,
    directions: usize,
    rng: *const RwRng,
    value: *mut f64,
    std_error: *mut f64,
) -> RwStatus {
    guard(|| {
        let rng = handle(rng, "rng")?;
        let model = IsotropicModel::new(family.into(), dim)?;
        let y = Perturbation::fixed(slice(y, y_len, "y")?.to_vec());
        let w = f_estimate(model, y_len, &y, replicates, directions, &rng.inner)?;
        put(value, w.value, "value")?;
        put(std_error, w.std_error, "std_error")
    })
}

/// `M(t) = t^p`, `p >= 1`.
///
/// # Safety
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_orlicz_power(p: f64, out: *mut *mut RwOrlicz) -> RwStatus {
    guard(|| {
        let m = OrliczFn::power(p)?;
        put(out, Box::into_raw(Box::new(RwOrlicz { inner: m })), "out")
    })
}

/// Orlicz function of a standard Gaussian marginal.
///
/// # Safety
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_orlicz_gaussian_marginal(out: *mut *mut RwOrlicz) -> RwStatus {
    guard(|| {
        let m = OrliczFn::gaussian_marginal();
        put(out, Box::into_raw(Box::new(RwOrlicz { inner: m })), "out")
    })
}

/// Plug-in Orlicz function `s -> mean(max(0, s|a_j| - 1))` of a sample.
///
/// # Safety
/// `samples` readable for `len`; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_orlicz_empirical(
    samples: *const f64,
    len: usize,
    out: *mut *mut RwOrlicz,
) -> RwStatus {
    guard(|| {
        let m = OrliczFn::empirical(slice(samples, len, "samples")?)?;
        put(out, Box::into_raw(Box::new(RwOrlicz { inner: m })), "out")
    })
}

/// # Safety
/// `m` a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_orlicz_eval(m: *const RwOrlicz, s: f64, out: *mut f64) -> RwStatus {
    guard(|| {
        let v = handle(m, "m")?.inner.eval(s)?;
        put(out, v, "out")
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rw_orlicz_free(m: *mut RwOrlicz) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Luxemburg norm `inf{rho > 0 : sum M(|x_i|/rho) <= 1}`.
///
/// # Safety
/// `m` a live handle; `x` readable for `len`; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_luxemburg_norm(
    m: *const RwOrlicz,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> RwStatus {
    guard(|| {
        let m = &handle(m, "m")?.inner;
        let v = luxemburg_norm(m, slice(x, len, "x")?)?;
        put(out, v, "out")
    })
}

/// Lower bound for `E w(K_{N,y})`; `k_star` is 0 when no index is admissible.
///
/// # Safety
/// `y` readable for `len`; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_lower_bound(
    y: *const f64,
    len: usize,
    n: usize,
    c1: f64,
    c2: f64,
    strict: bool,
    bound: *mut f64,
    k_star: *mut usize,
) -> RwStatus {
    guard(|| {
        let r = arbitrary_lower_bound(slice(y, len, "y")?, n, c1, c2, strict)?;
        put(bound, r.bound_value, "bound")?;
        put(k_star, r.k_star.unwrap_or(0), "k_star")
    })
}

/// Least squares of `ln ys` on `ln xs`.
///
/// # Safety
/// `xs` and `ys` readable for `len`; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rw_fit_rate(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    slope: *mut f64,
    intercept: *mut f64,
) -> RwStatus {
    guard(|| {
        let (s, i) = fit_rate(slice(xs, len, "xs")?, slice(ys, len, "ys")?)?;
        put(slope, s, "slope")?;
        put(intercept, i, "intercept")
    })
}
