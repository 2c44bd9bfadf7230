//! C ABI over the `hyperspeckle` library.
//!
//! Objects cross the boundary as opaque handles created by `hs_*_new` /
//! `hs_*_read` and released with the matching `hs_*_free`. Every fallible
//! call returns an [`HsStatus`]; on failure the message is available from
//! [`hs_last_error_message`] on the same thread.
//!
//! Images are row-major `double` arrays of `width * height` samples.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hyperspeckle::config::{preset, Config};
use hyperspeckle::image::WienerParams;
use hyperspeckle::metrics::{correlation, psnr, ssim, Psnr};
use hyperspeckle::recover::{L1Params, PinvPolicy, SpectralSolver};
use hyperspeckle::{io, pipeline, Error, Image2D, Spectrum, Tensor, TransmissionMatrix};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Format = 4,
    Precondition = 5,
    OutOfRange = 6,
    Numeric = 7,
    DegenerateChannel = 8,
    UndefinedCorrelation = 9,
    Config = 10,
    Io = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

impl From<&Error> for HsStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::Dimension(_) => HsStatus::Dimension,
            Error::Format(_) => HsStatus::Format,
            Error::Precondition(_) => HsStatus::Precondition,
            Error::OutOfRange(_) => HsStatus::OutOfRange,
            Error::Numeric(_) => HsStatus::Numeric,
            Error::DegenerateChannel(_) => HsStatus::DegenerateChannel,
            Error::UndefinedCorrelation(_) => HsStatus::UndefinedCorrelation,
            Error::Config { .. } => HsStatus::Config,
            Error::Io { .. } => HsStatus::Io,
            Error::Stage { .. } => HsStatus::Numeric,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(HsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(HsStatus::from(&e), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(HsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn to_path(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(string(p, what)?))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(HsStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn image(p: *const f64, width: usize, height: usize, what: &str) -> Result<Image2D, Fail> {
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Fail(HsStatus::InvalidArgument, format!("`{what}` is too large")))?;
    Ok(Image2D::new(width, height, slice(p, n, what)?.to_vec())?)
}

unsafe fn out<T>(p: *mut T, v: T, what: &str) -> FfiResult {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

fn copy_into(src: &[f64], dst: *mut f64, cap: usize) -> FfiResult {
    if cap < src.len() {
        return Err(Fail(
            HsStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    let dst = unsafe { slice_mut(dst, src.len(), "out")? };
    dst.copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated and
/// always NUL-terminated when `cap > 0`). Returns the full message length
/// excluding the terminator, or 0 when the last call succeeded.
#[no_mangle]
pub unsafe extern "C" fn hs_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && cap > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

// Tensors

/// Dense n-dimensional array of doubles, row-major.
pub struct HsTensor(Tensor);

#[no_mangle]
pub unsafe extern "C" fn hs_tensor_new(
    dims: *const usize,
    ndim: usize,
    data: *const f64,
    len: usize,
    out_tensor: *mut *mut HsTensor,
) -> HsStatus {
    guard(|| {
        let dims = slice(dims, ndim, "dims")?.to_vec();
        let data = slice(data, len, "data")?.to_vec();
        let t = Tensor::new(dims, data)?;
        out(
            out_tensor,
            Box::into_raw(Box::new(HsTensor(t))),
            "out_tensor",
        )
    })
}

/// Reads an HTM1 file.
#[no_mangle]
pub unsafe extern "C" fn hs_tensor_read(
    path: *const c_char,
    out_tensor: *mut *mut HsTensor,
) -> HsStatus {
    guard(|| {
        let t = Tensor::read(to_path(path, "path")?)?;
        out(
            out_tensor,
            Box::into_raw(Box::new(HsTensor(t))),
            "out_tensor",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_tensor_write(t: *const HsTensor, path: *const c_char) -> HsStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("tensor"))?;
        Ok(t.0.write(to_path(path, "path")?)?)
    })
}

/// Number of dimensions; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hs_tensor_ndim(t: *const HsTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.dims().len())
}

/// Number of elements; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hs_tensor_len(t: *const HsTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the dimensions into `dims` (capacity `cap`).
#[no_mangle]
pub unsafe extern "C" fn hs_tensor_dims(
    t: *const HsTensor,
    dims: *mut usize,
    cap: usize,
) -> HsStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("tensor"))?;
        let d = t.0.dims();
        if cap < d.len() {
            return Err(Fail(
                HsStatus::BufferTooSmall,
                format!("{} dimensions", d.len()),
            ));
        }
        slice_mut(dims, d.len(), "dims")?.copy_from_slice(d);
        Ok(())
    })
}

/// Borrowed pointer to the elements, valid until the tensor is freed.
#[no_mangle]
pub unsafe extern "C" fn hs_tensor_data(t: *const HsTensor) -> *const f64 {
    t.as_ref().map_or(ptr::null(), |t| t.0.data().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn hs_tensor_free(t: *mut HsTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

// Transmission matrices and spectral recovery

/// Calibrated transmission matrix.
pub struct HsTransmissionMatrix(TransmissionMatrix);

/// Reads `path` (HTM1) and its JSON sidecar at the same path with a `.json`
/// extension.
#[no_mangle]
pub unsafe extern "C" fn hs_tm_read(
    path: *const c_char,
    out_tm: *mut *mut HsTransmissionMatrix,
) -> HsStatus {
    guard(|| {
        let tm = io::read_tm(to_path(path, "path")?)?;
        out(
            out_tm,
            Box::into_raw(Box::new(HsTransmissionMatrix(tm))),
            "out_tm",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_tm_n_pixels(tm: *const HsTransmissionMatrix) -> usize {
    tm.as_ref().map_or(0, |t| t.0.n_pixels())
}

#[no_mangle]
pub unsafe extern "C" fn hs_tm_n_columns(tm: *const HsTransmissionMatrix) -> usize {
    tm.as_ref().map_or(0, |t| t.0.n_columns())
}

/// Image dimensions of the TM's pixel axis.
#[no_mangle]
pub unsafe extern "C" fn hs_tm_image_dims(
    tm: *const HsTransmissionMatrix,
    width: *mut usize,
    height: *mut usize,
) -> HsStatus {
    guard(|| {
        let tm = tm.as_ref().ok_or_else(|| null("tm"))?;
        let (w, h) = tm.0.image_dims();
        out(width, w, "width")?;
        out(height, h, "height")
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_tm_free(tm: *mut HsTransmissionMatrix) {
    if !tm.is_null() {
        drop(Box::from_raw(tm));
    }
}

/// Factored truncated pseudoinverse of a TM.
pub struct HsSolver(SpectralSolver);

/// Factors `tm`, dropping the `drop_smallest` smallest singular values and
/// any below `rel_floor` times the largest.
#[no_mangle]
pub unsafe extern "C" fn hs_solver_new(
    tm: *const HsTransmissionMatrix,
    drop_smallest: usize,
    rel_floor: f64,
    out_solver: *mut *mut HsSolver,
) -> HsStatus {
    guard(|| {
        let tm = tm.as_ref().ok_or_else(|| null("tm"))?;
        let policy = PinvPolicy {
            drop_smallest,
            rel_floor,
        };
        let s = SpectralSolver::new(&tm.0, policy)?;
        out(
            out_solver,
            Box::into_raw(Box::new(HsSolver(s))),
            "out_solver",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_solver_rank(s: *const HsSolver) -> usize {
    s.as_ref().map_or(0, |s| s.0.info().rank)
}

/// Ratio of the largest to the smallest retained singular value.
#[no_mangle]
pub unsafe extern "C" fn hs_solver_condition(s: *const HsSolver) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.info().condition)
}

/// Recovers the clamped spectrum of one speckle frame into `spectrum`
/// (capacity `cap`, at least the TM column count).
#[no_mangle]
pub unsafe extern "C" fn hs_solver_recover(
    s: *const HsSolver,
    speckle: *const f64,
    width: usize,
    height: usize,
    spectrum: *mut f64,
    cap: usize,
) -> HsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        let img = image(speckle, width, height, "speckle")?;
        copy_into(s.0.recover(&img)?.values(), spectrum, cap)
    })
}

/// Nonnegative L1-regularized refinement starting from `init`; `init` and
/// `spectrum` hold the TM column count.
#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn hs_solver_l1_refine(
    s: *const HsSolver,
    speckle: *const f64,
    width: usize,
    height: usize,
    init: *const f64,
    gamma1: f64,
    max_iters: usize,
    spectrum: *mut f64,
    cap: usize,
) -> HsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solver"))?;
        let img = image(speckle, width, height, "speckle")?;
        let tm = s.0.tm();
        let init = Spectrum::new(
            *tm.grid(),
            tm.n_pol(),
            slice(init, tm.n_columns(), "init")?.to_vec(),
        )?;
        let p = L1Params {
            gamma1,
            max_iters,
            ..L1Params::default()
        };
        p.validate()?;
        copy_into(s.0.l1_refine(&img, &init, &p)?.values(), spectrum, cap)
    })
}

#[no_mangle]
pub unsafe extern "C" fn hs_solver_free(s: *mut HsSolver) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// Imaging and metrics

/// Wiener deconvolution of a `sw x sh` speckle by a `pw x ph` PSF (no larger
/// than the speckle). Writes `sw * sh` samples to `out_image`.
#[allow(clippy::too_many_arguments)]
#[no_mangle]
pub unsafe extern "C" fn hs_wiener_deconv(
    speckle: *const f64,
    sw: usize,
    sh: usize,
    psf: *const f64,
    pw: usize,
    ph: usize,
    nsr: f64,
    out_image: *mut f64,
) -> HsStatus {
    guard(|| {
        let s = image(speckle, sw, sh, "speckle")?;
        let p = image(psf, pw, ph, "psf")?;
        let w = WienerParams { nsr };
        w.validate()?;
        let o = hyperspeckle::image::wiener_deconv(&s, &p, &w)?;
        copy_into(o.data(), out_image, sw * sh)
    })
}

/// SSIM of `a` against the reference `b`.
#[no_mangle]
pub unsafe extern "C" fn hs_ssim(
    a: *const f64,
    b: *const f64,
    width: usize,
    height: usize,
    out_value: *mut f64,
) -> HsStatus {
    guard(|| {
        let v = ssim(
            &image(a, width, height, "a")?,
            &image(b, width, height, "b")?,
        )?;
        out(out_value, v, "out_value")
    })
}

/// PSNR in dB of `a` against the reference `b`; identical images give
/// positive infinity.
#[no_mangle]
pub unsafe extern "C" fn hs_psnr(
    a: *const f64,
    b: *const f64,
    width: usize,
    height: usize,
    out_value: *mut f64,
) -> HsStatus {
    guard(|| {
        let v = match psnr(
            &image(a, width, height, "a")?,
            &image(b, width, height, "b")?,
        )? {
            Psnr::Exact => f64::INFINITY,
            Psnr::Db(d) => d,
        };
        out(out_value, v, "out_value")
    })
}

/// Pearson correlation of two equal-length vectors.
#[no_mangle]
pub unsafe extern "C" fn hs_correlation(
    a: *const f64,
    b: *const f64,
    len: usize,
    out_value: *mut f64,
) -> HsStatus {
    guard(|| {
        let v = correlation(slice(a, len, "a")?, slice(b, len, "b")?)?;
        out(out_value, v, "out_value")
    })
}

// Whole runs

/// Simulates and reconstructs the scenario described by `config_json` (or,
/// when it is null, the built-in scenario `scenario`), writing every
/// artifact under `out_dir`. The mean spectral correlation is stored in
/// `out_correlation` when that pointer is non-null (NaN when undefined).
#[no_mangle]
pub unsafe extern "C" fn hs_pipeline_run(
    config_json: *const c_char,
    scenario: *const c_char,
    out_dir: *const c_char,
    out_correlation: *mut f64,
) -> HsStatus {
    guard(|| {
        let cfg = if !config_json.is_null() {
            Config::from_json(&string(config_json, "config_json")?)?
        } else {
            let name = string(scenario, "scenario")?;
            preset(&name)
                .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{name}`")))?
        };
        let dir = to_path(out_dir, "out_dir")?;
        let sim = pipeline::simulate(&cfg)?;
        pipeline::write_sim_artifacts(&dir, &cfg, &sim)?;
        let (res, _) = pipeline::run_from_dir(&dir, &cfg)?;
        if !out_correlation.is_null() {
            *out_correlation = res.report.spectral_correlation.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
