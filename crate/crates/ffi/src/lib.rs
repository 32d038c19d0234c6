//! C ABI over `csfg-core`.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every fallible call returns a [`CsfgStatus`]; on failure the message is
//! kept per thread and read back with [`csfg_last_error_message`].
//! Matrices cross the boundary as separate row-major real and imaginary
//! arrays of `n_bins * n_bins` doubles, output bin major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use csfg_core::kernel1n::{build_kernels, transfer_matrix};
use csfg_core::kernelmn::{transfer_mn, MnSolver};
use csfg_core::linalg::CMatrix;
use csfg_core::metrics::{metrics_1n, metrics_streamed};
use csfg_core::{
    hermite_gauss_pump, identity_multipump, pump_from_unitary, single_bin_pump, Error, FrequencyGrid, GateParams,
    MultiPump,
};
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidGrid = 2,
    InvalidParams = 3,
    InvalidPump = 4,
    AliasedPump = 5,
    BinOutOfRange = 6,
    NonIsometric = 7,
    NonOrthonormalPumps = 8,
    NoCavityDynamics = 9,
    NearSingularPeriodicSolve = 10,
    StepMisaligned = 11,
    NoConversion = 12,
    Dimension = 13,
    Oracle = 14,
    Io = 15,
    Parse = 16,
    BufferTooSmall = 17,
    Panic = 18,
}

impl From<&Error> for CsfgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidGrid(_) => CsfgStatus::InvalidGrid,
            Error::InvalidParams(_) => CsfgStatus::InvalidParams,
            Error::InvalidPump(_) => CsfgStatus::InvalidPump,
            Error::AliasedPump { .. } => CsfgStatus::AliasedPump,
            Error::BinOutOfRange { .. } => CsfgStatus::BinOutOfRange,
            Error::NonIsometric { .. } => CsfgStatus::NonIsometric,
            Error::NonOrthonormalPumps { .. } => CsfgStatus::NonOrthonormalPumps,
            Error::NoCavityDynamics => CsfgStatus::NoCavityDynamics,
            Error::NearSingularPeriodicSolve { .. } => CsfgStatus::NearSingularPeriodicSolve,
            Error::StepMisaligned { .. } => CsfgStatus::StepMisaligned,
            Error::NoConversion => CsfgStatus::NoConversion,
            Error::Dimension(_) => CsfgStatus::Dimension,
            Error::Oracle(_) => CsfgStatus::Oracle,
            Error::Io(_) => CsfgStatus::Io,
            Error::Parse(_) => CsfgStatus::Parse,
        }
    }
}

/// Opaque frequency grid.
pub struct CsfgGrid {
    grid: FrequencyGrid,
}

/// Opaque set of orthonormal pump envelopes, one per output channel.
pub struct CsfgPump {
    pump: MultiPump,
}

/// Opaque set of frequency-bin transfer matrices.
pub struct CsfgTransfer {
    n_bins: usize,
    channels: usize,
    gs: Vec<CMatrix>,
    gi: Vec<CMatrix>,
    isometry_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsfgParams {
    pub gamma: f64,
    pub eta: f64,
    pub iota: f64,
    pub window: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsfgMetrics {
    pub fm_fidelity: f64,
    pub fm_ce: f64,
    pub pc_fidelity: f64,
    pub pc_ce: f64,
    pub hd_fidelity: f64,
    pub hd_ce: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), CsfgStatus>) -> CsfgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsfgStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            CsfgStatus::Panic
        }
    }
}

fn check<T>(r: csfg_core::Result<T>) -> Result<T, CsfgStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        CsfgStatus::from(&e)
    })
}

fn null(what: &str) -> CsfgStatus {
    set_error(format!("null pointer: {what}"));
    CsfgStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CsfgStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), CsfgStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn params_of(p: &CsfgParams) -> csfg_core::Result<GateParams> {
    GateParams::new(p.gamma, p.eta, p.iota, p.window)
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn csfg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn csfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfg_grid_new(n_bins: usize, oversample: usize, out: *mut *mut CsfgGrid) -> CsfgStatus {
    guard(|| {
        let grid = check(FrequencyGrid::new(n_bins, oversample))?;
        store(out, CsfgGrid { grid })
    })
}

/// # Safety
/// `grid` must come from [`csfg_grid_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn csfg_grid_free(grid: *mut CsfgGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfg_grid_n_bins(grid: *const CsfgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.n_bins())
}

/// # Safety
/// `grid` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfg_grid_n_times(grid: *const CsfgGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.n_times())
}

/// Rates for `γ = r·Δω` at matched coupling `η = √(γT)`, no loss.
///
/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_params_matched(grid: *const CsfgGrid, r: f64, out: *mut CsfgParams) -> CsfgStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let p = check(GateParams::from_ratio(r, &g.grid))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = CsfgParams {
            gamma: p.gamma,
            eta: p.eta,
            iota: p.iota,
            window: p.window,
        };
        Ok(())
    })
}

/// Hermite-Gauss pump of the given order; `width` in bins.
///
/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_hermite_gauss(
    grid: *const CsfgGrid,
    order: u32,
    width: f64,
    out: *mut *mut CsfgPump,
) -> CsfgStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let env = check(hermite_gauss_pump(order, width, &g.grid))?;
        store(
            out,
            CsfgPump {
                pump: MultiPump::single(env),
            },
        )
    })
}

/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_single_bin(grid: *const CsfgGrid, bin: i64, out: *mut *mut CsfgPump) -> CsfgStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let env = check(single_bin_pump(bin, &g.grid))?;
        store(
            out,
            CsfgPump {
                pump: MultiPump::single(env),
            },
        )
    })
}

/// Identity gate on the central `channels` bins.
///
/// # Safety
/// `grid` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_identity(
    grid: *const CsfgGrid,
    channels: usize,
    out: *mut *mut CsfgPump,
) -> CsfgStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        let pump = check(identity_multipump(channels, &g.grid))?;
        store(out, CsfgPump { pump })
    })
}

/// Pumps realising the `rows × n_bins` isometry `U`, given row-major.
///
/// # Safety
/// `re` and `im` must each hold `rows * n_bins` doubles.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_from_unitary(
    grid: *const CsfgGrid,
    rows: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut CsfgPump,
) -> CsfgStatus {
    guard(|| {
        let g = deref(grid, "grid")?;
        if re.is_null() || im.is_null() {
            return Err(null("matrix"));
        }
        let n = g.grid.n_bins();
        let (re, im) = (
            std::slice::from_raw_parts(re, rows * n),
            std::slice::from_raw_parts(im, rows * n),
        );
        let u = CMatrix::from_fn(rows, n, |r, c| Complex64::new(re[r * n + c], im[r * n + c]));
        let pump = check(pump_from_unitary(&u, &g.grid))?;
        store(out, CsfgPump { pump })
    })
}

/// # Safety
/// `pump` must come from a `csfg_pump_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_free(pump: *mut CsfgPump) {
    if !pump.is_null() {
        drop(Box::from_raw(pump));
    }
}

/// # Safety
/// `pump` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfg_pump_channels(pump: *const CsfgPump) -> usize {
    pump.as_ref().map_or(0, |p| p.pump.channels())
}

/// Computes the transfer matrices. The idler part costs one extra solve
/// per channel and is skipped unless `with_idler` is nonzero.
///
/// # Safety
/// `pump`, `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_transfer_compute(
    pump: *const CsfgPump,
    params: *const CsfgParams,
    with_idler: i32,
    out: *mut *mut CsfgTransfer,
) -> CsfgStatus {
    guard(|| {
        let mp = &deref(pump, "pump")?.pump;
        let p = check(params_of(deref(params, "params")?))?;
        let n_bins = mp.grid().n_bins();
        let t = if mp.channels() == 1 {
            let t = transfer_matrix(&check(build_kernels(&p, mp.envelope(0)))?);
            let residual = t.isometry_residual();
            CsfgTransfer {
                n_bins,
                channels: 1,
                gs: vec![t.gs_tilde],
                gi: if with_idler != 0 { vec![t.gi_tilde] } else { Vec::new() },
                isometry_residual: if with_idler != 0 { residual } else { f64::NAN },
            }
        } else {
            let t = transfer_mn(&check(MnSolver::new(&p, mp, None))?, with_idler != 0);
            CsfgTransfer {
                n_bins,
                channels: t.channels,
                isometry_residual: t.isometry_residual().unwrap_or(f64::NAN),
                gs: t.gs_tilde,
                gi: t.gi_tilde,
            }
        };
        store(out, t)
    })
}

/// # Safety
/// `transfer` must come from [`csfg_transfer_compute`] or be null.
#[no_mangle]
pub unsafe extern "C" fn csfg_transfer_free(transfer: *mut CsfgTransfer) {
    if !transfer.is_null() {
        drop(Box::from_raw(transfer));
    }
}

/// Row-isometry residual, or NaN when the idler part was not computed.
///
/// # Safety
/// `transfer` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfg_transfer_isometry_residual(transfer: *const CsfgTransfer) -> f64 {
    transfer.as_ref().map_or(f64::NAN, |t| t.isometry_residual)
}

unsafe fn copy_matrix(m: &CMatrix, re: *mut f64, im: *mut f64, len: usize) -> Result<(), CsfgStatus> {
    if re.is_null() || im.is_null() {
        return Err(null("buffer"));
    }
    let (r, c) = m.shape();
    if len < r * c {
        set_error(format!("buffer holds {len} values, need {}", r * c));
        return Err(CsfgStatus::BufferTooSmall);
    }
    let (re, im) = (
        std::slice::from_raw_parts_mut(re, len),
        std::slice::from_raw_parts_mut(im, len),
    );
    for i in 0..r {
        for j in 0..c {
            re[i * c + j] = m[(i, j)].re;
            im[i * c + j] = m[(i, j)].im;
        }
    }
    Ok(())
}

/// Copies the signal matrix of output channel `k` into `re`/`im`, each of
/// at least `n_bins * n_bins` entries.
///
/// # Safety
/// `re` and `im` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn csfg_transfer_signal(
    transfer: *const CsfgTransfer,
    k: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> CsfgStatus {
    guard(|| {
        let t = deref(transfer, "transfer")?;
        if k >= t.channels {
            set_error(format!("channel {k} out of range for {} channels", t.channels));
            return Err(CsfgStatus::Dimension);
        }
        debug_assert_eq!(t.gs[k].nrows(), t.n_bins);
        copy_matrix(&t.gs[k], re, im, len)
    })
}

/// Idler matrix from input channel `j` to output channel `k`.
///
/// # Safety
/// `re` and `im` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn csfg_transfer_idler(
    transfer: *const CsfgTransfer,
    k: usize,
    j: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> CsfgStatus {
    guard(|| {
        let t = deref(transfer, "transfer")?;
        if t.gi.is_empty() {
            set_error("idler part was not computed".into());
            return Err(CsfgStatus::Dimension);
        }
        if k >= t.channels || j >= t.channels {
            set_error(format!(
                "channel pair ({k}, {j}) out of range for {} channels",
                t.channels
            ));
            return Err(CsfgStatus::Dimension);
        }
        copy_matrix(&t.gi[k * t.channels + j], re, im, len)
    })
}

/// All six fidelity and conversion-efficiency figures for `pump`.
///
/// # Safety
/// `pump`, `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfg_metrics(
    pump: *const CsfgPump,
    params: *const CsfgParams,
    out: *mut CsfgMetrics,
) -> CsfgStatus {
    guard(|| {
        let mp = &deref(pump, "pump")?.pump;
        let p = check(params_of(deref(params, "params")?))?;
        let r = if mp.channels() == 1 {
            check(metrics_1n(&check(build_kernels(&p, mp.envelope(0)))?))?
        } else {
            check(metrics_streamed(&check(MnSolver::new(&p, mp, None))?))?
        };
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = CsfgMetrics {
            fm_fidelity: r.fm_fidelity,
            fm_ce: r.fm_ce,
            pc_fidelity: r.pc_fidelity,
            pc_ce: r.pc_ce,
            hd_fidelity: r.hd_fidelity,
            hd_ce: r.hd_ce,
        };
        Ok(())
    })
}
