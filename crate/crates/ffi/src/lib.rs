//! C ABI over the relevance models.
//!
//! Every fallible function returns a [`BrdStatus`]; on failure the message
//! is available from [`brd_last_error_message`] on the same thread. Objects
//! are opaque handles created by `*_new` / `brd_fit_*` and released with the
//! matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use brd::data::{lognormal_quantile, validate_expression};
use brd::evaluation::{auc, fit_summary, FitSettings, Method};
use brd::relevance::{Measure, PosteriorSummary};
use brd::rng::stream_rng;
use brd::simulation::SimData;
use brd::{ExpressionDataset, ZScoreDataset};

/// Result code of every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or a buffer too small.
    InvalidArgument = 2,
    /// The data were rejected (non-finite values, bad labels, degenerate groups).
    InvalidData = 3,
    /// The sampler or summary failed.
    Runtime = 4,
    /// A panic was caught inside the library.
    Panic = 5,
}

/// Per-gene relevance measure.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrdMeasure {
    /// Posterior mean rank of the gene's cluster variance.
    MeanRank = 0,
    /// Posterior modal rank.
    ModeRank = 1,
    /// Probability of not being in the lowest-variance cluster.
    V = 2,
}

fn measure_from_code(code: i32) -> Option<Measure> {
    match code {
        c if c == BrdMeasure::MeanRank as i32 => Some(Measure::MeanRank),
        c if c == BrdMeasure::ModeRank as i32 => Some(Measure::ModeRank),
        c if c == BrdMeasure::V as i32 => Some(Measure::V),
        _ => None,
    }
}

/// Chain length, seed and the main prior settings. Obtain defaults from
/// [`brd_fit_options_default`] and change what you need.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdFitOptions {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    /// Location and scale of the log-normal base measure on φ².
    pub g0_location: f64,
    pub g0_scale: f64,
    /// Location and scale of the log-normal prior on γ.
    pub gamma_location: f64,
    pub gamma_scale: f64,
    /// Baseline only: prior null probability and slab variance.
    pub p0: f64,
    pub slab_var: f64,
}

impl From<&BrdFitOptions> for FitSettings {
    fn from(o: &BrdFitOptions) -> Self {
        let mut s = FitSettings::default();
        s.chain.iterations = o.iterations;
        s.chain.burn_in = o.burn_in;
        s.chain.thin = o.thin;
        s.chain.seed = o.seed;
        s.hp.g0_location = o.g0_location;
        s.hp.g0_scale = o.g0_scale;
        s.hp.gamma_location = o.gamma_location;
        s.hp.gamma_scale = o.gamma_scale;
        s.bdp.p0 = o.p0;
        s.bdp.slab_var = o.slab_var;
        s
    }
}

/// Gene-level z-scores.
pub struct BrdZData(ZScoreDataset);

/// Case/control expression matrix.
pub struct BrdExpression(ExpressionDataset);

/// Posterior summary of one fit.
pub struct BrdSummary(PosteriorSummary);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (BrdStatus, String);

fn fail(status: BrdStatus, msg: impl Into<String>) -> Failure {
    (status, msg.into())
}

/// Run `f`, record any failure and convert panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BrdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BrdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BrdStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(BrdStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null only when `n == 0`, else point to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, n))
}

fn options(opts: *const BrdFitOptions) -> FitSettings {
    if opts.is_null() {
        FitSettings::default()
    } else {
        // SAFETY: non-null pointers are required to point to valid options.
        FitSettings::from(unsafe { &*opts })
    }
}

fn fit(data: SimData, method: Method, opts: *const BrdFitOptions, out: *mut *mut BrdSummary) -> Result<(), Failure> {
    let settings = options(opts);
    let mut rng = stream_rng(settings.chain.seed, 0);
    let summary =
        fit_summary(&data, method, &settings, &mut rng).map_err(|e| fail(BrdStatus::Runtime, e.to_string()))?;
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(BrdSummary(summary))) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn brd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn brd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default fit options: 4000 iterations, 1000 burn-in, seed 1.
#[no_mangle]
pub extern "C" fn brd_fit_options_default() -> BrdFitOptions {
    let s = FitSettings::default();
    BrdFitOptions {
        iterations: s.chain.iterations,
        burn_in: s.chain.burn_in,
        thin: s.chain.thin,
        seed: s.chain.seed,
        g0_location: s.hp.g0_location,
        g0_scale: s.hp.g0_scale,
        gamma_location: s.hp.gamma_location,
        gamma_scale: s.hp.gamma_scale,
        p0: s.bdp.p0,
        slab_var: s.bdp.slab_var,
    }
}

/// Copy `n` z-scores into a new dataset (genes are named g1..gn).
///
/// # Safety
/// `values` must point to `n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn brd_zdata_new(values: *const f64, n: usize, out: *mut *mut BrdZData) -> BrdStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = slice(values, n, "values")?.to_vec();
        let z = ZScoreDataset::from_values(v).map_err(|e| fail(BrdStatus::InvalidData, e.to_string()))?;
        *out = Box::into_raw(Box::new(BrdZData(z)));
        Ok(())
    })
}

/// # Safety
/// `z` must be null or a handle from [`brd_zdata_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brd_zdata_free(z: *mut BrdZData) {
    if !z.is_null() {
        drop(Box::from_raw(z));
    }
}

/// Copy a row-major `n_genes × n_samples` matrix with per-sample labels
/// (0 control, 1 case) into a new dataset.
///
/// # Safety
/// `values` must point to `n_genes * n_samples` doubles, `labels` to
/// `n_samples` bytes and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn brd_expression_new(
    values: *const f64,
    n_genes: usize,
    n_samples: usize,
    labels: *const u8,
    out: *mut *mut BrdExpression,
) -> BrdStatus {
    guard(|| {
        non_null(out, "out")?;
        let total = n_genes
            .checked_mul(n_samples)
            .ok_or_else(|| fail(BrdStatus::InvalidArgument, "matrix size overflows"))?;
        let v = slice(values, total, "values")?;
        let l = slice(labels, n_samples, "labels")?;
        let rows = if n_samples == 0 {
            vec![Vec::new(); n_genes]
        } else {
            v.chunks(n_samples).map(<[f64]>::to_vec).collect()
        };
        let ids = (1..=n_genes).map(|i| format!("g{i}")).collect();
        let e = validate_expression(ids, rows, l).map_err(|e| fail(BrdStatus::InvalidData, e.to_string()))?;
        *out = Box::into_raw(Box::new(BrdExpression(e)));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a handle from [`brd_expression_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brd_expression_free(e: *mut BrdExpression) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Fit the relevance model to z-scores. `opts` may be null for defaults.
///
/// # Safety
/// `z` must be a live handle, `opts` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn brd_fit_reduced(
    z: *const BrdZData,
    opts: *const BrdFitOptions,
    out: *mut *mut BrdSummary,
) -> BrdStatus {
    guard(|| {
        non_null(z, "z")?;
        non_null(out, "out")?;
        fit(SimData::Z((*z).0.clone()), Method::Brd, opts, out)
    })
}

/// Fit the point-mass baseline to z-scores. `opts` may be null for defaults.
///
/// # Safety
/// `z` must be a live handle, `opts` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn brd_fit_bdp(
    z: *const BrdZData,
    opts: *const BrdFitOptions,
    out: *mut *mut BrdSummary,
) -> BrdStatus {
    guard(|| {
        non_null(z, "z")?;
        non_null(out, "out")?;
        fit(SimData::Z((*z).0.clone()), Method::Bdp, opts, out)
    })
}

/// Fit the relevance model to expression data. `opts` may be null for defaults.
///
/// # Safety
/// `e` must be a live handle, `opts` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn brd_fit_full(
    e: *const BrdExpression,
    opts: *const BrdFitOptions,
    out: *mut *mut BrdSummary,
) -> BrdStatus {
    guard(|| {
        non_null(e, "e")?;
        non_null(out, "out")?;
        fit(SimData::Expression((*e).0.clone()), Method::Brd, opts, out)
    })
}

/// Number of genes in a summary, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live summary handle.
#[no_mangle]
pub unsafe extern "C" fn brd_summary_n_genes(s: *const BrdSummary) -> usize {
    if s.is_null() {
        0
    } else {
        (*s).0.n_genes()
    }
}

/// Modal number of clusters over retained iterations, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live summary handle.
#[no_mangle]
pub unsafe extern "C" fn brd_summary_modal_k(s: *const BrdSummary) -> usize {
    if s.is_null() {
        0
    } else {
        (*s).0.c_m
    }
}

/// Retained iterations behind a summary, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live summary handle.
#[no_mangle]
pub unsafe extern "C" fn brd_summary_iterations(s: *const BrdSummary) -> u64 {
    if s.is_null() {
        0
    } else {
        (*s).0.iterations
    }
}

/// Copy one measure (a `BrdMeasure` value) for every gene into `out`,
/// which holds `len` doubles.
///
/// # Safety
/// `s` must be a live summary handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn brd_summary_measure(
    s: *const BrdSummary,
    measure: i32,
    out: *mut f64,
    len: usize,
) -> BrdStatus {
    guard(|| {
        non_null(s, "summary")?;
        non_null(out, "out")?;
        let m = measure_from_code(measure)
            .ok_or_else(|| fail(BrdStatus::InvalidArgument, format!("unknown measure {measure}")))?;
        let values = (*s).0.measure(m);
        if len < values.len() {
            return Err(fail(
                BrdStatus::InvalidArgument,
                format!("buffer holds {len} values, {} needed", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a summary handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn brd_summary_free(s: *mut BrdSummary) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Area under the ROC curve of `scores` against 0/1 `truth`; ties count one half.
///
/// # Safety
/// `scores` and `truth` must point to `n` values, `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn brd_auc(scores: *const f64, truth: *const u8, n: usize, out: *mut f64) -> BrdStatus {
    guard(|| {
        non_null(out, "out")?;
        let s = slice(scores, n, "scores")?;
        let t: Vec<bool> = slice(truth, n, "truth")?.iter().map(|&b| b != 0).collect();
        *out = auc(s, &t).map_err(|e| fail(BrdStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Quantile `p` of a log-normal with the given location and scale.
///
/// # Safety
/// `out` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn brd_lognormal_quantile(location: f64, scale: f64, p: f64, out: *mut f64) -> BrdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lognormal_quantile(location, scale, p).map_err(|e| fail(BrdStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}
