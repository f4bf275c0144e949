//! C ABI over `eepsel`.
//!
//! Every function returns an [`EepselStatus`]; on failure the message is kept
//! per thread and can be copied out with [`eepsel_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use eepsel::bundle::{load_bundle, Bundle};
use eepsel::correlation::{kendall_tau, pearson, weighted_kendall_tau};
use eepsel::csvio::write_output;
use eepsel::engine::{num_combinations, EngineConfig, DEFAULT_MAX_CHUNK_ROWS};
use eepsel::metrics::Metric;
use eepsel::selection::{score_all, ScoreConfig, ScoreTable, SourcePool};
use eepsel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EepselStatus {
    Ok = 0,
    /// Invalid input data or arguments.
    Validation = 1,
    /// File could not be read or written, or already exists.
    Io = 2,
    /// Internal invariant violated.
    Internal = 3,
    NullPointer = 4,
    /// Output buffer too small; the required size was still reported.
    BufferTooSmall = 5,
    /// A panic was caught at the boundary.
    Panic = 6,
}

/// Score table columns, in CSV order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EepselMetric {
    MsLeep = 0,
    ELeep = 1,
    IouEep = 2,
    SoftIouEep = 3,
    Base = 4,
}

fn metric_from_code(code: u32) -> Option<Metric> {
    Some(match code {
        c if c == EepselMetric::MsLeep as u32 => Metric::MsLeep,
        c if c == EepselMetric::ELeep as u32 => Metric::ELeep,
        c if c == EepselMetric::IouEep as u32 => Metric::IouEep,
        c if c == EepselMetric::SoftIouEep as u32 => Metric::SoftIouEep,
        c if c == EepselMetric::Base as u32 => Metric::Base,
        _ => return None,
    })
}

/// A loaded, validated bundle.
pub struct EepselBundle {
    inner: Bundle,
}

/// Scores of every ensemble of a bundle's pool, all metrics.
pub struct EepselScoreTable {
    inner: ScoreTable,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure {
    status: EepselStatus,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => EepselStatus::Io,
            3 => EepselStatus::Internal,
            _ => EepselStatus::Validation,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn fail(status: EepselStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EepselStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(fail(EepselStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            EepselStatus::Ok
        }
        Err(f) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = f.message);
            f.status
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(EepselStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(EepselStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(EepselStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EepselStatus::Validation, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Copies `s` plus a NUL into `buf`. `needed` receives the byte length
/// without the NUL.
unsafe fn copy_out(
    s: &str,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> Result<(), Failure> {
    if let Some(n) = needed.as_mut() {
        *n = s.len();
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err(fail(
            EepselStatus::BufferTooSmall,
            format!("buffer of {len} bytes cannot hold {} bytes", s.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

unsafe fn vectors<'a>(
    xs: *const f64,
    ys: *const f64,
    n: usize,
) -> Result<(&'a [f64], &'a [f64]), Failure> {
    if xs.is_null() || ys.is_null() {
        return Err(fail(EepselStatus::NullPointer, "input vector is null"));
    }
    Ok((
        std::slice::from_raw_parts(xs, n),
        std::slice::from_raw_parts(ys, n),
    ))
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf` and returns its full length in bytes without the NUL.
#[no_mangle]
pub unsafe extern "C" fn eepsel_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eepsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_bundle_load(
    path: *const c_char,
    out: *mut *mut EepselBundle,
) -> EepselStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let inner = load_bundle(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(EepselBundle { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_bundle_free(bundle: *mut EepselBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_bundle_num_samples(
    bundle: *const EepselBundle,
    out: *mut usize,
) -> EepselStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(bundle, "bundle")?.inner.samples.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_bundle_num_classes(
    bundle: *const EepselBundle,
    out: *mut usize,
) -> EepselStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(bundle, "bundle")?.inner.samples.num_classes();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_bundle_num_sources(
    bundle: *const EepselBundle,
    out: *mut usize,
) -> EepselStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(bundle, "bundle")?.inner.predictions.len();
        Ok(())
    })
}

/// Scores every size-`ensemble_size` ensemble of the bundle's sources with
/// all metrics. `workers` 0 uses one thread per core.
#[no_mangle]
pub unsafe extern "C" fn eepsel_score(
    bundle: *const EepselBundle,
    ensemble_size: usize,
    workers: usize,
    memory_budget_bytes: u64,
    out: *mut *mut EepselScoreTable,
) -> EepselStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let b = &deref(bundle, "bundle")?.inner;
        let pool = SourcePool::from_metas(&b.metas, None)?;
        let config = ScoreConfig {
            metrics: Metric::ALL.to_vec(),
            engine: EngineConfig {
                workers,
                memory_budget_bytes,
                max_chunk_rows: DEFAULT_MAX_CHUNK_ROWS,
            },
        };
        let inner = score_all(
            &b.samples,
            &b.predictions,
            &b.metas,
            &pool,
            ensemble_size,
            &config,
        )?;
        *out = Box::into_raw(Box::new(EepselScoreTable { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_table_free(table: *mut EepselScoreTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_table_num_rows(
    table: *const EepselScoreTable,
    out: *mut usize,
) -> EepselStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(table, "table")?.inner.rows.len();
        Ok(())
    })
}

/// `metric` is an `EepselMetric` value.
#[no_mangle]
pub unsafe extern "C" fn eepsel_table_value(
    table: *const EepselScoreTable,
    row: usize,
    metric: u32,
    out: *mut f64,
) -> EepselStatus {
    guard(|| {
        let t = &deref(table, "table")?.inner;
        let out = out_ref(out, "out")?;
        let r = t
            .rows
            .get(row)
            .ok_or_else(|| fail(EepselStatus::Validation, format!("row {row} out of range")))?;
        let metric = metric_from_code(metric).ok_or_else(|| {
            fail(
                EepselStatus::Validation,
                format!("unknown metric code {metric}"),
            )
        })?;
        let j = t
            .metrics
            .iter()
            .position(|&m| m == metric)
            .ok_or_else(|| Failure::from(Error::UnknownMetric(metric.name().into())))?;
        *out = r.scores[j];
        Ok(())
    })
}

/// Writes the `+`-joined member ids of `row`. With a null or short buffer
/// the call fails with `BufferTooSmall` after storing the length in `needed`.
#[no_mangle]
pub unsafe extern "C" fn eepsel_table_ensemble_key(
    table: *const EepselScoreTable,
    row: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> EepselStatus {
    guard(|| {
        let t = &deref(table, "table")?.inner;
        let r = t
            .rows
            .get(row)
            .ok_or_else(|| fail(EepselStatus::Validation, format!("row {row} out of range")))?;
        copy_out(&r.ensemble.key(), buf, len, needed)
    })
}

/// Writes the table as `scores.csv`-format CSV. Existing files are kept
/// unless `force` is nonzero.
#[no_mangle]
pub unsafe extern "C" fn eepsel_table_write_csv(
    table: *const EepselScoreTable,
    path: *const c_char,
    force: i32,
) -> EepselStatus {
    guard(|| {
        let t = &deref(table, "table")?.inner;
        write_output(&path_arg(path)?, &t.to_csv(), force != 0)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn eepsel_num_combinations(n: usize, k: usize) -> u64 {
    num_combinations(n, k)
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_pearson(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> EepselStatus {
    guard(|| {
        let (x, y) = vectors(xs, ys, n)?;
        *out_ref(out, "out")? = pearson(x, y)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn eepsel_kendall_tau(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    out: *mut f64,
) -> EepselStatus {
    guard(|| {
        let (x, y) = vectors(xs, ys, n)?;
        *out_ref(out, "out")? = kendall_tau(x, y)?;
        Ok(())
    })
}

/// Weighted tau with hyperbolic weights ranked by `actual`.
#[no_mangle]
pub unsafe extern "C" fn eepsel_weighted_kendall_tau(
    predicted: *const f64,
    actual: *const f64,
    n: usize,
    out: *mut f64,
) -> EepselStatus {
    guard(|| {
        let (p, a) = vectors(predicted, actual, n)?;
        *out_ref(out, "out")? = weighted_kendall_tau(p, a)?;
        Ok(())
    })
}
