//! C ABI for the calibration toolkit.
//!
//! Conventions:
//! - Objects cross the boundary as opaque handles created and released by
//!   matching `_new`/`_load` and `_free` functions.
//! - Every fallible call returns a [`TailcalStatus`]; on failure the message
//!   is retrievable once via [`tailcal_last_error`] (caller frees it with
//!   [`tailcal_string_free`]).
//! - Strings returned by the library are NUL-terminated, UTF-8, and owned by
//!   the caller after return.
//!
//! The matching declarations live in `include/tailcal.h`, which is kept in
//! sync by the `header_matches_exports` test.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tailcal::calibrate::{apply_temperature, cda_temperature, fit_optimal_temperature, CdaConfig, TsFitConfig};
use tailcal::error::CalibError;
use tailcal::io::{load_logits, Format};
use tailcal::metrics::{full_report, MetricsConfig};
use tailcal::types::{ClassFrequencyProfile, LogitSet, TemperatureVector};

/// Status codes mirroring the CLI exit classes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailcalStatus {
    TailcalOk = 0,
    TailcalUsageError = 1,
    TailcalDataError = 2,
    TailcalNumericalError = 3,
    TailcalNullPointer = 4,
    TailcalPanic = 5,
}

use TailcalStatus::*;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &CalibError) -> TailcalStatus {
    match err.exit_code() {
        1 => TailcalUsageError,
        3 => TailcalNumericalError,
        _ => TailcalDataError,
    }
}

fn fail(err: CalibError) -> TailcalStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guarded<F: FnOnce() -> TailcalStatus>(f: F) -> TailcalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic across FFI boundary".into());
            TailcalPanic
        }
    }
}

/// Opaque logit-matrix handle.
pub struct TailcalLogitSet(LogitSet);

/// Opaque temperature-vector handle.
pub struct TailcalTemps(TemperatureVector);

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn tailcal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Take the last error message for this thread, or NULL when none is
/// pending. The caller owns the returned string.
#[no_mangle]
pub extern "C" fn tailcal_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow_mut()
            .take()
            .map_or(std::ptr::null_mut(), CString::into_raw)
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a tailcal function that transfers string
/// ownership, and must not have been freed already. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn tailcal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a logit file (binary container or CSV, chosen by extension).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tailcal_logit_set_load(
    path: *const c_char,
    out: *mut *mut TailcalLogitSet,
) -> TailcalStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("NULL pointer argument".into());
            return TailcalNullPointer;
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(s) => Path::new(s),
            Err(_) => {
                set_error("path is not valid UTF-8".into());
                return TailcalUsageError;
            }
        };
        match load_logits(path, Format::from_path(path)) {
            Ok(set) => {
                *out = Box::into_raw(Box::new(TailcalLogitSet(set)));
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Build a logit set from a dense row-major buffer and labels.
///
/// # Safety
/// `values` must hold `num_samples * num_classes` doubles, `labels` must
/// hold `num_samples` entries, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tailcal_logit_set_new(
    values: *const f64,
    labels: *const u32,
    num_samples: usize,
    num_classes: usize,
    out: *mut *mut TailcalLogitSet,
) -> TailcalStatus {
    guarded(|| {
        if values.is_null() || labels.is_null() || out.is_null() {
            set_error("NULL pointer argument".into());
            return TailcalNullPointer;
        }
        let values = std::slice::from_raw_parts(values, num_samples * num_classes).to_vec();
        let labels = std::slice::from_raw_parts(labels, num_samples)
            .iter()
            .map(|&y| y as usize)
            .collect();
        match LogitSet::new(values, labels, num_classes) {
            Ok(set) => {
                *out = Box::into_raw(Box::new(TailcalLogitSet(set)));
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `set` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn tailcal_logit_set_free(set: *mut TailcalLogitSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `set` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tailcal_logit_set_num_samples(set: *const TailcalLogitSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.num_samples())
}

/// Number of classes; 0 for NULL.
///
/// # Safety
/// `set` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tailcal_logit_set_num_classes(set: *const TailcalLogitSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.num_classes())
}

/// Fit the optimal scalar temperature by line search; line-search parameters
/// of 0 select the defaults (0.05, 10.0, 200 steps, 3 rounds, 0.1 factor).
///
/// # Safety
/// `set` must be a live handle; `out_t` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tailcal_fit_temperature(
    set: *const TailcalLogitSet,
    t_min: f64,
    t_max: f64,
    coarse_steps: usize,
    refine_rounds: usize,
    refine_factor: f64,
    out_t: *mut f64,
) -> TailcalStatus {
    guarded(|| {
        let Some(set) = set.as_ref() else {
            set_error("NULL logit set".into());
            return TailcalNullPointer;
        };
        if out_t.is_null() {
            set_error("NULL output pointer".into());
            return TailcalNullPointer;
        }
        let defaults = TsFitConfig::default();
        let cfg = TsFitConfig {
            t_min: if t_min > 0.0 { t_min } else { defaults.t_min },
            t_max: if t_max > 0.0 { t_max } else { defaults.t_max },
            coarse_steps: if coarse_steps > 0 { coarse_steps } else { defaults.coarse_steps },
            refine_rounds,
            refine_factor: if refine_factor > 0.0 { refine_factor } else { defaults.refine_factor },
        };
        match fit_optimal_temperature(&set.0, &cfg) {
            Ok(t) => {
                *out_t = t;
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Constant temperature vector.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tailcal_temps_constant(
    t: f64,
    num_classes: usize,
    out: *mut *mut TailcalTemps,
) -> TailcalStatus {
    guarded(|| {
        if out.is_null() {
            set_error("NULL output pointer".into());
            return TailcalNullPointer;
        }
        match TemperatureVector::constant(t, num_classes) {
            Ok(v) => {
                *out = Box::into_raw(Box::new(TailcalTemps(v)));
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Class-distribution-aware temperature vector `t_opt + gamma * f_c` from
/// raw per-class counts.
///
/// # Safety
/// `counts` must hold `num_classes` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tailcal_temps_cda(
    t_opt: f64,
    counts: *const u64,
    num_classes: usize,
    gamma: f64,
    out: *mut *mut TailcalTemps,
) -> TailcalStatus {
    guarded(|| {
        if counts.is_null() || out.is_null() {
            set_error("NULL pointer argument".into());
            return TailcalNullPointer;
        }
        let counts: Vec<usize> = std::slice::from_raw_parts(counts, num_classes)
            .iter()
            .map(|&c| c as usize)
            .collect();
        let profile = match ClassFrequencyProfile::from_counts(counts) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match cda_temperature(t_opt, &profile, &CdaConfig { gamma }) {
            Ok(v) => {
                *out = Box::into_raw(Box::new(TailcalTemps(v)));
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Copy the temperature entries into `buf` (length `len >= num_classes`).
///
/// # Safety
/// `temps` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tailcal_temps_values(
    temps: *const TailcalTemps,
    buf: *mut f64,
    len: usize,
) -> TailcalStatus {
    guarded(|| {
        let Some(temps) = temps.as_ref() else {
            set_error("NULL temperature vector".into());
            return TailcalNullPointer;
        };
        if buf.is_null() {
            set_error("NULL buffer".into());
            return TailcalNullPointer;
        }
        if len < temps.0.len() {
            set_error(format!("buffer holds {len}, need {}", temps.0.len()));
            return TailcalUsageError;
        }
        std::ptr::copy_nonoverlapping(temps.0.as_slice().as_ptr(), buf, temps.0.len());
        TailcalOk
    })
}

/// # Safety
/// `temps` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn tailcal_temps_free(temps: *mut TailcalTemps) {
    if !temps.is_null() {
        drop(Box::from_raw(temps));
    }
}

/// Temperature-scale the logits and write the probabilities row-major into
/// `buf` (length `num_samples * num_classes`).
///
/// # Safety
/// `set` and `temps` must be live handles; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tailcal_apply_temperature(
    set: *const TailcalLogitSet,
    temps: *const TailcalTemps,
    buf: *mut f64,
    len: usize,
) -> TailcalStatus {
    guarded(|| {
        let (Some(set), Some(temps)) = (set.as_ref(), temps.as_ref()) else {
            set_error("NULL handle argument".into());
            return TailcalNullPointer;
        };
        if buf.is_null() {
            set_error("NULL buffer".into());
            return TailcalNullPointer;
        }
        let needed = set.0.num_samples() * set.0.num_classes();
        if len < needed {
            set_error(format!("buffer holds {len}, need {needed}"));
            return TailcalUsageError;
        }
        match apply_temperature(&set.0, &temps.0) {
            Ok(probs) => {
                std::ptr::copy_nonoverlapping(probs.values().as_ptr(), buf, needed);
                TailcalOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Full metric suite as a JSON report string (caller frees). `temps` may be
/// NULL for unit temperature; metric parameters of 0 select the defaults
/// (10 bins, 1e-3 threshold, 10 ranges).
///
/// # Safety
/// `set` must be a live handle; `temps` a live handle or NULL; `out_json`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn tailcal_metrics_report_json(
    set: *const TailcalLogitSet,
    temps: *const TailcalTemps,
    num_bins: usize,
    tace_threshold: f64,
    tace_ranges: usize,
    out_json: *mut *mut c_char,
) -> TailcalStatus {
    guarded(|| {
        let Some(set) = set.as_ref() else {
            set_error("NULL logit set".into());
            return TailcalNullPointer;
        };
        if out_json.is_null() {
            set_error("NULL output pointer".into());
            return TailcalNullPointer;
        }
        let defaults = MetricsConfig::default();
        let cfg = MetricsConfig {
            num_bins: if num_bins > 0 { num_bins } else { defaults.num_bins },
            tace_threshold: if tace_threshold > 0.0 { tace_threshold } else { defaults.tace_threshold },
            tace_ranges: if tace_ranges > 0 { tace_ranges } else { defaults.tace_ranges },
        };
        let vector = match temps.as_ref() {
            Some(t) => t.0.clone(),
            None => match TemperatureVector::constant(1.0, set.0.num_classes()) {
                Ok(v) => v,
                Err(e) => return fail(e),
            },
        };
        let probs = match apply_temperature(&set.0, &vector) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match full_report(&probs, &cfg).and_then(|r| r.to_json_string()) {
            Ok(json) => match CString::new(json) {
                Ok(c) => {
                    *out_json = c.into_raw();
                    TailcalOk
                }
                Err(_) => {
                    set_error("embedded NUL in JSON output".into());
                    TailcalDataError
                }
            },
            Err(e) => fail(e),
        }
    })
}
