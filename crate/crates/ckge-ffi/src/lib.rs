//! C ABI over the continual KGE toolkit.
//!
//! Conventions:
//! - handles are opaque pointers created and freed by this library;
//! - fallible calls return a `CkgeStatus` code (0 = ok) or a null pointer,
//!   and stash a message retrievable via [`ckge_last_error`];
//! - strings returned by the library are freed with [`ckge_string_free`];
//! - all entry points catch panics and convert them to `CKGE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use ckge_core::error::Error;
use ckge_core::kg::{load_snapshot_sequence, SnapshotSequence};
use ckge_core::runner;
use ckge_core::snapgen::GrowthScenario;

/// Status codes for fallible calls.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CkgeStatus {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Validation = 3,
    Infeasible = 4,
    Bounds = 5,
    Numeric = 6,
    Config = 7,
    Contract = 8,
    MissingArtifact = 9,
    Domain = 10,
    Sampling = 11,
    NullPointer = 12,
    Utf8 = 13,
    Panic = 14,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstring = CString::new(msg.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> CkgeStatus {
    match err {
        Error::Io { .. } => CkgeStatus::Io,
        Error::Parse { .. } => CkgeStatus::Parse,
        Error::Validation(_) => CkgeStatus::Validation,
        Error::Infeasible(_) => CkgeStatus::Infeasible,
        Error::Bounds(_) => CkgeStatus::Bounds,
        Error::Numeric(_) => CkgeStatus::Numeric,
        Error::Config(_) => CkgeStatus::Config,
        Error::Contract(_) => CkgeStatus::Contract,
        Error::MissingArtifact(_) => CkgeStatus::MissingArtifact,
        Error::Domain(_) => CkgeStatus::Domain,
        Error::Sampling(_) => CkgeStatus::Sampling,
        Error::Json(_) => CkgeStatus::Config,
    }
}

fn fail(err: Error) -> CkgeStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn guard_status(f: impl FnOnce() -> Result<(), Error>) -> CkgeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CkgeStatus::Ok,
        Ok(Err(e)) => fail(e),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CkgeStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string or null.
unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, CkgeStatus> {
    if ptr.is_null() {
        set_error("null path".into());
        return Err(CkgeStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8".into());
            Err(CkgeStatus::Utf8)
        }
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn ckge_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the most recent error on this thread, or null when none.
/// The caller owns the returned string (free with [`ckge_string_free`]).
#[no_mangle]
pub extern "C" fn ckge_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|msg| msg.clone().into_raw())
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Frees a string previously returned by this library.
///
/// # Safety
/// `s` must be a pointer returned by a `ckge_*` function and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ckge_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque snapshot-sequence handle.
pub struct CkgeDataset {
    seq: SnapshotSequence,
}

/// Loads a snapshot-sequence directory. Returns null on error (see
/// [`ckge_last_error`]).
///
/// # Safety
/// `dir` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_load(dir: *const c_char) -> *mut CkgeDataset {
    let path = match path_arg(dir) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    let result = catch_unwind(|| load_snapshot_sequence(&path));
    match result {
        Ok(Ok(seq)) => Box::into_raw(Box::new(CkgeDataset { seq })),
        Ok(Err(e)) => {
            fail(e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("panic while loading dataset".into());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `ds` must be a pointer from [`ckge_dataset_load`], freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_free(ds: *mut CkgeDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of snapshots, or -1 on a null handle.
///
/// # Safety
/// `ds` must be a live pointer from [`ckge_dataset_load`] or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_snapshots(ds: *const CkgeDataset) -> i64 {
    match ds.as_ref() {
        Some(ds) => ds.seq.n_snapshots() as i64,
        None => -1,
    }
}

/// Cumulative entity count |E_i|, or -1 on bad arguments.
///
/// # Safety
/// `ds` must be a live pointer from [`ckge_dataset_load`] or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_entities(ds: *const CkgeDataset, snapshot: u64) -> i64 {
    match ds.as_ref() {
        Some(ds) if (snapshot as usize) < ds.seq.n_snapshots() => {
            ds.seq.entity_count(snapshot as usize) as i64
        }
        _ => -1,
    }
}

/// Cumulative relation count |R_i|, or -1 on bad arguments.
///
/// # Safety
/// `ds` must be a live pointer from [`ckge_dataset_load`] or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_relations(ds: *const CkgeDataset, snapshot: u64) -> i64 {
    match ds.as_ref() {
        Some(ds) if (snapshot as usize) < ds.seq.n_snapshots() => {
            ds.seq.relation_count(snapshot as usize) as i64
        }
        _ => -1,
    }
}

/// New triples at snapshot `i` in one split (0 = train, 1 = valid,
/// 2 = test), or -1 on bad arguments.
///
/// # Safety
/// `ds` must be a live pointer from [`ckge_dataset_load`] or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_dataset_triples(
    ds: *const CkgeDataset,
    snapshot: u64,
    split: u32,
) -> i64 {
    match ds.as_ref() {
        Some(ds) if (snapshot as usize) < ds.seq.n_snapshots() => {
            let snap = ds.seq.snapshot(snapshot as usize);
            match split {
                0 => snap.train.len() as i64,
                1 => snap.valid.len() as i64,
                2 => snap.test.len() as i64,
                _ => -1,
            }
        }
        _ => -1,
    }
}

/// Generates a growing snapshot sequence from a base triple TSV.
/// `scenario_json` carries the scenario as JSON, e.g.
/// `{"kind":"entity-growth","n_snapshots":5,"seed":7,
///   "test_fraction":0.1,"valid_fraction":0.05}`.
///
/// # Safety
/// All pointers must be valid NUL-terminated strings or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_generate(
    base_tsv: *const c_char,
    scenario_json: *const c_char,
    out_dir: *const c_char,
) -> CkgeStatus {
    let base = match path_arg(base_tsv) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let out = match path_arg(out_dir) {
        Ok(p) => p,
        Err(s) => return s,
    };
    if scenario_json.is_null() {
        set_error("null scenario".into());
        return CkgeStatus::NullPointer;
    }
    let scenario_text = match CStr::from_ptr(scenario_json).to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => {
            set_error("scenario is not valid UTF-8".into());
            return CkgeStatus::Utf8;
        }
    };
    guard_status(move || {
        let scenario: GrowthScenario = serde_json::from_str(&scenario_text)
            .map_err(|e| Error::Config(format!("scenario: {e}")))?;
        runner::cmd_generate(&base, &scenario, &out)
    })
}

/// Runs a full experiment from a JSON config file (see the repository README
/// for the schema). Artifacts land in the config's output directory.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_run(config_path: *const c_char) -> CkgeStatus {
    let path = match path_arg(config_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guard_status(move || runner::cmd_run(&path).map(|_| ()))
}

/// Recomputes the report for a run directory and returns it as text
/// (caller frees). Null on error.
///
/// # Safety
/// `run_dir` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn ckge_report(run_dir: *const c_char) -> *mut c_char {
    let path = match path_arg(run_dir) {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    match catch_unwind(|| runner::cmd_report(Path::new(&path))) {
        Ok(Ok(text)) => CString::new(text.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut()),
        Ok(Err(e)) => {
            fail(e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("panic in report".into());
            std::ptr::null_mut()
        }
    }
}

/// Verifies every analytic gradient against central finite differences.
#[no_mangle]
pub extern "C" fn ckge_gradcheck(instances: u64, seed: u64) -> CkgeStatus {
    guard_status(move || runner::cmd_gradcheck(instances as usize, seed).map(|_| ()))
}
