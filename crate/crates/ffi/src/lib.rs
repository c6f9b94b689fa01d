//! C ABI for training and applying dynchain ensembles.
//!
//! Datasets and ensembles are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns a
//! [`DynchainStatus`]; on failure [`dynchain_last_error`] describes the cause.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dynchain::dataset::load_csv;
use dynchain::ensemble::{build_ensemble, BaseModel, Ensemble, EnsembleConfig, Ordering, Tunable};
use dynchain::{Error, MultiLabelDataset, RngSeed};
use ndarray::Array2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynchainStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    IoError = 4,
    InternalError = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynchainBase {
    NaiveBayes = 0,
    NearestNeighbour = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynchainOrdering {
    Dynamic = 0,
    Random = 1,
    /// Identity order for every member.
    Fixed = 2,
    BinaryRelevance = 3,
}

/// Training settings. Start from [`dynchain_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DynchainConfig {
    pub k: u32,
    pub base: DynchainBase,
    pub ordering: DynchainOrdering,
    /// Membership sharpness; 0 or negative means tune by cross-validation.
    pub beta: f64,
    /// Neighbour count for the nearest-neighbour base; 0 means tune.
    pub r: u32,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct DynchainDataset(MultiLabelDataset);

/// Opaque trained-ensemble handle.
pub struct DynchainEnsemble(Ensemble);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DynchainStatus {
    match e {
        Error::Io { .. } => DynchainStatus::IoError,
        Error::Argument(_) | Error::Unsupported(_) => DynchainStatus::InvalidArgument,
        Error::Member { source, .. } => status_of(source),
        e if e.is_data_error() => DynchainStatus::DataError,
        _ => DynchainStatus::InternalError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (DynchainStatus, String)>) -> DynchainStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DynchainStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DynchainStatus::InternalError
        }
    }
}

fn lib(e: Error) -> (DynchainStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DynchainStatus, String) {
    (DynchainStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<String, (DynchainStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (DynchainStatus::InvalidArgument, "path is not UTF-8".into()))
}

impl DynchainConfig {
    fn to_config(self) -> EnsembleConfig {
        EnsembleConfig {
            k: self.k as usize,
            base: match self.base {
                DynchainBase::NaiveBayes => BaseModel::NaiveBayes,
                DynchainBase::NearestNeighbour => BaseModel::NearestNeighbour,
            },
            ordering: match self.ordering {
                DynchainOrdering::Dynamic => Ordering::Dynamic,
                DynchainOrdering::Random => Ordering::Random,
                DynchainOrdering::Fixed => Ordering::Fixed(None),
                DynchainOrdering::BinaryRelevance => Ordering::BinaryRelevance,
            },
            beta: if self.beta > 0.0 { Tunable::Value(self.beta) } else { Tunable::Tune },
            r: if self.r > 0 { Tunable::Value(self.r as usize) } else { Tunable::Tune },
            seed: RngSeed(self.seed),
            ..EnsembleConfig::default()
        }
    }
}

/// Default settings: 20 naive Bayes members, dynamic order, β and r tuned, seed 0.
#[no_mangle]
pub extern "C" fn dynchain_config_default() -> DynchainConfig {
    DynchainConfig {
        k: 20,
        base: DynchainBase::NaiveBayes,
        ordering: DynchainOrdering::Dynamic,
        beta: 0.0,
        r: 0,
        seed: 0,
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dynchain_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a CSV file whose last `label_count` columns are 0/1 labels.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_load_csv(
    path: *const c_char,
    label_count: usize,
    out: *mut *mut DynchainDataset,
) -> DynchainStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let ds = load_csv(path, label_count).map_err(lib)?;
        *out = Box::into_raw(Box::new(DynchainDataset(ds)));
        Ok(())
    })
}

/// Builds a dataset from row-major arrays: `features` holds `n_rows·n_features`
/// values and `labels` holds `n_rows·n_labels` values of 0 or 1.
///
/// # Safety
/// The arrays must hold the stated number of elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_from_arrays(
    features: *const f64,
    labels: *const u8,
    n_rows: usize,
    n_features: usize,
    n_labels: usize,
    out: *mut *mut DynchainDataset,
) -> DynchainStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if features.is_null() || labels.is_null() {
            return Err(null("array"));
        }
        let f = std::slice::from_raw_parts(features, n_rows * n_features).to_vec();
        let y = std::slice::from_raw_parts(labels, n_rows * n_labels).to_vec();
        let f = Array2::from_shape_vec((n_rows, n_features), f)
            .map_err(|e| (DynchainStatus::InvalidArgument, e.to_string()))?;
        let y = Array2::from_shape_vec((n_rows, n_labels), y)
            .map_err(|e| (DynchainStatus::InvalidArgument, e.to_string()))?;
        let ds = MultiLabelDataset::from_arrays(f, y).map_err(lib)?;
        *out = Box::into_raw(Box::new(DynchainDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_rows(ds: *const DynchainDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_rows())
}

/// # Safety
/// As [`dynchain_dataset_rows`].
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_features(ds: *const DynchainDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features())
}

/// # Safety
/// As [`dynchain_dataset_rows`].
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_labels(ds: *const DynchainDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_labels())
}

/// # Safety
/// `ds` must be null or an unfreed handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dynchain_dataset_free(ds: *mut DynchainDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains an ensemble on `ds`.
///
/// # Safety
/// `ds` must be a live handle, `config` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_train(
    ds: *const DynchainDataset,
    config: *const DynchainConfig,
    out: *mut *mut DynchainEnsemble,
) -> DynchainStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ens = build_ensemble(&ds.0, &config.to_config()).map_err(lib)?;
        *out = Box::into_raw(Box::new(DynchainEnsemble(ens)));
        Ok(())
    })
}

/// Predicts one row. `hard_out` receives 0/1 per label; `scores_out` (may be
/// null) receives the fraction of members voting for each label.
///
/// # Safety
/// `x` must hold `n_features` values; the output arrays `n_labels` elements.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_predict(
    ens: *const DynchainEnsemble,
    x: *const f64,
    n_features: usize,
    hard_out: *mut u8,
    scores_out: *mut f64,
    n_labels: usize,
) -> DynchainStatus {
    guard(|| {
        let ens = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        if x.is_null() || hard_out.is_null() {
            return Err(null("buffer"));
        }
        if n_labels != ens.0.n_labels() {
            return Err((
                DynchainStatus::InvalidArgument,
                format!("output holds {n_labels} labels, ensemble predicts {}", ens.0.n_labels()),
            ));
        }
        let x = std::slice::from_raw_parts(x, n_features);
        let p = ens.0.predict(x).map_err(lib)?;
        std::slice::from_raw_parts_mut(hard_out, n_labels).copy_from_slice(&p.hard);
        if !scores_out.is_null() {
            std::slice::from_raw_parts_mut(scores_out, n_labels).copy_from_slice(&p.scores);
        }
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_features(ens: *const DynchainEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.0.n_features())
}

/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_labels(ens: *const DynchainEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.0.n_labels())
}

/// Writes the ensemble into directory `dir` (created if missing).
///
/// # Safety
/// `ens` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_save(ens: *const DynchainEnsemble, dir: *const c_char) -> DynchainStatus {
    guard(|| {
        let ens = ens.as_ref().ok_or_else(|| null("ensemble"))?;
        let dir = path_arg(dir)?;
        ens.0.save(dir).map_err(lib)
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_load(dir: *const c_char, out: *mut *mut DynchainEnsemble) -> DynchainStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = path_arg(dir)?;
        let ens = Ensemble::load(dir).map_err(lib)?;
        *out = Box::into_raw(Box::new(DynchainEnsemble(ens)));
        Ok(())
    })
}

/// # Safety
/// `ens` must be null or an unfreed handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dynchain_ensemble_free(ens: *mut DynchainEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}
