//! C ABI for scoring and explaining saved models from non-Rust callers.
//!
//! Conventions:
//!
//! * Every fallible function returns a [`TbStatus`]; `OK` is zero.
//! * Out-parameters are written only when the call succeeds.
//! * After a failure, [`tb_last_error_message`] returns a thread-local
//!   description of the cause, valid until the next API call on the same
//!   thread.
//! * [`TbModel`] handles come from the load functions, are immutable, may
//!   be shared across threads for concurrent scoring, and must be released
//!   with [`tb_model_free`].
//! * Rows are passed as arrays of C strings in model feature order. A null
//!   pointer, an empty string or `"NA"` is a missing value; numerical
//!   features parse the string as a float; categorical features take it
//!   verbatim (unseen categories are valid input).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use tavernboost::encoding::{FeatureEncoder, RawValue};
use tavernboost::gbdt::{Model, MODEL_FORMAT_VERSION};
use tavernboost::shap::tree_shap;
use tavernboost::Error;

/// Status code returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The model file could not be read.
    Io = 3,
    /// Malformed input: unparsable model JSON, an unsupported model
    /// version, or a cell that does not parse for its feature.
    Parse = 4,
    /// The request contradicts the model (e.g. wrong cell count).
    Domain = 5,
}

/// Opaque handle around a loaded model.
pub struct TbModel {
    model: Model,
    feature_names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn fail(status: TbStatus, message: &str) -> TbStatus {
    set_error(message);
    status
}

fn status_for(error: &Error) -> TbStatus {
    match error {
        Error::Io(_) => TbStatus::Io,
        Error::Json(_) | Error::Csv(_) | Error::Cell { .. } => TbStatus::Parse,
        _ => TbStatus::Domain,
    }
}

/// Message for the most recent failure on this thread; empty string if none.
/// The pointer stays valid until the next API call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

unsafe fn expect_str<'a>(pointer: *const c_char) -> Result<&'a str, TbStatus> {
    if pointer.is_null() {
        return Err(fail(
            TbStatus::NullArgument,
            "unexpected null string argument",
        ));
    }
    CStr::from_ptr(pointer)
        .to_str()
        .map_err(|_| fail(TbStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

fn into_handle(model: Model, out: *mut *mut TbModel) -> TbStatus {
    let mut feature_names = Vec::with_capacity(model.feature_names().len());
    for name in model.feature_names() {
        match CString::new(name.as_str()) {
            Ok(name) => feature_names.push(name),
            Err(_) => {
                return fail(
                    TbStatus::Parse,
                    &format!("feature name '{name}' contains a NUL byte"),
                )
            }
        }
    }
    let handle = Box::new(TbModel {
        model,
        feature_names,
    });
    unsafe { *out = Box::into_raw(handle) };
    TbStatus::Ok
}

fn parse_model(json: &str) -> Result<Model, TbStatus> {
    let model: Model =
        serde_json::from_str(json).map_err(|e| fail(TbStatus::Parse, &e.to_string()))?;
    if model.version != MODEL_FORMAT_VERSION {
        return Err(fail(
            TbStatus::Parse,
            &format!(
                "unsupported model version '{}', expected '{MODEL_FORMAT_VERSION}'",
                model.version
            ),
        ));
    }
    Ok(model)
}

/// Load a model from a JSON file. On success writes a new handle to `out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_model_load(path: *const c_char, out: *mut *mut TbModel) -> TbStatus {
    if out.is_null() {
        return fail(TbStatus::NullArgument, "out handle pointer is null");
    }
    let path = match expect_str(path) {
        Ok(path) => path,
        Err(status) => return status,
    };
    match Model::load(Path::new(path)) {
        Ok(model) => into_handle(model, out),
        Err(error) => fail(status_for(&error), &error.to_string()),
    }
}

/// Parse a model from an in-memory JSON string.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_model_from_json(
    json: *const c_char,
    out: *mut *mut TbModel,
) -> TbStatus {
    if out.is_null() {
        return fail(TbStatus::NullArgument, "out handle pointer is null");
    }
    let json = match expect_str(json) {
        Ok(json) => json,
        Err(status) => return status,
    };
    match parse_model(json) {
        Ok(model) => into_handle(model, out),
        Err(status) => status,
    }
}

/// Release a handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from a load function, released at most once.
#[no_mangle]
pub unsafe extern "C" fn tb_model_free(model: *mut TbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the model expects per row; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_model_feature_count(model: *const TbModel) -> usize {
    model.as_ref().map_or(0, |m| m.feature_names.len())
}

/// Name of feature `index`, or null when the handle is null or the index
/// is out of range. The pointer stays valid for the handle's lifetime.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_model_feature_name(
    model: *const TbModel,
    index: usize,
) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.feature_names.get(index))
        .map_or(ptr::null(), |name| name.as_ptr())
}

unsafe fn build_cells<'a>(
    handle: &TbModel,
    cells: *const *const c_char,
    n_cells: usize,
) -> Result<Vec<RawValue<'a>>, TbStatus> {
    let expected = handle.feature_names.len();
    if n_cells != expected {
        return Err(fail(
            TbStatus::Domain,
            &format!("row has {n_cells} cells, model expects {expected}"),
        ));
    }
    if cells.is_null() {
        return Err(fail(TbStatus::NullArgument, "cells array is null"));
    }
    let mut row = Vec::with_capacity(n_cells);
    for index in 0..n_cells {
        let pointer = *cells.add(index);
        if pointer.is_null() {
            row.push(RawValue::Missing);
            continue;
        }
        let text = expect_str(pointer)?;
        if text.is_empty() || text == "NA" {
            row.push(RawValue::Missing);
            continue;
        }
        match &handle.model.encoders.encoders[index] {
            FeatureEncoder::Numerical { .. } => match text.parse::<f64>() {
                Ok(value) => row.push(RawValue::Number(value)),
                Err(_) => {
                    return Err(fail(
                        TbStatus::Parse,
                        &format!(
                            "feature '{}' expects a number, got '{text}'",
                            handle.model.feature_names()[index]
                        ),
                    ))
                }
            },
            FeatureEncoder::Categorical { .. } => row.push(RawValue::Text(text)),
        }
    }
    Ok(row)
}

/// Event probability for one row. `cells` holds `n_cells` C strings in
/// model feature order (see the module docs for the cell format).
///
/// # Safety
/// `model` must be a live handle; `cells` must point to `n_cells` valid
/// entries; `out_probability` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_model_predict(
    model: *const TbModel,
    cells: *const *const c_char,
    n_cells: usize,
    out_probability: *mut f64,
) -> TbStatus {
    let Some(handle) = model.as_ref() else {
        return fail(TbStatus::NullArgument, "model handle is null");
    };
    if out_probability.is_null() {
        return fail(TbStatus::NullArgument, "out probability pointer is null");
    }
    let row = match build_cells(handle, cells, n_cells) {
        Ok(row) => row,
        Err(status) => return status,
    };
    match handle.model.proba_for_cells(&row) {
        Ok(probability) => {
            *out_probability = probability;
            TbStatus::Ok
        }
        Err(error) => fail(status_for(&error), &error.to_string()),
    }
}

/// Per-feature attributions for one row. Writes `phi_len == n_cells`
/// values (log-odds units, model feature order) and the shared base value;
/// base value + Σφ equals the row's margin.
///
/// # Safety
/// `model` must be a live handle; `cells` must point to `n_cells` valid
/// entries; `out_phi` must have room for `phi_len` doubles and
/// `out_base_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_model_attributions(
    model: *const TbModel,
    cells: *const *const c_char,
    n_cells: usize,
    out_phi: *mut f64,
    phi_len: usize,
    out_base_value: *mut f64,
) -> TbStatus {
    let Some(handle) = model.as_ref() else {
        return fail(TbStatus::NullArgument, "model handle is null");
    };
    if out_phi.is_null() || out_base_value.is_null() {
        return fail(TbStatus::NullArgument, "attribution out pointer is null");
    }
    if phi_len != handle.feature_names.len() {
        return fail(
            TbStatus::Domain,
            &format!(
                "phi buffer holds {phi_len} values, model has {} features",
                handle.feature_names.len()
            ),
        );
    }
    let row = match build_cells(handle, cells, n_cells) {
        Ok(row) => row,
        Err(status) => return status,
    };
    let encoded = match handle.model.encoders.encode_row(&row) {
        Ok(encoded) => encoded,
        Err(error) => return fail(status_for(&error), &error.to_string()),
    };
    match tree_shap(&handle.model.ensemble, &encoded) {
        Ok(shap) => {
            std::ptr::copy_nonoverlapping(shap.phi.as_ptr(), out_phi, phi_len);
            *out_base_value = shap.base_value;
            TbStatus::Ok
        }
        Err(error) => fail(status_for(&error), &error.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tavernboost::dataset::{Column, Dataset};
    use tavernboost::gbdt::TrainParams;
    use tavernboost::harness::run_fold;
    use tavernboost::schema::{FeatureKind, FeatureSchema};

    /// Train a tiny model over one numeric and one categorical feature.
    fn tiny_model() -> Model {
        let age = Column::numeric(
            FeatureSchema::new("AGE", FeatureKind::Numerical),
            (0..20)
                .map(|i| {
                    if i == 4 {
                        None
                    } else {
                        Some(50.0 + (i % 9) as f64 * 3.0 + (i % 2) as f64 * 10.0)
                    }
                })
                .collect(),
        );
        let group = Column::text(
            FeatureSchema::new("GROUP", FeatureKind::Categorical),
            (0..20)
                .map(|i| {
                    if i == 7 {
                        None
                    } else {
                        Some(["a", "b"][i % 2].to_string())
                    }
                })
                .collect(),
        );
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let ds = Dataset::new(vec![age, group], labels, "Y").unwrap();
        let rows: Vec<usize> = (0..20).collect();
        let params = TrainParams {
            iterations: 15,
            learning_rate: 0.3,
            max_depth: 3,
            min_samples_leaf: 1,
            l2_leaf_regularization: 1.0,
            seed: 5,
        };
        // Reuse the harness path so encoders and ensemble stay consistent.
        let run = run_fold(&ds, &rows, &[], &params, None, 9).unwrap();
        run.model
    }

    fn load_handle(model: &Model) -> *mut TbModel {
        let json = CString::new(model.to_json().unwrap()).unwrap();
        let mut handle: *mut TbModel = ptr::null_mut();
        let status = unsafe { tb_model_from_json(json.as_ptr(), &mut handle) };
        assert_eq!(status, TbStatus::Ok);
        assert!(!handle.is_null());
        handle
    }

    fn cell_pointers(cells: &[CString]) -> Vec<*const c_char> {
        cells.iter().map(|c| c.as_ptr()).collect()
    }

    #[test]
    fn predict_matches_in_process_scoring() {
        let model = tiny_model();
        let handle = load_handle(&model);
        let cells = [CString::new("61.5").unwrap(), CString::new("a").unwrap()];
        let pointers = cell_pointers(&cells);
        let mut probability = f64::NAN;
        let status = unsafe {
            tb_model_predict(handle, pointers.as_ptr(), pointers.len(), &mut probability)
        };
        assert_eq!(status, TbStatus::Ok);
        let direct = model
            .proba_for_cells(&[RawValue::Number(61.5), RawValue::Text("a")])
            .unwrap();
        assert_eq!(probability, direct);
        unsafe { tb_model_free(handle) };
    }

    #[test]
    fn missing_cells_accept_null_empty_and_na() {
        let model = tiny_model();
        let handle = load_handle(&model);
        let direct = model
            .proba_for_cells(&[RawValue::Missing, RawValue::Missing])
            .unwrap();
        let empty = CString::new("").unwrap();
        let na = CString::new("NA").unwrap();
        for pointers in [
            vec![ptr::null(), ptr::null()],
            vec![empty.as_ptr(), na.as_ptr()],
        ] {
            let mut probability = f64::NAN;
            let status = unsafe {
                tb_model_predict(handle, pointers.as_ptr(), pointers.len(), &mut probability)
            };
            assert_eq!(status, TbStatus::Ok);
            assert_eq!(probability, direct);
        }
        unsafe { tb_model_free(handle) };
    }

    #[test]
    fn attributions_reconstruct_the_margin() {
        let model = tiny_model();
        let handle = load_handle(&model);
        let cells = [CString::new("77").unwrap(), CString::new("b").unwrap()];
        let pointers = cell_pointers(&cells);
        let mut phi = [f64::NAN; 2];
        let mut base = f64::NAN;
        let status = unsafe {
            tb_model_attributions(handle, pointers.as_ptr(), 2, phi.as_mut_ptr(), 2, &mut base)
        };
        assert_eq!(status, TbStatus::Ok);
        let margin = model
            .margin_for_cells(&[RawValue::Number(77.0), RawValue::Text("b")])
            .unwrap();
        assert!((base + phi.iter().sum::<f64>() - margin).abs() < 1e-9);
        unsafe { tb_model_free(handle) };
    }

    #[test]
    fn errors_set_status_and_message() {
        let model = tiny_model();
        let handle = load_handle(&model);

        // Wrong arity.
        let one = [CString::new("61.5").unwrap()];
        let pointers = cell_pointers(&one);
        let mut probability = 0.0;
        let status = unsafe { tb_model_predict(handle, pointers.as_ptr(), 1, &mut probability) };
        assert_eq!(status, TbStatus::Domain);
        let message = unsafe { CStr::from_ptr(tb_last_error_message()) };
        assert!(message.to_str().unwrap().contains("model expects 2"));

        // Unparsable number.
        let cells = [CString::new("old").unwrap(), CString::new("a").unwrap()];
        let pointers = cell_pointers(&cells);
        let status = unsafe { tb_model_predict(handle, pointers.as_ptr(), 2, &mut probability) };
        assert_eq!(status, TbStatus::Parse);

        // Null handle and null out-pointer.
        let status =
            unsafe { tb_model_predict(ptr::null(), pointers.as_ptr(), 2, &mut probability) };
        assert_eq!(status, TbStatus::NullArgument);
        let status = unsafe { tb_model_predict(handle, pointers.as_ptr(), 2, ptr::null_mut()) };
        assert_eq!(status, TbStatus::NullArgument);

        // Unseen categories are fine (recurrence count 0), not an error.
        let cells = [CString::new("61.5").unwrap(), CString::new("zzz").unwrap()];
        let pointers = cell_pointers(&cells);
        let status = unsafe { tb_model_predict(handle, pointers.as_ptr(), 2, &mut probability) };
        assert_eq!(status, TbStatus::Ok);

        unsafe { tb_model_free(handle) };
    }

    #[test]
    fn handle_metadata_is_exposed() {
        let model = tiny_model();
        let handle = load_handle(&model);
        unsafe {
            assert_eq!(tb_model_feature_count(handle), 2);
            let name = CStr::from_ptr(tb_model_feature_name(handle, 0));
            assert_eq!(name.to_str().unwrap(), "AGE");
            assert!(tb_model_feature_name(handle, 2).is_null());
            assert_eq!(tb_model_feature_count(ptr::null()), 0);
            tb_model_free(handle);
            tb_model_free(ptr::null_mut());
        }
    }

    #[test]
    fn rejects_malformed_and_mismatched_json() {
        let mut handle: *mut TbModel = ptr::null_mut();
        let junk = CString::new("{not json").unwrap();
        let status = unsafe { tb_model_from_json(junk.as_ptr(), &mut handle) };
        assert_eq!(status, TbStatus::Parse);
        assert!(handle.is_null());

        let mut model = tiny_model();
        model.version = "something-else".to_string();
        let json = CString::new(model.to_json().unwrap()).unwrap();
        let status = unsafe { tb_model_from_json(json.as_ptr(), &mut handle) };
        assert_eq!(status, TbStatus::Parse);

        let status = unsafe { tb_model_from_json(ptr::null(), &mut handle) };
        assert_eq!(status, TbStatus::NullArgument);

        let path = CString::new("/nonexistent/model.json").unwrap();
        let status = unsafe { tb_model_load(path.as_ptr(), &mut handle) };
        assert_eq!(status, TbStatus::Io);
    }

    #[test]
    fn version_string_is_exposed() {
        let version = unsafe { CStr::from_ptr(tb_version()) };
        assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn ffi_scoring_agrees_with_the_encode_then_predict_path() {
        let model = tiny_model();
        let rows = vec![
            vec![RawValue::Number(53.0), RawValue::Text("a")],
            vec![RawValue::Missing, RawValue::Text("b")],
        ];
        for cells in &rows {
            let encoded = model.encoders.encode_row(cells).unwrap();
            let margin = model.ensemble.predict_margin(&encoded).unwrap();
            assert_eq!(margin, model.margin_for_cells(cells).unwrap());
        }
        let reparsed: Model = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, reparsed);
    }
}
