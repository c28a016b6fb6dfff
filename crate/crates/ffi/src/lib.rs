//! C ABI over `mcd-core`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`/`*_load`
//! function and released by the matching `*_free`. Every fallible call
//! returns an [`McdStatus`]; on failure [`mcd_last_error`] describes what went
//! wrong on the calling thread. Node sets and assignments are passed as
//! comma-separated strings (`"X_S,U"`, `"X_T=1,U=0"`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mcd_core::graph::{
    find_active_path, is_d_separated, render_path, Dag, GraphError, GraphSpec, NodeSet,
};
use mcd_core::rationale::{evaluate_split, Checkpoint};
use mcd_core::scm::{beer_toy_scm_with, Assignment, DiscreteScm, ScmError};
use mcd_core::text::{Example, MAX_LEN};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidGraph = 4,
    InvalidQuery = 5,
    ZeroProbability = 6,
    InvalidModel = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A validated directed acyclic graph.
pub struct McdDag(Dag);

/// A discrete structural causal model supporting exact queries.
pub struct McdScm(DiscreteScm);

/// A trained rationalizer loaded from a checkpoint.
pub struct McdModel(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

struct Failure(McdStatus, String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match e {
            GraphError::InvalidQuery(_) => McdStatus::InvalidQuery,
            GraphError::File { .. } => McdStatus::Parse,
            _ => McdStatus::InvalidGraph,
        };
        Failure(status, e.to_string())
    }
}

impl From<ScmError> for Failure {
    fn from(e: ScmError) -> Self {
        let status = match &e {
            ScmError::Graph(g) => return g.clone().into(),
            ScmError::InvalidQuery(_) => McdStatus::InvalidQuery,
            ScmError::ZeroProbabilityEvidence(_) => McdStatus::ZeroProbability,
            ScmError::InvalidModel(_) | ScmError::InvalidCorpusSpec(_) => McdStatus::InvalidGraph,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, records any failure or panic, and maps it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            McdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            McdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(McdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(McdStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers promise a valid, writable pointer when non-null
    unsafe { p.as_mut() }.ok_or_else(|| Failure(McdStatus::NullPointer, format!("{what} is null")))
}

fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers promise a live handle from this library when non-null
    unsafe { p.as_ref() }.ok_or_else(|| Failure(McdStatus::NullPointer, format!("{what} is null")))
}

fn node_set(s: &str) -> NodeSet {
    s.split(',')
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .collect()
}

fn parse_assignment(s: &str) -> Result<Assignment, Failure> {
    let mut out = Assignment::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| Failure(McdStatus::Parse, format!("`{part}` is not NAME=VALUE")))?;
        let value: i64 = value.trim().parse().map_err(|_| {
            Failure(
                McdStatus::Parse,
                format!("`{part}` has a non-integer value"),
            )
        })?;
        out.insert(name.trim().to_string(), value);
    }
    Ok(out)
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the most recent failure on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a graph from JSON `{"nodes": [...], "edges": [[parent, child], ...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mcd_dag_from_json(
    json: *const c_char,
    out: *mut *mut McdDag,
) -> McdStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let spec: GraphSpec = serde_json::from_str(text).map_err(|e| {
            Failure(
                McdStatus::Parse,
                format!("line {} column {}: {e}", e.line(), e.column()),
            )
        })?;
        *out = Box::into_raw(Box::new(McdDag(Dag::from_spec(&spec)?)));
        Ok(())
    })
}

/// # Safety
/// `dag` must be null or a handle from [`mcd_dag_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcd_dag_free(dag: *mut McdDag) {
    if !dag.is_null() {
        drop(Box::from_raw(dag));
    }
}

/// Writes whether `a` and `b` are d-separated given `c` into `out`.
///
/// # Safety
/// `dag` must be a live handle, `a`, `b`, `c` NUL-terminated strings (`c`
/// may be empty), and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_dag_is_d_separated(
    dag: *const McdDag,
    a: *const c_char,
    b: *const c_char,
    c: *const c_char,
    out: *mut bool,
) -> McdStatus {
    guard(|| {
        let g = &handle(dag, "dag")?.0;
        let (a, b, c) = (str_arg(a, "a")?, str_arg(b, "b")?, str_arg(c, "c")?);
        let out = out_arg(out, "out")?;
        *out = is_d_separated(g, &node_set(a), &node_set(b), &node_set(c))?;
        Ok(())
    })
}

/// Writes an unblocked path such as `"X_T <- U -> X_S"` into `*out`, or null
/// when the sets are d-separated. Release the string with [`mcd_string_free`].
///
/// # Safety
/// As for [`mcd_dag_is_d_separated`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_dag_active_path(
    dag: *const McdDag,
    a: *const c_char,
    b: *const c_char,
    c: *const c_char,
    out: *mut *mut c_char,
) -> McdStatus {
    guard(|| {
        let g = &handle(dag, "dag")?.0;
        let (a, b, c) = (str_arg(a, "a")?, str_arg(b, "b")?, str_arg(c, "c")?);
        let out = out_arg(out, "out")?;
        *out = match find_active_path(g, &node_set(a), &node_set(b), &node_set(c))? {
            Some(p) => into_c_string(render_path(g, &p)),
            None => ptr::null_mut(),
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn mcd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The confounded four-node toy model `U → X_T`, `U → X_S → Y_S` with the
/// given confounder strength and label fidelity.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_scm_toy(
    correlation_strength: f64,
    label_fidelity: f64,
    out: *mut *mut McdScm,
) -> McdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let scm = beer_toy_scm_with(correlation_strength, label_fidelity)?;
        *out = Box::into_raw(Box::new(McdScm(scm)));
        Ok(())
    })
}

/// Random binary CPTs on `dag`, drawn from `seed`.
///
/// # Safety
/// `dag` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_scm_random_binary(
    dag: *const McdDag,
    seed: u64,
    out: *mut *mut McdScm,
) -> McdStatus {
    guard(|| {
        let g = handle(dag, "dag")?.0.clone();
        let out = out_arg(out, "out")?;
        let mut rng = mcd_core::rng::stream(seed, mcd_core::rng::Stream::Data);
        *out = Box::into_raw(Box::new(McdScm(DiscreteScm::random_binary(g, &mut rng))));
        Ok(())
    })
}

/// # Safety
/// `scm` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn mcd_scm_free(scm: *mut McdScm) {
    if !scm.is_null() {
        drop(Box::from_raw(scm));
    }
}

/// Exact `P(target | evidence)`; both are `NAME=VALUE` lists, evidence may
/// be empty.
///
/// # Safety
/// `scm` must be a live handle, the strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_scm_query(
    scm: *const McdScm,
    target: *const c_char,
    evidence: *const c_char,
    out: *mut f64,
) -> McdStatus {
    guard(|| {
        let m = &handle(scm, "scm")?.0;
        let t = parse_assignment(str_arg(target, "target")?)?;
        let e = parse_assignment(str_arg(evidence, "evidence")?)?;
        let out = out_arg(out, "out")?;
        *out = m.query(&t, &e)?;
        Ok(())
    })
}

/// Largest conditional-independence violation between `a` and `b` given `c`.
///
/// # Safety
/// As for [`mcd_scm_query`].
#[no_mangle]
pub unsafe extern "C" fn mcd_scm_ci_gap(
    scm: *const McdScm,
    a: *const c_char,
    b: *const c_char,
    c: *const c_char,
    out: *mut f64,
) -> McdStatus {
    guard(|| {
        let m = &handle(scm, "scm")?.0;
        let (a, b, c) = (str_arg(a, "a")?, str_arg(b, "b")?, str_arg(c, "c")?);
        let out = out_arg(out, "out")?;
        *out = m.ci_gap(&node_set(a), &node_set(b), &node_set(c))?;
        Ok(())
    })
}

/// Loads a checkpoint written by `mcd train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_model_load(path: *const c_char, out: *mut *mut McdModel) -> McdStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(Path::new(path)).map_err(|e| {
            let status = match e {
                mcd_core::rationale::RationaleError::Io(_) => McdStatus::Io,
                _ => McdStatus::InvalidModel,
            };
            Failure(status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(McdModel(ck)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn mcd_model_free(model: *mut McdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Selects a rationale for whitespace-separated `text` (truncated to 256
/// tokens). Writes one 0/1 byte per token into `mask` (capacity `cap`), the
/// token count into `len` and the predicted probability of class 1 into
/// `prob_positive`. When `cap` is too small, only `len` is written and
/// [`McdStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `model` must be a live handle, `text` NUL-terminated, `mask` valid for
/// `cap` bytes (may be null when `cap` is 0), `len` and `prob_positive`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mcd_model_explain(
    model: *const McdModel,
    text: *const c_char,
    mask: *mut u8,
    cap: usize,
    len: *mut usize,
    prob_positive: *mut f64,
) -> McdStatus {
    guard(|| {
        let ck = &handle(model, "model")?.0;
        let text = str_arg(text, "text")?;
        let len = out_arg(len, "len")?;
        let prob = out_arg(prob_positive, "prob_positive")?;
        let ids: Vec<usize> = text
            .split_whitespace()
            .take(MAX_LEN)
            .map(|t| ck.vocab.id(t))
            .collect();
        if ids.is_empty() {
            return Err(Failure(
                McdStatus::InvalidQuery,
                "text has no tokens".into(),
            ));
        }
        *len = ids.len();
        if cap < ids.len() || mask.is_null() {
            return Err(Failure(
                McdStatus::BufferTooSmall,
                format!("mask buffer holds {cap} bytes, need {}", ids.len()),
            ));
        }
        let ex = Example {
            ids,
            label: 0,
            gold: None,
        };
        let ev = evaluate_split(&ck.model, std::slice::from_ref(&ex), 1);
        let dst = std::slice::from_raw_parts_mut(mask, ex.ids.len());
        dst.copy_from_slice(&ev.masks[0]);
        *prob = ev.rationale_probs[0].probs().get(1).copied().unwrap_or(0.0);
        Ok(())
    })
}
