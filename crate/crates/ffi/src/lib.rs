//! C interface to trained policies, benchmark functions and expected
//! improvement.
//!
//! Every fallible function returns an [`RbStatus`]; on failure the message
//! is available from [`rb_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use rnnbbo::benchmarks::{AnalyticBenchmark, PerturbedInstance};
use rnnbbo::gp::expected_improvement_value;
use rnnbbo::{Checkpoint, LstmPolicy, ObservationScale, PolicyError, PolicySession, SearchSpace};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    UnknownTicket = 5,
    NonFinite = 6,
    Panic = 7,
}

/// A loaded policy checkpoint.
pub struct RbPolicy {
    checkpoint: Checkpoint,
    policy: Arc<LstmPolicy>,
}

/// An ask/tell optimization session driven by a policy.
pub struct RbSession {
    inner: PolicySession<Arc<LstmPolicy>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: RbStatus, msg: impl Into<String>) -> RbStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RbStatus) -> RbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == RbStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(RbStatus::Panic, "internal panic"),
    }
}

fn policy_status(e: &PolicyError) -> RbStatus {
    match e {
        PolicyError::UnknownTicket(_) => RbStatus::UnknownTicket,
        PolicyError::NonFinite { .. } | PolicyError::NonFiniteParam(_) | PolicyError::NonFiniteObservation(_) => {
            RbStatus::NonFinite
        }
        _ => RbStatus::InvalidArgument,
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, RbStatus> {
    if p.is_null() {
        return Err(fail(RbStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RbStatus::InvalidArgument, "string is not UTF-8"))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_policy_load(path: *const c_char, out: *mut *mut RbPolicy) -> RbStatus {
    guard(|| {
        if out.is_null() {
            return fail(RbStatus::NullPointer, "null output pointer");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Checkpoint::load(Path::new(path)) {
            Ok(c) => {
                let policy = Arc::new(c.policy.clone());
                *out = Box::into_raw(Box::new(RbPolicy { checkpoint: c, policy }));
                RbStatus::Ok
            }
            Err(e @ rnnbbo::checkpoint::CheckpointError::Io { .. }) => fail(RbStatus::Io, e.to_string()),
            Err(e) => fail(RbStatus::Parse, e.to_string()),
        }
    })
}

/// Input dimension of the policy, or 0 for NULL.
///
/// # Safety
/// `policy` must be NULL or a handle from [`rb_policy_load`].
#[no_mangle]
pub unsafe extern "C" fn rb_policy_dim(policy: *const RbPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.policy.dim())
}

/// Releases a policy. NULL is ignored.
///
/// # Safety
/// `policy` must be NULL or an unreleased handle from [`rb_policy_load`].
#[no_mangle]
pub unsafe extern "C" fn rb_policy_free(policy: *mut RbPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Starts a session. `lower` and `upper` give the box (both NULL selects the
/// checkpoint's own box); observations are fed to the policy as
/// `(y - shift) / scale`.
///
/// # Safety
/// `policy` must be a live handle; `lower`/`upper` NULL or pointing to
/// `dim` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rb_session_new(
    policy: *const RbPolicy,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    shift: f64,
    scale: f64,
    out: *mut *mut RbSession,
) -> RbStatus {
    guard(|| {
        let Some(p) = policy.as_ref() else { return fail(RbStatus::NullPointer, "null policy") };
        if out.is_null() {
            return fail(RbStatus::NullPointer, "null output pointer");
        }
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return fail(RbStatus::InvalidArgument, "scale must be positive and finite");
        }
        let space = match (lower.is_null(), upper.is_null()) {
            (true, true) => p.checkpoint.space.clone(),
            (false, false) => {
                let lo = std::slice::from_raw_parts(lower, dim).to_vec();
                let hi = std::slice::from_raw_parts(upper, dim).to_vec();
                match SearchSpace::new(lo, hi, vec![false; dim]) {
                    Ok(s) => s,
                    Err(e) => return fail(RbStatus::InvalidArgument, e.to_string()),
                }
            }
            _ => return fail(RbStatus::NullPointer, "give both bounds or neither"),
        };
        match PolicySession::new(Arc::clone(&p.policy), space, ObservationScale { shift, scale }) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RbSession { inner }));
                RbStatus::Ok
            }
            Err(e) => fail(policy_status(&e), e.to_string()),
        }
    })
}

/// Proposes the next point, writing `dim` coordinates to `x` and its ticket
/// to `*ticket`.
///
/// # Safety
/// `session` must be live; `x` must hold `dim` doubles; `ticket` valid.
#[no_mangle]
pub unsafe extern "C" fn rb_session_ask(session: *mut RbSession, x: *mut f64, dim: usize, ticket: *mut u64) -> RbStatus {
    guard(|| {
        let Some(s) = session.as_mut() else { return fail(RbStatus::NullPointer, "null session") };
        if x.is_null() || ticket.is_null() {
            return fail(RbStatus::NullPointer, "null output pointer");
        }
        if dim != s.inner.space().dim() {
            return fail(RbStatus::InvalidArgument, format!("buffer holds {dim} values, session has {}", s.inner.space().dim()));
        }
        match s.inner.ask() {
            Ok(p) => {
                std::slice::from_raw_parts_mut(x, dim).copy_from_slice(&p.point);
                *ticket = p.ticket;
                RbStatus::Ok
            }
            Err(e) => fail(policy_status(&e), e.to_string()),
        }
    })
}

/// Reports the objective value for an earlier proposal.
///
/// # Safety
/// `session` must be live.
#[no_mangle]
pub unsafe extern "C" fn rb_session_tell(session: *mut RbSession, ticket: u64, y: f64) -> RbStatus {
    guard(|| {
        let Some(s) = session.as_mut() else { return fail(RbStatus::NullPointer, "null session") };
        match s.inner.tell(ticket, y) {
            Ok(()) => RbStatus::Ok,
            Err(e) => fail(policy_status(&e), e.to_string()),
        }
    })
}

/// Releases a session. NULL is ignored.
///
/// # Safety
/// `session` must be NULL or an unreleased handle from [`rb_session_new`].
#[no_mangle]
pub unsafe extern "C" fn rb_session_free(session: *mut RbSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Evaluates an unperturbed benchmark (`"branin"`, `"goldstein_price"`,
/// `"hartmann3"`, `"hartmann6"`) at a unit-cube point.
///
/// # Safety
/// `name` NUL-terminated; `x` holds `dim` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rb_benchmark_eval(name: *const c_char, x: *const f64, dim: usize, out: *mut f64) -> RbStatus {
    guard(|| {
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        if x.is_null() || out.is_null() {
            return fail(RbStatus::NullPointer, "null pointer");
        }
        let b: AnalyticBenchmark = match name.parse() {
            Ok(b) => b,
            Err(e) => return fail(RbStatus::InvalidArgument, e),
        };
        if dim != b.dim() {
            return fail(RbStatus::InvalidArgument, format!("{name} takes {} coordinates, got {dim}", b.dim()));
        }
        let u = std::slice::from_raw_parts(x, dim);
        if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return fail(RbStatus::InvalidArgument, "coordinates must lie in [0, 1]");
        }
        *out = PerturbedInstance::identity(b).eval(u);
        RbStatus::Ok
    })
}

/// Expected improvement below `best` of a Gaussian with the given mean and
/// variance. Returns NaN for non-finite input or negative variance.
#[no_mangle]
pub extern "C" fn rb_expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    if !(mean.is_finite() && best.is_finite() && variance.is_finite() && variance >= 0.0) {
        return f64::NAN;
    }
    expected_improvement_value(mean, variance, best)
}
