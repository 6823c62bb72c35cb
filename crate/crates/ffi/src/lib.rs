//! C ABI over `ising-cavity`.
//!
//! Models and populations are opaque handles owned by the caller and
//! released with their `_free` function. Every fallible call returns an
//! `IcStatus`; on failure `ic_last_error_message` describes the error for
//! the calling thread. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use ising_cavity::cavity::{self, CavityPopulation, IsingParams, SolverConfig};
use ising_cavity::criticality::critical_beta;
use ising_cavity::degree_models::{forward, make_model, ForwardModel, ModelSpec, Moment};
use ising_cavity::observables;
use ising_cavity::rng::SeedStream;
use ising_cavity::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidModel = 3,
    InvalidParameter = 4,
    DivergentMoment = 5,
    NonConvergence = 6,
    NotSubcritical = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

/// Degree law with its forward (size-biased minus one) law.
pub struct IcModel {
    forward: Arc<ForwardModel>,
}

/// Converged cavity-field population.
pub struct IcPopulation {
    pop: CavityPopulation,
}

/// Moments of a model. Divergent moments are reported as +infinity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct IcMoments {
    pub mean_degree: f64,
    pub nu: f64,
    pub nu2: f64,
    pub nu3: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IcStatus {
    match e {
        Error::InvalidModel(_) | Error::Parse(_) => IcStatus::InvalidModel,
        Error::InvalidParameter(_) => IcStatus::InvalidParameter,
        Error::DivergentMoment(_) => IcStatus::DivergentMoment,
        Error::NonConvergence(_) | Error::NonUniqueness { .. } | Error::Unconverged => IcStatus::NonConvergence,
        Error::NotSubcritical(_) => IcStatus::NotSubcritical,
        _ => IcStatus::Other,
    }
}

struct Fail(IcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IcStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IcStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            IcStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const IcModel) -> Result<&'a IcModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

fn moment(m: Moment) -> f64 {
    m.finite().unwrap_or(f64::INFINITY)
}

/// Message for the last failed call on this thread, or NULL after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ic_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from JSON such as `{"kind": "poisson", "lambda": 3}`.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ic_model_from_json(json: *const c_char, out: *mut *mut IcModel) -> IcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(IcStatus::InvalidUtf8, e.to_string()))?;
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Fail(IcStatus::InvalidModel, e.to_string()))?;
        let fm = forward(&make_model(&spec)?)?;
        *out = Box::into_raw(Box::new(IcModel {
            forward: Arc::new(fm),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `ic_model_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ic_model_free(model: *mut IcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ic_model_moments(model: *const IcModel, out: *mut IcMoments) -> IcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let fm = &m.forward;
        *out = IcMoments {
            mean_degree: fm.parent().mean(),
            nu: moment(fm.nu()),
            nu2: moment(fm.nu2()),
            nu3: moment(fm.nu3()),
        };
        Ok(())
    })
}

/// atanh(1/ν): 0 when ν diverges, +infinity when ν ≤ 1.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ic_critical_beta(model: *const IcModel, out: *mut f64) -> IcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = critical_beta(&m.forward);
        Ok(())
    })
}

/// ξ(h) = atanh(tanh β · tanh h). `h` may be +infinity.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ic_xi(beta: f64, h: f64, out: *mut f64) -> IcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if h.is_nan() {
            return Err(Fail(IcStatus::InvalidParameter, "h is NaN".into()));
        }
        *out = cavity::xi(&IsingParams::new(beta, 0.0)?, h);
        Ok(())
    })
}

/// χ(β, 0+) for tanh β · ν < 1.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ic_susceptibility_subcritical(model: *const IcModel, beta: f64, out: *mut f64) -> IcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = observables::susceptibility_subcritical(&m.forward, &IsingParams::new(beta, 0.0)?)?;
        Ok(())
    })
}

/// Solves the cavity fixed point at (β, B > 0) from the plus start with
/// default solver settings and `population_size` samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ic_fixed_point(
    model: *const IcModel,
    beta: f64,
    field: f64,
    population_size: usize,
    seed: u64,
    out: *mut *mut IcPopulation,
) -> IcStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SolverConfig {
            population_size,
            ..SolverConfig::default()
        };
        let pop = cavity::fixed_point(&m.forward, IsingParams::new(beta, field)?, &cfg, SeedStream::new(seed))?;
        *out = Box::into_raw(Box::new(IcPopulation { pop }));
        Ok(())
    })
}

/// # Safety
/// `pop` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn ic_population_len(pop: *const IcPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.pop.len())
}

/// Copies the cavity fields into `buf`. Fails with `BUFFER_TOO_SMALL`
/// when `len` is below the population size.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ic_population_samples(pop: *const IcPopulation, buf: *mut f64, len: usize) -> IcStatus {
    guard(|| {
        let p = pop.as_ref().ok_or_else(|| null("population"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let s = p.pop.samples();
        if len < s.len() {
            return Err(Fail(
                IcStatus::BufferTooSmall,
                format!("buffer holds {len}, population has {}", s.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, s.len()).copy_from_slice(s);
        Ok(())
    })
}

/// M(β, B) from `n` Monte Carlo draws over the root degree.
///
/// # Safety
/// Pointers must be valid; `stderr_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ic_magnetization(
    model: *const IcModel,
    pop: *const IcPopulation,
    n: usize,
    seed: u64,
    value_out: *mut f64,
    stderr_out: *mut f64,
) -> IcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = pop.as_ref().ok_or_else(|| null("population"))?;
        let value_out = value_out.as_mut().ok_or_else(|| null("value_out"))?;
        let r = observables::magnetization(m.forward.parent(), &p.pop, n, SeedStream::new(seed))?;
        *value_out = r.value;
        if let Some(s) = stderr_out.as_mut() {
            *s = r.stderr;
        }
        Ok(())
    })
}

/// # Safety
/// `pop` must come from `ic_fixed_point` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ic_population_free(pop: *mut IcPopulation) {
    if !pop.is_null() {
        drop(Box::from_raw(pop));
    }
}
