//! C ABI for the spouse's pension valuation engine.
//!
//! The interface follows the usual opaque-handle pattern: create a
//! `PeEngine` from a TOML scenario (the same schema the CLI reads), call
//! query functions that return a `PeStatus`, and fetch the message for the
//! latest failure with `pe_last_error_message`. Handles are not thread-safe;
//! use one per thread or synchronize externally.
//!
//! The generated header lands in `include/pension_engine.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use pension_engine::config::ScenarioConfig;
use pension_engine::error::EngineError;
use pension_engine::grid::GridSpec;
use pension_engine::intensity::IntensitySet;
use pension_engine::marital::{solve_marital, MaritalSolution, SolverOptions};
use pension_engine::payments::PolicySpec;
use pension_engine::simulator::Simulator;
use pension_engine::valuation::{cashflow, liability, CashflowCurve, ShortRate};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario failed to parse or validate.
    Config = 3,
    /// An evaluation point was outside the model's domain.
    Domain = 4,
    /// A numerical failure (e.g. the layer series did not converge).
    Numeric = 5,
    /// The requested quantity is undefined (e.g. conditional density where
    /// the marriage probability vanishes).
    Undefined = 6,
    /// The scenario has no policy, but a policy-dependent quantity was asked
    /// for.
    NoPolicy = 7,
    /// An internal invariant failed.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &EngineError) -> PeStatus {
    match err {
        EngineError::Config(_) | EngineError::Validation(_) | EngineError::Io(_) => {
            PeStatus::Config
        }
        EngineError::Domain(_) | EngineError::InvalidArgument(_) => PeStatus::Domain,
        EngineError::Truncation { .. } | EngineError::GridMismatch(_) => PeStatus::Numeric,
        EngineError::UndefinedConditional { .. } | EngineError::UnsupportedPolicy(_) => {
            PeStatus::Undefined
        }
    }
}

fn fail(err: EngineError) -> PeStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Opaque engine handle: a parsed scenario plus lazily computed results.
pub struct PeEngine {
    config: ScenarioConfig,
    grid: GridSpec,
    set: IntensitySet,
    opts: SolverOptions,
    rate: ShortRate,
    policy: Option<PolicySpec>,
    solution: Option<MaritalSolution>,
    valuation: Option<(CashflowCurve, f64)>,
}

impl PeEngine {
    fn from_config(config: ScenarioConfig) -> Result<Self, EngineError> {
        let grid = config.build_grid()?;
        let set = config.build_intensities()?;
        let opts = config.build_solver_options();
        let rate = config.build_short_rate()?;
        let policy = config.build_policy()?;
        Ok(Self {
            config,
            grid,
            set,
            opts,
            rate,
            policy,
            solution: None,
            valuation: None,
        })
    }

    fn solution(&mut self) -> Result<&MaritalSolution, EngineError> {
        if self.solution.is_none() {
            self.solution = Some(solve_marital(&self.set, &self.grid, &self.opts)?);
        }
        Ok(self.solution.as_ref().unwrap())
    }

    fn valuation(&mut self) -> Result<&(CashflowCurve, f64), EngineError> {
        if self.valuation.is_none() {
            let policy = self
                .policy
                .clone()
                .ok_or_else(|| EngineError::Config("scenario has no [policy]".into()))?;
            self.solution()?;
            let solution = self.solution.as_ref().unwrap();
            let cf = cashflow(solution, &policy, &self.set.death, &self.grid)?;
            let l = liability(&cf, &self.rate)?;
            self.valuation = Some((cf, l));
        }
        Ok(self.valuation.as_ref().unwrap())
    }
}

fn guarded(f: impl FnOnce() -> PeStatus) -> PeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            PeStatus::Internal
        }
    }
}

unsafe fn engine_mut<'a>(handle: *mut PeEngine) -> Result<&'a mut PeEngine, PeStatus> {
    if handle.is_null() {
        set_error("engine handle is null".into());
        return Err(PeStatus::NullArgument);
    }
    Ok(unsafe { &mut *handle })
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, PeStatus> {
    if ptr.is_null() {
        set_error("string argument is null".into());
        return Err(PeStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        PeStatus::InvalidUtf8
    })
}

macro_rules! out_param {
    ($ptr:expr, $name:literal) => {
        if $ptr.is_null() {
            set_error(concat!($name, " output pointer is null").into());
            return PeStatus::NullArgument;
        }
    };
}

/// Message for the most recent failure on this thread, or null when the last
/// call succeeded. Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pe_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pe_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates an engine from a TOML scenario document.
///
/// On success writes the handle to `out` and returns `Ok`; the handle must be
/// released with `pe_engine_free`.
///
/// # Safety
/// `toml` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_new_from_str(
    toml: *const c_char,
    out: *mut *mut PeEngine,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "engine");
        let text = match unsafe { c_str(toml) } {
            Ok(t) => t,
            Err(status) => return status,
        };
        match ScenarioConfig::from_toml(text).and_then(PeEngine::from_config) {
            Ok(engine) => {
                unsafe { *out = Box::into_raw(Box::new(engine)) };
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Creates an engine from a TOML scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_new_from_file(
    path: *const c_char,
    out: *mut *mut PeEngine,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "engine");
        let path = match unsafe { c_str(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        match ScenarioConfig::from_file(Path::new(path)).and_then(PeEngine::from_config) {
            Ok(engine) => {
                unsafe { *out = Box::into_raw(Box::new(engine)) };
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases an engine handle. Passing null is a no-op.
///
/// # Safety
/// `handle` must have come from a `pe_engine_new_*` call and not have been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_free(handle: *mut PeEngine) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Runs the marital solver now (queries otherwise trigger it lazily).
///
/// # Safety
/// `handle` must be a live engine handle.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_solve(handle: *mut PeEngine) -> PeStatus {
    guarded(|| {
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        match engine.solution() {
            Ok(_) => PeStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Marriage probability `g(t)`.
///
/// # Safety
/// `handle` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_marriage_probability(
    handle: *mut PeEngine,
    t: f64,
    out: *mut f64,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "probability");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        match engine.solution().and_then(|s| s.marriage_probability(t)) {
            Ok(g) => {
                unsafe { *out = g };
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Conditional spouse-age density `f(y|t)`.
///
/// # Safety
/// `handle` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_spouse_age_density(
    handle: *mut PeEngine,
    t: f64,
    y: f64,
    out: *mut f64,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "density");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        match engine.solution().and_then(|s| s.spouse_age_density(t, y)) {
            Ok(f) => {
                unsafe { *out = f };
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Liability of the scenario's policy under its short rate.
///
/// # Safety
/// `handle` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_liability(handle: *mut PeEngine, out: *mut f64) -> PeStatus {
    guarded(|| {
        out_param!(out, "liability");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        if engine.policy.is_none() {
            set_error("scenario has no [policy]".into());
            return PeStatus::NoPolicy;
        }
        match engine.valuation() {
            Ok((_, l)) => {
                unsafe { *out = *l };
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of time nodes in the cashflow curve.
///
/// # Safety
/// `handle` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_cashflow_len(
    handle: *mut PeEngine,
    out: *mut usize,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "length");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        unsafe { *out = engine.grid.n_t() };
        PeStatus::Ok
    })
}

/// Copies the cashflow curve into caller-provided arrays of length `len`
/// (`pe_engine_cashflow_len`). Any of the destination pointers may be null to
/// skip that column.
///
/// # Safety
/// `handle` must be a live engine handle; non-null destinations must point to
/// at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_cashflow_copy(
    handle: *mut PeEngine,
    times: *mut f64,
    rates: *mut f64,
    cumulative: *mut f64,
    len: usize,
) -> PeStatus {
    guarded(|| {
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        if engine.policy.is_none() {
            set_error("scenario has no [policy]".into());
            return PeStatus::NoPolicy;
        }
        if len != engine.grid.n_t() {
            set_error(format!(
                "destination length {len} does not match the grid ({} nodes)",
                engine.grid.n_t()
            ));
            return PeStatus::Domain;
        }
        let grid = engine.grid;
        match engine.valuation() {
            Ok((cf, _)) => {
                for i in 0..len {
                    unsafe {
                        if !times.is_null() {
                            *times.add(i) = grid.t(i);
                        }
                        if !rates.is_null() {
                            *rates.add(i) = cf.rates()[i];
                        }
                        if !cumulative.is_null() {
                            *cumulative.add(i) = cf.cumulative()[i];
                        }
                    }
                }
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Monte Carlo estimate of the policy value: mean discounted payments over
/// `n_paths` simulated paths with the given seed.
///
/// # Safety
/// `handle` must be a live engine handle; `out_value` and `out_std_error`
/// must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_estimate_policy_value(
    handle: *mut PeEngine,
    n_paths: u64,
    seed: u64,
    out_value: *mut f64,
    out_std_error: *mut f64,
) -> PeStatus {
    guarded(|| {
        out_param!(out_value, "value");
        out_param!(out_std_error, "std error");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        let Some(policy) = engine.policy.clone() else {
            set_error("scenario has no [policy]".into());
            return PeStatus::NoPolicy;
        };
        let result = Simulator::new(&engine.set, &engine.grid)
            .and_then(|sim| sim.estimate_policy_value(&policy, &engine.rate, n_paths, seed));
        match result {
            Ok(est) => {
                unsafe {
                    *out_value = est.value;
                    *out_std_error = est.std_error;
                }
                PeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Echoes the effective scenario as TOML into a newly allocated string; free
/// it with `pe_string_free`.
///
/// # Safety
/// `handle` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pe_engine_config_echo(
    handle: *mut PeEngine,
    out: *mut *mut c_char,
) -> PeStatus {
    guarded(|| {
        out_param!(out, "echo");
        let engine = match unsafe { engine_mut(handle) } {
            Ok(e) => e,
            Err(status) => return status,
        };
        match engine.config.to_toml() {
            Ok(text) => match CString::new(text) {
                Ok(c) => {
                    unsafe { *out = c.into_raw() };
                    PeStatus::Ok
                }
                Err(_) => {
                    set_error("config echo contains an interior NUL".into());
                    PeStatus::Internal
                }
            },
            Err(e) => fail(e),
        }
    })
}

/// Frees a string returned by this library. Passing null is a no-op.
///
/// # Safety
/// `ptr` must have come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn pe_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(unsafe { CString::from_raw(ptr) });
    }
}
