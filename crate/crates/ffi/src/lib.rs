//! C ABI over the `jqf-sim` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` functions
//! and released by the matching `*_free`. Every fallible call returns a
//! [`JqfStatus`]; on failure the message is kept per thread and can be copied
//! out with [`jqf_last_error`].
//!
//! Frequencies are angular (rad/s) and times are in seconds, as in the
//! library.

use jqf_sim::dde::{dde_decay, DdeCoefficients, DdeGrid};
use jqf_sim::model::{apply_overrides, dispersive_shift, PAPER_CONFIG_JSON};
use jqf_sim::optimize::{paper_shape, ControlProblem};
use jqf_sim::propagate::{decay_experiment, reflection_experiment, DecayOptions, InitialState, ReflectionOptions};
use jqf_sim::{Error, Model, SystemConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JqfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Domain = 4,
    Numeric = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Initial qubit state of a reflection run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JqfQubitState {
    Ground = 0,
    Excited = 1,
}

/// System configuration.
pub struct JqfConfig {
    value: serde_json::Value,
}

/// Diagonalized model built from a configuration.
pub struct JqfModel {
    model: Model,
}

/// Sampled curve: equal-length named columns.
pub struct JqfCurve {
    columns: Vec<Vec<f64>>,
}

/// π-pulse control problem at a fixed truncation and pulse shape.
pub struct JqfControl {
    problem: ControlProblem,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(JqfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => JqfStatus::Config,
            Error::Domain(_) => JqfStatus::Domain,
            Error::Numeric(_) | Error::NonFinite { .. } | Error::CheckpointDrift { .. } => JqfStatus::Numeric,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => JqfStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(JqfStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(JqfStatus::NullPointer, format!("{name} is null"))
}

/// Run `f`, record any failure and translate it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> JqfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            JqfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            JqfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<T>(p: *mut T, v: T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

impl JqfConfig {
    fn resolve(&self) -> Result<SystemConfig, Failure> {
        Ok(SystemConfig::from_json_value(self.value.clone())?)
    }
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn jqf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jqf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Bundled parameter set.
///
/// # Safety
/// `out_config` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_config_paper(out_config: *mut *mut JqfConfig) -> JqfStatus {
    guard(|| {
        let value = serde_json::from_str(PAPER_CONFIG_JSON).map_err(Error::from)?;
        out(out_config, boxed(JqfConfig { value }), "out_config")
    })
}

/// Parse and validate a configuration from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_config_from_json(json: *const c_char, out_config: *mut *mut JqfConfig) -> JqfStatus {
    guard(|| {
        let value: serde_json::Value = serde_json::from_str(str_arg(json, "json")?).map_err(Error::from)?;
        SystemConfig::from_json_value(value.clone())?;
        out(out_config, boxed(JqfConfig { value }), "out_config")
    })
}

/// Set one entry by dotted key, e.g. `subsystems.1.f_a_Hz`. The value is
/// parsed as JSON. The configuration is left unchanged if the result is invalid.
///
/// # Safety
/// `config` must come from this library; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn jqf_config_set(config: *mut JqfConfig, key: *const c_char, value: *const c_char) -> JqfStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let pair = (str_arg(key, "key")?.to_string(), str_arg(value, "value")?.to_string());
        let mut v = c.value.clone();
        apply_overrides(&mut v, &[pair])?;
        SystemConfig::from_json_value(v.clone())?;
        c.value = v;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jqf_config_free(config: *mut JqfConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Diagonalize every subsystem of `config`.
///
/// # Safety
/// `config` must come from this library; `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_model_new(config: *const JqfConfig, out_model: *mut *mut JqfModel) -> JqfStatus {
    guard(|| {
        let model = Model::new(deref(config, "config")?.resolve()?)?;
        out(out_model, boxed(JqfModel { model }), "out_model")
    })
}

/// Total Hilbert-space dimension.
///
/// # Safety
/// `model` must come from this library; `out_dim` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_model_dim(model: *const JqfModel, out_dim: *mut usize) -> JqfStatus {
    guard(|| out(out_dim, deref(model, "model")?.model.dim, "out_dim"))
}

/// Number of subsystems in the chain.
///
/// # Safety
/// `model` must come from this library; `out_n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_model_subsystems(model: *const JqfModel, out_n: *mut usize) -> JqfStatus {
    guard(|| out(out_n, deref(model, "model")?.model.n_subsystems(), "out_n"))
}

/// Transition frequency `ω_{m,j'j}` between eigenstates `j` and `j'` of subsystem `m`.
///
/// # Safety
/// `model` must come from this library; `out_omega` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_model_transition(
    model: *const JqfModel,
    m: usize,
    j: usize,
    jp: usize,
    out_omega: *mut f64,
) -> JqfStatus {
    guard(|| {
        let model = &deref(model, "model")?.model;
        let b = model.bases.get(m).ok_or_else(|| invalid(format!("subsystem {m} out of range")))?;
        if j >= b.dim || jp >= b.dim {
            return Err(invalid(format!("level out of range for subsystem {m} (dimension {})", b.dim)));
        }
        out(out_omega, b.transition(j, jp), "out_omega")
    })
}

/// # Safety
/// `model` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jqf_model_free(model: *mut JqfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dispersive shift `χ` of a transmon coupled to a resonator.
///
/// # Safety
/// `out_chi` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_dispersive_shift(
    g: f64,
    omega_r: f64,
    omega_a: f64,
    alpha: f64,
    out_chi: *mut f64,
) -> JqfStatus {
    guard(|| out(out_chi, dispersive_shift(g, omega_r, omega_a, alpha)?, "out_chi"))
}

/// Free decay of the qubit. Columns: `t_s, F, F_tilde, n_res, n_jqf`.
/// `t_final <= 0` and `n_steps == 0` select the defaults.
///
/// # Safety
/// `config` must come from this library; `out_curve` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_decay(
    config: *const JqfConfig,
    t_final: f64,
    n_steps: usize,
    samples: usize,
    out_curve: *mut *mut JqfCurve,
) -> JqfStatus {
    guard(|| {
        let cfg = deref(config, "config")?.resolve()?;
        let opts = DecayOptions {
            t_final: (t_final > 0.0).then_some(t_final),
            n_steps: (n_steps > 0).then_some(n_steps),
            samples: samples.max(1),
            ..Default::default()
        };
        let run = decay_experiment(&cfg, &opts)?;
        let r = &run.records;
        let columns = vec![
            r.iter().map(|x| x.time).collect(),
            r.iter().map(|x| x.fidelity).collect(),
            r.iter().map(|x| x.fidelity_strict).collect(),
            r.iter().map(|x| x.n_res).collect(),
            r.iter().map(|x| x.n_jqf).collect(),
        ];
        out(out_curve, boxed(JqfCurve { columns }), "out_curve")
    })
}

/// Delay-differential decay. Columns: `t_s, F, norm`.
///
/// # Safety
/// `config` must come from this library; `out_curve` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_dde_decay(
    config: *const JqfConfig,
    t_final: f64,
    n_steps: u64,
    samples: usize,
    out_curve: *mut *mut JqfCurve,
) -> JqfStatus {
    guard(|| {
        let cfg = deref(config, "config")?.resolve()?;
        let coeffs = DdeCoefficients::new(&cfg)?;
        let grid = DdeGrid::aligned(t_final, n_steps, coeffs.tau)?;
        let run = dde_decay(&coeffs, grid, samples.max(1));
        let columns = vec![run.times, run.fidelity, run.norm];
        out(out_curve, boxed(JqfCurve { columns }), "out_curve")
    })
}

/// Reflection coefficient at each of `n` drive frequencies, written to
/// `out_re` and `out_im`. `t_final <= 0` and `n_steps == 0` select the defaults.
///
/// # Safety
/// `omega_d`, `out_re`, `out_im` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn jqf_reflection(
    config: *const JqfConfig,
    omega_d: *const f64,
    n: usize,
    omega_1: f64,
    state: JqfQubitState,
    t_final: f64,
    n_steps: usize,
    out_re: *mut f64,
    out_im: *mut f64,
) -> JqfStatus {
    guard(|| {
        let cfg = deref(config, "config")?.resolve()?;
        let omegas = slice_arg(omega_d, n, "omega_d")?;
        if n > 0 && (out_re.is_null() || out_im.is_null()) {
            return Err(null("output buffer"));
        }
        let initial = match state {
            JqfQubitState::Ground => InitialState::Ground,
            JqfQubitState::Excited => InitialState::Excited,
        };
        let opts = ReflectionOptions {
            t_final: (t_final > 0.0).then_some(t_final),
            n_steps: (n_steps > 0).then_some(n_steps),
            ..Default::default()
        };
        let points = reflection_experiment(&cfg, omegas, omega_1, initial, &opts)?;
        for (i, p) in points.iter().enumerate() {
            *out_re.add(i) = p.r.re;
            *out_im.add(i) = p.r.im;
        }
        Ok(())
    })
}

/// # Safety
/// `curve` must come from this library; `out_rows` and `out_columns` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn jqf_curve_shape(
    curve: *const JqfCurve,
    out_rows: *mut usize,
    out_columns: *mut usize,
) -> JqfStatus {
    guard(|| {
        let c = deref(curve, "curve")?;
        out(out_rows, c.columns.first().map_or(0, Vec::len), "out_rows")?;
        out(out_columns, c.columns.len(), "out_columns")
    })
}

/// Copy column `column` into `buf`, which must hold at least the row count.
///
/// # Safety
/// `curve` must come from this library; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn jqf_curve_column(curve: *const JqfCurve, column: usize, buf: *mut f64, len: usize) -> JqfStatus {
    guard(|| {
        let c = deref(curve, "curve")?;
        let col = c.columns.get(column).ok_or_else(|| invalid(format!("column {column} out of range")))?;
        if len < col.len() {
            return Err(Failure(JqfStatus::BufferTooSmall, format!("need {} values, got {len}", col.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(col.as_ptr(), buf, col.len());
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jqf_curve_free(curve: *mut JqfCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// π-pulse problem on `config` as truncated, with `n_coeffs` basis functions,
/// duration `t_final`, `n_steps` RK4 steps and peak amplitude `omega_max`.
///
/// # Safety
/// `config` must come from this library; `out_control` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_control_new(
    config: *const JqfConfig,
    n_coeffs: usize,
    t_final: f64,
    n_steps: usize,
    omega_max: f64,
    out_control: *mut *mut JqfControl,
) -> JqfStatus {
    guard(|| {
        let cfg = deref(config, "config")?.resolve()?;
        let mut shape = paper_shape(&cfg, n_coeffs, t_final, n_steps);
        shape.omega_max = omega_max;
        let problem = ControlProblem::new(&cfg, shape)?;
        out(out_control, boxed(JqfControl { problem }), "out_control")
    })
}

/// Fidelity `F̃` reached by the pulse with coefficients `a`, `b` (`n_coeffs` each).
///
/// # Safety
/// `a` and `b` must hold `n_coeffs` doubles; `out_fidelity` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_control_fidelity(
    control: *const JqfControl,
    a: *const f64,
    b: *const f64,
    out_fidelity: *mut f64,
) -> JqfStatus {
    guard(|| {
        let p = &deref(control, "control")?.problem;
        let n = p.shape.n_coeffs;
        let f = p.fidelity(slice_arg(a, n, "a")?, slice_arg(b, n, "b")?)?;
        out(out_fidelity, f, "out_fidelity")
    })
}

/// `F̃` and its gradient with respect to `a` and `b`.
///
/// # Safety
/// `a`, `b`, `grad_a`, `grad_b` must hold `n_coeffs` doubles; `out_fidelity` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn jqf_control_gradient(
    control: *const JqfControl,
    a: *const f64,
    b: *const f64,
    out_fidelity: *mut f64,
    grad_a: *mut f64,
    grad_b: *mut f64,
) -> JqfStatus {
    guard(|| {
        let p = &deref(control, "control")?.problem;
        let n = p.shape.n_coeffs;
        if grad_a.is_null() || grad_b.is_null() {
            return Err(null("gradient buffer"));
        }
        let e = p.gradient(slice_arg(a, n, "a")?, slice_arg(b, n, "b")?)?;
        ptr::copy_nonoverlapping(e.grad_a.as_ptr(), grad_a, n);
        ptr::copy_nonoverlapping(e.grad_b.as_ptr(), grad_b, n);
        out(out_fidelity, e.fidelity, "out_fidelity")
    })
}

/// # Safety
/// `control` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn jqf_control_free(control: *mut JqfControl) {
    if !control.is_null() {
        drop(Box::from_raw(control));
    }
}
