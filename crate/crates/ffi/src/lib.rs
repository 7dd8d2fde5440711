//! C ABI over `lowrank-grad`.
//!
//! Every fallible function returns an [`LrgStatus`]; on failure a message is
//! available from [`lrg_last_error`] on the same thread. Objects are handed out
//! as opaque pointers and must be released with the matching `*_free`.
//! Matrices cross the boundary as row-major `double` buffers.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use libc::{c_char, size_t};
use lowrank_grad::harness::{run_experiment, write_results_csv, ExperimentConfig, RunResult};
use lowrank_grad::memory::{self, LayerDims, MemoryOptions, MemoryReport};
use lowrank_grad::{
    AdamBiasMode, Error, LowRankOptimizer, Matrix, OptimizerKind, OptimizerSpec, ProjectionMethod,
    Rng,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    SvdNotConverged = 5,
    Diverged = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrgOptimizerKind {
    Gd = 0,
    Momentum = 1,
    Adam = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrgProjection {
    None = 0,
    Random = 1,
    Svd = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrgAdamBiasMode {
    Standard = 0,
    Paper = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrgOptimizerSpec {
    pub kind: LrgOptimizerKind,
    pub learning_rate: f64,
    pub momentum_coeff: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub adam_bias_mode: LrgAdamBiasMode,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrgExperimentConfig {
    pub dim: size_t,
    pub rank: size_t,
    pub steps: size_t,
    pub optimizer: LrgOptimizerSpec,
    pub projection: LrgProjection,
    pub seed: u64,
    pub report_every: size_t,
    pub reset_factor_state_each_step: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LrgTrainRecord {
    pub step: size_t,
    pub loss: f64,
    pub predicted_delta: f64,
    pub cumulative_wall_time: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrgLayer {
    pub rows: size_t,
    pub cols: size_t,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LrgMemoryReport {
    pub weight_slots: size_t,
    pub optimizer_state_slots: size_t,
    pub factor_slots: size_t,
    pub factor_state_slots: size_t,
    pub transient_gradient_slots: size_t,
    pub total_slots: size_t,
    pub total_bytes: size_t,
}

/// Low-rank optimizer for one weight matrix plus its random stream.
pub struct LrgLowRank {
    inner: LowRankOptimizer,
    rng: Rng,
    rows: usize,
    cols: usize,
}

/// Result of a toy training run.
pub struct LrgRunResult {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> LrgStatus {
    match err {
        Error::DimensionMismatch { .. } => LrgStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::Config { .. } => LrgStatus::InvalidArgument,
        Error::NonFinite(_) => LrgStatus::NonFinite,
        Error::SvdNotConverged { .. } => LrgStatus::SvdNotConverged,
        Error::Diverged { .. } => LrgStatus::Diverged,
        Error::Io { .. } | Error::Csv { .. } => LrgStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), LrgStatusError>) -> LrgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LrgStatus::Ok,
        Ok(Err(LrgStatusError(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside lowrank-grad".to_string());
            LrgStatus::Panic
        }
    }
}

struct LrgStatusError(LrgStatus, String);

impl From<Error> for LrgStatusError {
    fn from(e: Error) -> Self {
        Self(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> LrgStatusError {
    LrgStatusError(LrgStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> LrgStatusError {
    LrgStatusError(LrgStatus::InvalidArgument, msg.into())
}

impl From<LrgOptimizerKind> for OptimizerKind {
    fn from(k: LrgOptimizerKind) -> Self {
        match k {
            LrgOptimizerKind::Gd => OptimizerKind::GradientDescent,
            LrgOptimizerKind::Momentum => OptimizerKind::Momentum,
            LrgOptimizerKind::Adam => OptimizerKind::Adam,
        }
    }
}

impl From<OptimizerKind> for LrgOptimizerKind {
    fn from(k: OptimizerKind) -> Self {
        match k {
            OptimizerKind::GradientDescent => LrgOptimizerKind::Gd,
            OptimizerKind::Momentum => LrgOptimizerKind::Momentum,
            OptimizerKind::Adam => LrgOptimizerKind::Adam,
        }
    }
}

impl From<LrgProjection> for ProjectionMethod {
    fn from(p: LrgProjection) -> Self {
        match p {
            LrgProjection::None => ProjectionMethod::None,
            LrgProjection::Random => ProjectionMethod::Random,
            LrgProjection::Svd => ProjectionMethod::Svd,
        }
    }
}

impl From<LrgOptimizerSpec> for OptimizerSpec {
    fn from(s: LrgOptimizerSpec) -> Self {
        OptimizerSpec {
            kind: s.kind.into(),
            learning_rate: s.learning_rate,
            momentum_coeff: s.momentum_coeff,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
            adam_bias_mode: match s.adam_bias_mode {
                LrgAdamBiasMode::Standard => AdamBiasMode::Standard,
                LrgAdamBiasMode::Paper => AdamBiasMode::PaperLiteral,
            },
        }
    }
}

impl From<OptimizerSpec> for LrgOptimizerSpec {
    fn from(s: OptimizerSpec) -> Self {
        LrgOptimizerSpec {
            kind: s.kind.into(),
            learning_rate: s.learning_rate,
            momentum_coeff: s.momentum_coeff,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
            adam_bias_mode: match s.adam_bias_mode {
                AdamBiasMode::Standard => LrgAdamBiasMode::Standard,
                AdamBiasMode::PaperLiteral => LrgAdamBiasMode::Paper,
            },
        }
    }
}

impl From<MemoryReport> for LrgMemoryReport {
    fn from(r: MemoryReport) -> Self {
        LrgMemoryReport {
            weight_slots: r.weight_slots,
            optimizer_state_slots: r.optimizer_state_slots,
            factor_slots: r.factor_slots,
            factor_state_slots: r.factor_state_slots,
            transient_gradient_slots: r.transient_gradient_slots,
            total_slots: r.total_slots,
            total_bytes: r.total_bytes,
        }
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lrg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Optimizer spec of `kind` with default coefficients.
#[no_mangle]
pub extern "C" fn lrg_optimizer_spec_default(
    kind: LrgOptimizerKind,
    learning_rate: f64,
) -> LrgOptimizerSpec {
    OptimizerSpec::new(kind.into(), learning_rate).into()
}

/// Creates a low-rank optimizer for a `rows×cols` weight matrix.
///
/// # Safety
/// `spec` must point to a valid spec and `out` to writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn lrg_lowrank_new(
    spec: *const LrgOptimizerSpec,
    projection: LrgProjection,
    rows: size_t,
    cols: size_t,
    rank: size_t,
    seed: u64,
    reset_factor_state_each_step: bool,
    out: *mut *mut LrgLowRank,
) -> LrgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if rows == 0 || cols == 0 {
            return Err(invalid("rows and cols must be positive"));
        }
        let inner = LowRankOptimizer::new(
            (*spec).into(),
            projection.into(),
            rows,
            cols,
            rank,
            reset_factor_state_each_step,
        )?;
        *out = Box::into_raw(Box::new(LrgLowRank {
            inner,
            rng: Rng::new(seed),
            rows,
            cols,
        }));
        Ok(())
    })
}

/// Applies one low-rank update to `weights` in place given `gradient`.
/// Both buffers hold `rows·cols` doubles, row-major. `predicted_delta` may be
/// NULL; otherwise it receives the first-order loss-change prediction.
///
/// # Safety
/// `handle` must come from [`lrg_lowrank_new`]; the buffers must hold `len`
/// doubles and must not alias.
#[no_mangle]
pub unsafe extern "C" fn lrg_lowrank_step(
    handle: *mut LrgLowRank,
    weights: *mut f64,
    gradient: *const f64,
    len: size_t,
    predicted_delta: *mut f64,
) -> LrgStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        if weights.is_null() {
            return Err(null("weights"));
        }
        if gradient.is_null() {
            return Err(null("gradient"));
        }
        if len != h.rows * h.cols {
            return Err(invalid(format!(
                "expected {} entries, got {len}",
                h.rows * h.cols
            )));
        }
        let w_buf = slice::from_raw_parts_mut(weights, len);
        let g = Matrix::from_vec(
            h.rows,
            h.cols,
            slice::from_raw_parts(gradient, len).to_vec(),
        )?;
        let mut w = Matrix::from_vec(h.rows, h.cols, w_buf.to_vec())?;
        let report = h.inner.step(&mut w, &g, &mut h.rng)?;
        w_buf.copy_from_slice(w.as_slice());
        if let Some(p) = predicted_delta.as_mut() {
            *p = report.predicted_loss_delta;
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be NULL or come from [`lrg_lowrank_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrg_lowrank_free(handle: *mut LrgLowRank) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

fn experiment_config(c: &LrgExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        dim: c.dim,
        rank: c.rank,
        steps: c.steps,
        optimizer: c.optimizer.into(),
        projection: c.projection.into(),
        seed: c.seed,
        report_every: c.report_every,
        reset_factor_state_each_step: c.reset_factor_state_each_step,
    }
}

/// Trains the toy objective with `config`.
///
/// # Safety
/// `config` must point to a valid config and `out` to writable storage for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn lrg_run_experiment(
    config: *const LrgExperimentConfig,
    out: *mut *mut LrgRunResult,
) -> LrgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let inner = run_experiment(&experiment_config(config))?;
        *out = Box::into_raw(Box::new(LrgRunResult { inner }));
        Ok(())
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `result` must be NULL or come from [`lrg_run_experiment`].
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_record_count(result: *const LrgRunResult) -> size_t {
    result.as_ref().map_or(0, |r| r.inner.records.len())
}

/// # Safety
/// `result` must come from [`lrg_run_experiment`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_record(
    result: *const LrgRunResult,
    index: size_t,
    out: *mut LrgTrainRecord,
) -> LrgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rec = r.inner.records.get(index).ok_or_else(|| {
            invalid(format!(
                "record {index} out of range ({} records)",
                r.inner.records.len()
            ))
        })?;
        *out = LrgTrainRecord {
            step: rec.step,
            loss: rec.loss,
            predicted_delta: rec.predicted_delta,
            cumulative_wall_time: rec.cumulative_wall_time,
        };
        Ok(())
    })
}

/// Final loss, or NaN for NULL.
///
/// # Safety
/// `result` must be NULL or come from [`lrg_run_experiment`].
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_final_loss(result: *const LrgRunResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.final_loss)
}

/// Loss before the first step, or NaN for NULL.
///
/// # Safety
/// `result` must be NULL or come from [`lrg_run_experiment`].
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_initial_loss(result: *const LrgRunResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.initial_loss)
}

/// Seconds spent in update computation, or NaN for NULL.
///
/// # Safety
/// `result` must be NULL or come from [`lrg_run_experiment`].
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_wall_time(result: *const LrgRunResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.inner.total_wall_time)
}

/// Writes the run as CSV to the UTF-8 path `path`.
///
/// # Safety
/// `result` must come from [`lrg_run_experiment`]; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_write_csv(
    result: *const LrgRunResult,
    path: *const c_char,
) -> LrgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| invalid(format!("path: {e}")))?;
        write_results_csv(std::slice::from_ref(&r.inner), Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `result` must be NULL or come from [`lrg_run_experiment`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrg_run_result_free(result: *mut LrgRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

unsafe fn layer_dims(layers: *const LrgLayer, count: size_t) -> Result<LayerDims, LrgStatusError> {
    if layers.is_null() {
        return Err(null("layers"));
    }
    let shapes = slice::from_raw_parts(layers, count)
        .iter()
        .map(|l| (l.rows, l.cols))
        .collect();
    Ok(LayerDims::new(shapes)?)
}

fn memory_options(
    include_gradient: bool,
    bytes_per_slot: size_t,
) -> Result<MemoryOptions, LrgStatusError> {
    if bytes_per_slot != 4 && bytes_per_slot != 8 {
        return Err(invalid(format!(
            "bytes_per_slot must be 4 or 8, got {bytes_per_slot}"
        )));
    }
    Ok(MemoryOptions {
        include_gradient,
        bytes_per_slot,
    })
}

/// Memory of full-rank training.
///
/// # Safety
/// `layers` must point to `count` layers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrg_full_rank_memory(
    layers: *const LrgLayer,
    count: size_t,
    kind: LrgOptimizerKind,
    include_gradient: bool,
    bytes_per_slot: size_t,
    out: *mut LrgMemoryReport,
) -> LrgStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let dims = layer_dims(layers, count)?;
        let opts = memory_options(include_gradient, bytes_per_slot)?;
        *out = memory::full_rank_memory_with(&dims, kind.into(), opts).into();
        Ok(())
    })
}

/// Memory of low-rank training at `rank`.
///
/// # Safety
/// `layers` must point to `count` layers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrg_low_rank_memory(
    layers: *const LrgLayer,
    count: size_t,
    kind: LrgOptimizerKind,
    rank: size_t,
    include_gradient: bool,
    bytes_per_slot: size_t,
    out: *mut LrgMemoryReport,
) -> LrgStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let dims = layer_dims(layers, count)?;
        let opts = memory_options(include_gradient, bytes_per_slot)?;
        *out = memory::low_rank_memory_with(&dims, kind.into(), rank, opts)?.into();
        Ok(())
    })
}

/// Largest rank at which low-rank training does not use more memory than
/// full-rank training.
///
/// # Safety
/// `layers` must point to `count` layers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lrg_crossover_rank(
    layers: *const LrgLayer,
    count: size_t,
    kind: LrgOptimizerKind,
    out: *mut size_t,
) -> LrgStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let dims = layer_dims(layers, count)?;
        *out = memory::crossover_rank(&dims, kind.into())?;
        Ok(())
    })
}
