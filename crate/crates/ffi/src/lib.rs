//! C interface to `spt-core`.
//!
//! Every fallible function returns an [`SptStatus`] and writes its result
//! through an out-pointer. On failure a description is available from
//! [`spt_last_error_message`] on the same thread. Objects are opaque handles
//! released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spt_core::hilbert::{thermal_populations, von_neumann_entropy, ModeSpace, PopulationVector, ThermalSpec};
use spt_core::lindblad::{compare_to_ideal, CyclePropagators, JointDensityMatrix, LindbladConfig};
use spt_core::metrology;
use spt_core::protocol::{self, ProtocolConfig, Sideband};
use spt_core::SptError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SptStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Numerical = 3,
    Panic = 4,
}

pub const SPT_SIDEBAND_RSB: c_int = 0;
pub const SPT_SIDEBAND_BSB: c_int = 1;

/// Fock-state populations.
pub struct SptPopulation(PopulationVector);

/// One-cycle population map.
pub struct SptMap(protocol::PopulationMap);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SptGainReport {
    pub n_meas: usize,
    pub r_star: f64,
    pub f_q: f64,
    pub f_sql: f64,
    pub gain: f64,
    pub gain_db: f64,
}

/// Inputs of [`spt_lindblad_run`]. A non-positive `tau_decay` selects
/// `10 / gamma`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SptLindbladParams {
    pub n0: u32,
    pub sideband: c_int,
    pub eta: f64,
    pub omega: f64,
    pub delta: f64,
    pub gamma: f64,
    pub tau_decay: f64,
    pub beta: f64,
    pub dim: usize,
    pub repetitions: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SptLindbladResult {
    /// Total-variation distance to the ideal map after the last cycle.
    pub tv_ideal: f64,
    /// Total-variation distance to the analytic trapped state.
    pub tv_analytic: f64,
    pub off_support_mass: f64,
    pub max_excited_after_reset: f64,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(SptError),
}

impl From<SptError> for Failure {
    fn from(e: SptError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SptStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed for `{name}`"));
            SptStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            SptStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            let status = if e.is_config_error() {
                SptStatus::InvalidArgument
            } else {
                SptStatus::Numerical
            };
            set_last_error(e.to_string());
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SptStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn write_out<T>(p: *mut T, name: &'static str, value: T) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    p.write(value);
    Ok(())
}

fn sideband(code: c_int) -> Result<Sideband, Failure> {
    match code {
        SPT_SIDEBAND_RSB => Ok(Sideband::Rsb),
        SPT_SIDEBAND_BSB => Ok(Sideband::Bsb),
        other => Err(Failure::Invalid(format!("unknown sideband code {other}"))),
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Thermal populations with mean phonon number `mean_n`, truncated to `dim`
/// levels and renormalized.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_population_thermal(mean_n: f64, dim: usize, out: *mut *mut SptPopulation) -> SptStatus {
    guard(|| {
        let p = thermal_populations(ThermalSpec::MeanN(mean_n), ModeSpace::new(dim)?)?;
        write_out(out, "out", boxed(SptPopulation(p)))
    })
}

/// Thermal populations at inverse temperature `beta`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_population_thermal_beta(beta: f64, dim: usize, out: *mut *mut SptPopulation) -> SptStatus {
    guard(|| {
        let p = thermal_populations(ThermalSpec::Beta(beta), ModeSpace::new(dim)?)?;
        write_out(out, "out", boxed(SptPopulation(p)))
    })
}

/// Populations copied from `probs[0..len]`, which must sum to one.
///
/// # Safety
/// `probs` must point to `len` readable doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_population_from_array(
    probs: *const f64,
    len: usize,
    out: *mut *mut SptPopulation,
) -> SptStatus {
    guard(|| {
        if probs.is_null() {
            return Err(Failure::Null("probs"));
        }
        let v = std::slice::from_raw_parts(probs, len).to_vec();
        let p = PopulationVector::new(v)?;
        write_out(out, "out", boxed(SptPopulation(p)))
    })
}

/// Number of Fock levels, or 0 for a NULL handle.
///
/// # Safety
/// `pop` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spt_population_dim(pop: *const SptPopulation) -> usize {
    pop.as_ref().map_or(0, |p| p.0.dim())
}

/// Copies the populations into `buf`, which must hold at least
/// `spt_population_dim(pop)` values.
///
/// # Safety
/// `pop` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn spt_population_copy_to(pop: *const SptPopulation, buf: *mut f64, len: usize) -> SptStatus {
    guard(|| {
        let p = &deref(pop, "pop")?.0;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if len < p.dim() {
            return Err(Failure::Invalid(format!("buffer holds {len} values, need {}", p.dim())));
        }
        ptr::copy_nonoverlapping(p.probs().as_ptr(), buf, p.dim());
        Ok(())
    })
}

/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_population_entropy(pop: *const SptPopulation, out: *mut f64) -> SptStatus {
    guard(|| write_out(out, "out", von_neumann_entropy(&deref(pop, "pop")?.0)))
}

/// # Safety
/// `pop` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spt_population_free(pop: *mut SptPopulation) {
    if !pop.is_null() {
        drop(Box::from_raw(pop));
    }
}

/// Population map of one trapping cycle for trap index `n0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_map_new(n0: u32, sideband_code: c_int, dim: usize, out: *mut *mut SptMap) -> SptStatus {
    guard(|| {
        let sb = sideband(sideband_code)?;
        if n0 == 0 {
            return Err(Failure::Invalid("n0 must be a positive integer".into()));
        }
        let pair = protocol::KrausPair::for_angle(sb, ModeSpace::new(dim)?, std::f64::consts::PI / (n0 as f64).sqrt());
        write_out(out, "out", boxed(SptMap(protocol::population_map(&pair))))
    })
}

/// # Safety
/// `map` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spt_map_free(map: *mut SptMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Applies the map `repetitions` times.
///
/// # Safety
/// `map` and `pop` must be live handles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_map_iterate(
    map: *const SptMap,
    pop: *const SptPopulation,
    repetitions: u32,
    out: *mut *mut SptPopulation,
) -> SptStatus {
    guard(|| {
        let p = protocol::iterate(&deref(map, "map")?.0, &deref(pop, "pop")?.0, repetitions)?;
        write_out(out, "out", boxed(SptPopulation(p)))
    })
}

/// Infinite-repetition limit of the trapping protocol.
///
/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_trapped_state(
    pop: *const SptPopulation,
    n0: u32,
    sideband_code: c_int,
    out: *mut *mut SptPopulation,
) -> SptStatus {
    guard(|| {
        let p = protocol::trapped_state_analytic(&deref(pop, "pop")?.0, n0, sideband(sideband_code)?)?;
        write_out(out, "out", boxed(SptPopulation(p)))
    })
}

/// Population of level `n` after a displacement of amplitude `r`.
///
/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_overlap(pop: *const SptPopulation, n: usize, r: f64, out: *mut f64) -> SptStatus {
    guard(|| {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Failure::Invalid(format!("r must be finite and non-negative, got {r}")));
        }
        write_out(out, "out", metrology::overlap(&deref(pop, "pop")?.0, n, r))
    })
}

/// Fisher information of measuring level `n` at amplitude `r`.
///
/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_fisher(pop: *const SptPopulation, n: usize, r: f64, out: *mut f64) -> SptStatus {
    guard(|| write_out(out, "out", metrology::fisher(&deref(pop, "pop")?.0, n, r)?))
}

/// Maximal Fisher information of measuring level `n` on the grid
/// `r_min, r_min + r_step, …, r_max`, and its gain over the ground state.
///
/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_gain_report(
    pop: *const SptPopulation,
    n: usize,
    r_min: f64,
    r_max: f64,
    r_step: f64,
    out: *mut SptGainReport,
) -> SptStatus {
    guard(|| {
        let grid = metrology::uniform_grid(r_min, r_max, r_step)?;
        let rep = metrology::gain_report(&deref(pop, "pop")?.0, n, &grid)?;
        write_out(
            out,
            "out",
            SptGainReport {
                n_meas: rep.n_meas,
                r_star: rep.r_star,
                f_q: rep.f_q,
                f_sql: rep.f_sql,
                gain: rep.gain,
                gain_db: rep.gain_db,
            },
        )
    })
}

/// Master-equation simulation of `repetitions` trapping cycles from a
/// thermal state at inverse temperature `beta`.
///
/// # Safety
/// `params` must be readable and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spt_lindblad_run(params: *const SptLindbladParams, out: *mut SptLindbladResult) -> SptStatus {
    guard(|| {
        let p = *deref(params, "params")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let sb = sideband(p.sideband)?;
        let space = ModeSpace::new(p.dim)?;
        let proto = ProtocolConfig::new(p.n0, p.eta, p.omega, sb, p.repetitions, space)?;
        let tau_decay = if p.tau_decay > 0.0 { Some(p.tau_decay) } else { None };
        let cfg = LindbladConfig::from_protocol(&proto, p.delta, p.gamma, tau_decay)?;
        let p0 = thermal_populations(ThermalSpec::Beta(p.beta), space)?;
        let run = CyclePropagators::new(&cfg)?.run(&JointDensityMatrix::ground_with_populations(&p0), p.repetitions)?;
        let tv = compare_to_ideal(&run.history, &proto, &p0)?;
        let analytic = protocol::trapped_state_analytic(&p0, p.n0, sb)?;
        let last = run.history.last().expect("history holds the initial state");
        let traps = protocol::trap_levels(p.n0, sb, p.dim);
        write_out(
            out,
            "out",
            SptLindbladResult {
                tv_ideal: *tv.last().expect("history is non-empty"),
                tv_analytic: last.tv_distance(&analytic)?,
                off_support_mass: (0..p.dim).filter(|n| !traps.contains(n)).map(|n| last.get(n)).sum(),
                max_excited_after_reset: run.excited_after_reset.iter().copied().fold(0.0, f64::max),
                max_trace_error: run.max_trace_error,
                min_eigenvalue: run.min_eigenvalue,
            },
        )
    })
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len`) and returns the full message length, or 0 if there is none.
///
/// # Safety
/// `buf` must be NULL or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn spt_last_error_copy(buf: *mut c_char, len: usize) -> usize {
    let msg = spt_last_error_message();
    if msg.is_null() {
        return 0;
    }
    let bytes = CStr::from_ptr(msg).to_bytes();
    if !buf.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}
