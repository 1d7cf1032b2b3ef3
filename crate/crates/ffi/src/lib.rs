//! C ABI for fvlab.
//!
//! Objects cross the boundary as opaque heap handles (`FvDomain`,
//! `FvSystem`) that the caller releases with the matching `*_free`. Every
//! fallible call returns an [`FvStatus`]; the message of the most recent
//! failure on the calling thread is available from [`fvlab_last_error`].
//! Panics are caught and reported as [`FvStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use fvlab::config::{parse_config, resolve_seed};
use fvlab::engine::{JumpMeasures, ParticleSystem, SystemConfig};
use fvlab::experiment::run_experiment;
use fvlab::geometry::{BoundaryBand, Domain};
use fvlab::oracles::spectral_qsd_interval;
use fvlab::stats::{kolmogorov_distance, EmpiricalMeasure};
use fvlab::FvError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    DomainViolation = 4,
    NonSmoothPoint = 5,
    ExplosionGuard = 6,
    AllKilled = 7,
    Convergence = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 99,
}

/// A bounded domain.
pub struct FvDomain(Domain);

/// A particle system together with its jump measures.
pub struct FvSystem {
    system: ParticleSystem,
    measures: JumpMeasures,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(FvStatus, String);

impl From<FvError> for Failure {
    fn from(e: FvError) -> Self {
        let status = match &e {
            FvError::Config(_) => FvStatus::Config,
            FvError::DomainViolation { .. } => FvStatus::DomainViolation,
            FvError::NonSmoothPoint { .. } => FvStatus::NonSmoothPoint,
            FvError::ExplosionGuard { .. } => FvStatus::ExplosionGuard,
            FvError::AllKilled { .. } => FvStatus::AllKilled,
            FvError::Convergence { .. } => FvStatus::Convergence,
            FvError::Io(_) => FvStatus::Io,
            _ => FvStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FvStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FvStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn domain<'a>(d: *const FvDomain) -> Result<&'a Domain, Failure> {
    d.as_ref().map(|d| &d.0).ok_or_else(|| null("domain"))
}

unsafe fn system<'a>(s: *const FvSystem) -> Result<&'a FvSystem, Failure> {
    s.as_ref().ok_or_else(|| null("system"))
}

unsafe fn system_mut<'a>(s: *mut FvSystem) -> Result<&'a mut FvSystem, Failure> {
    s.as_mut().ok_or_else(|| null("system"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size needed for the full message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

fn boxed_domain(d: fvlab::Result<Domain>, out: *mut *mut FvDomain) -> Result<(), Failure> {
    let d = d?;
    unsafe { write(out, Box::into_raw(Box::new(FvDomain(d))), "out") }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_domain_interval(a: f64, b: f64, out: *mut *mut FvDomain) -> FvStatus {
    guard(|| boxed_domain(Domain::interval(a, b), out))
}

/// # Safety
/// `lo` and `hi` must each hold `dim` values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_domain_box(lo: *const f64, hi: *const f64, dim: usize, out: *mut *mut FvDomain) -> FvStatus {
    guard(|| {
        let lo = read_slice(lo, dim, "lo")?.to_vec();
        let hi = read_slice(hi, dim, "hi")?.to_vec();
        boxed_domain(Domain::box_(lo, hi), out)
    })
}

/// # Safety
/// `center` must hold `dim` values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_domain_ball(center: *const f64, dim: usize, radius: f64, out: *mut *mut FvDomain) -> FvStatus {
    guard(|| {
        let c = read_slice(center, dim, "center")?.to_vec();
        boxed_domain(Domain::ball(c, radius), out)
    })
}

/// Distance to the boundary (zero outside the domain).
///
/// # Safety
/// `d` must come from a `fvlab_domain_*` constructor; `x` must hold `dim`
/// values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_domain_phi(d: *const FvDomain, x: *const f64, dim: usize, out: *mut f64) -> FvStatus {
    guard(|| {
        let d = domain(d)?;
        if dim != d.dim() {
            return Err(invalid(format!("point has {dim} coordinates, domain has {}", d.dim())));
        }
        write(out, d.phi(read_slice(x, dim, "x")?), "out")
    })
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fvlab_domain_free(d: *mut FvDomain) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Builds a system from a config document. `n = 0` takes the first system
/// size listed in the config.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_from_config(
    config_toml: *const c_char,
    seed: u64,
    n: usize,
    out: *mut *mut FvSystem,
) -> FvStatus {
    guard(|| {
        let cfg = parse_config(read_str(config_toml, "config_toml")?)?;
        let n = if n == 0 { cfg.n[0] } else { n };
        let mut sc = SystemConfig::new(n, cfg.dt, cfg.domain.clone(), cfg.diffusion_model()?, cfg.init.clone());
        sc.options = cfg.step_options();
        sc.explosion_cap = cfg.explosion_cap;
        sc.record_events = false;
        let system = ParticleSystem::new(sc, seed)?;
        write(out, Box::into_raw(Box::new(FvSystem { system, measures: cfg.measures() })), "out")
    })
}

/// Advances `steps` time steps; writes the number of jumps to `jumps` if non-null.
///
/// # Safety
/// `s` must be a live system handle; `jumps` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_advance(s: *mut FvSystem, steps: u64, jumps: *mut u64) -> FvStatus {
    guard(|| {
        let s = system_mut(s)?;
        let mut total = 0u64;
        for _ in 0..steps {
            total += s.system.advance(&s.measures)?.len() as u64;
        }
        if !jumps.is_null() {
            jumps.write(total);
        }
        Ok(())
    })
}

/// Runs until the clock reaches `horizon`.
///
/// # Safety
/// `s` must be a live system handle.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_run(s: *mut FvSystem, horizon: f64) -> FvStatus {
    guard(|| {
        let s = system_mut(s)?;
        s.system.run(&s.measures, horizon, &[], |_, _| {})?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live system handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_time(s: *const FvSystem, out: *mut f64) -> FvStatus {
    guard(|| write(out, system(s)?.system.time(), "out"))
}

/// Number of particles, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live system handle.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_len(s: *const FvSystem) -> usize {
    s.as_ref().map_or(0, |s| s.system.n())
}

/// Space dimension, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live system handle.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_dim(s: *const FvSystem) -> usize {
    s.as_ref().map_or(0, |s| s.system.config().domain.dim())
}

/// Copies positions row-major (`len * dim` values) into `buf`.
///
/// # Safety
/// `s` must be a live system handle; `buf` must be valid for `buf_len` writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_positions(s: *const FvSystem, buf: *mut f64, buf_len: usize) -> FvStatus {
    guard(|| {
        let s = system(s)?;
        let need = s.system.n() * s.system.config().domain.dim();
        if buf_len < need {
            return Err(Failure(FvStatus::BufferTooSmall, format!("need {need} values, got {buf_len}")));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let out = slice::from_raw_parts_mut(buf, need);
        for (dst, v) in out.iter_mut().zip(s.system.particles().iter().flat_map(|p| p.x.iter())) {
            *dst = *v;
        }
        Ok(())
    })
}

/// Total number of jumps so far.
///
/// # Safety
/// `s` must be a live system handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_jump_count(s: *const FvSystem, out: *mut u64) -> FvStatus {
    guard(|| write(out, system(s)?.system.jump_log().total(), "out"))
}

/// Fraction of particles within distance `a` of the boundary.
///
/// # Safety
/// `s` must be a live system handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_boundary_mass(s: *const FvSystem, a: f64, out: *mut f64) -> FvStatus {
    guard(|| {
        let s = system(s)?;
        let band = BoundaryBand::new(a)?;
        write(out, s.system.snapshot().boundary_mass(&s.system.config().domain, band), "out")
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fvlab_system_free(s: *mut FvSystem) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Two-sample Kolmogorov distance between real samples.
///
/// # Safety
/// `x` and `y` must hold `nx` and `ny` values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_kolmogorov_distance(x: *const f64, nx: usize, y: *const f64, ny: usize, out: *mut f64) -> FvStatus {
    guard(|| {
        let mx = EmpiricalMeasure::from_values(0.0, read_slice(x, nx, "x")?)?;
        let my = EmpiricalMeasure::from_values(0.0, read_slice(y, ny, "y")?)?;
        write(out, kolmogorov_distance(&mx, &my)?, "out")
    })
}

/// Quasi-stationary density of Brownian motion on `(a, b)` on `n` interior
/// grid points `a + k (b - a) / (n + 1)`, and the principal eigenvalue.
///
/// # Safety
/// `density` must be valid for `n` writes; `eigenvalue` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_spectral_qsd(a: f64, b: f64, n: usize, density: *mut f64, eigenvalue: *mut f64) -> FvStatus {
    guard(|| {
        let q = spectral_qsd_interval(&Domain::interval(a, b)?, n)?;
        if density.is_null() {
            return Err(null("density"));
        }
        slice::from_raw_parts_mut(density, n).copy_from_slice(&q.density);
        write(eigenvalue, q.eigenvalue, "eigenvalue")
    })
}

/// Runs a configured experiment into `out_dir` and writes the process exit
/// code the command-line runner would use (0 pass, 1 threshold failure,
/// 3 explosion guard). `seed` overrides the config when non-null.
///
/// # Safety
/// `config_toml` and `out_dir` must be NUL-terminated strings; `seed` must
/// be null or valid for reads; `exit_code` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fvlab_run_config(
    config_toml: *const c_char,
    out_dir: *const c_char,
    seed: *const u64,
    exit_code: *mut i32,
) -> FvStatus {
    guard(|| {
        let cfg = parse_config(read_str(config_toml, "config_toml")?)?;
        let dir = read_str(out_dir, "out_dir")?;
        let seed = resolve_seed(seed.as_ref().copied(), None, cfg.seed)?;
        let outcome = run_experiment(&cfg, seed, Path::new(dir))?;
        write(exit_code, outcome.exit_code(), "exit_code")
    })
}
