//! C ABI over `diffbc`: load a checkpoint, sample actions, and call the exact
//! metrics. Every function returns a [`DiffbcStatus`]; on failure the message
//! is kept per thread and readable with [`diffbc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use diffbc::checkpoint::Policy;
use diffbc::envs::{gridworld_exact_posteriors, GridWorldSpec};
use diffbc::metrics::{density_coverage, emd, EmpiricalDistribution};
use diffbc::samplers::{SamplerConfig, Scheme};
use diffbc::Error;
use ndarray::{ArrayView2, Array2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffbcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Io = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffbcScheme {
    Bc = 0,
    ExtraSteps = 1,
    Kde = 2,
}

/// Sampler settings. `guidance <= 0` disables classifier-free guidance.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DiffbcSampler {
    pub scheme: DiffbcScheme,
    pub extra_steps: u32,
    pub kde_samples: u32,
    pub kde_width: f64,
    pub guidance: f64,
}

/// Exact grid-world posteriors. `p_o1_given[0]` (left) is NaN: never taken.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DiffbcGridPosteriors {
    pub p_obs: [f64; 4],
    pub p_action: [f64; 3],
    pub p_o1_given: [f64; 3],
}

/// Opaque handle to a loaded policy.
pub struct DiffbcPolicy {
    inner: Policy,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> DiffbcStatus {
    match e.exit_code() {
        2 => DiffbcStatus::Config,
        3 => DiffbcStatus::Io,
        _ => DiffbcStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DiffbcStatus>) -> DiffbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DiffbcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            DiffbcStatus::Panic
        }
    }
}

fn fail(e: Error) -> DiffbcStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> DiffbcStatus {
    set_error(format!("{what} is null"));
    DiffbcStatus::NullPointer
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn diffbc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: caller guarantees `len` writable bytes at `buf`.
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint file into a new handle written to `out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn diffbc_policy_load(path: *const c_char, out: *mut *mut DiffbcPolicy) -> DiffbcStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let path = CStr::from_ptr(path).to_str().map_err(|_| {
            set_error("path is not UTF-8".into());
            DiffbcStatus::Config
        })?;
        let inner = Policy::load(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(DiffbcPolicy { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `policy` must come from [`diffbc_policy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn diffbc_policy_free(policy: *mut DiffbcPolicy) {
    if !policy.is_null() {
        // SAFETY: pointer was produced by Box::into_raw in diffbc_policy_load.
        drop(Box::from_raw(policy));
    }
}

fn dims(p: &Policy) -> (usize, usize) {
    match p {
        Policy::Diffusion { policy, .. } => (policy.model.spec().obs_dim, policy.model.spec().action_dim),
        Policy::Baseline(m) => (m.trunk.input_dim(), m.action_dim()),
    }
}

/// Writes the observation and action widths of a policy.
///
/// # Safety
/// `policy` must be a live handle; `obs_dim` and `action_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn diffbc_policy_dims(
    policy: *const DiffbcPolicy,
    obs_dim: *mut usize,
    action_dim: *mut usize,
) -> DiffbcStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        if obs_dim.is_null() || action_dim.is_null() {
            return Err(null("output"));
        }
        let (o, a) = dims(&p.inner);
        *obs_dim = o;
        *action_dim = a;
        Ok(())
    })
}

fn sampler_config(s: &DiffbcSampler) -> SamplerConfig {
    SamplerConfig {
        scheme: match s.scheme {
            DiffbcScheme::Bc => Scheme::DiffusionBc,
            DiffbcScheme::ExtraSteps => Scheme::DiffusionX,
            DiffbcScheme::Kde => Scheme::DiffusionKde,
        },
        extra_steps: s.extra_steps as usize,
        kde_samples: s.kde_samples as usize,
        kde_width: s.kde_width,
        guidance: (s.guidance > 0.0).then_some(s.guidance),
    }
}

/// Draws `n` actions for one observation into `out` (`n * action_dim`
/// values, row-major). Baselines ignore `sampler`. Results are a pure
/// function of `seed`.
///
/// # Safety
/// `obs` must hold `obs_len` values and `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn diffbc_policy_sample(
    policy: *const DiffbcPolicy,
    sampler: *const DiffbcSampler,
    obs: *const f64,
    obs_len: usize,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> DiffbcStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null("policy"))?;
        let s = sampler.as_ref().ok_or_else(|| null("sampler"))?;
        if obs.is_null() || (out.is_null() && out_len > 0) {
            return Err(null("buffer"));
        }
        let (od, ad) = dims(&p.inner);
        if obs_len != od || out_len != n * ad {
            return Err(fail(Error::Shape(format!(
                "expected {od} observation values and {} output slots",
                n * ad
            ))));
        }
        // SAFETY: lengths checked against the caller-provided sizes.
        let obs = std::slice::from_raw_parts(obs, obs_len);
        let cfg = sampler_config(s);
        let mut rng = diffbc::rng::seeded(seed);
        let actions = match &p.inner {
            Policy::Diffusion { policy, .. } => {
                cfg.validate().map_err(fail)?;
                policy.sample_n(obs, &cfg, n, &mut rng).map_err(fail)?
            }
            Policy::Baseline(m) => {
                let mut a = Array2::zeros((n, ad));
                for mut row in a.rows_mut() {
                    let v = diffbc::baselines::sample_baseline(m, obs, &mut rng).map_err(fail)?;
                    row.assign(&ndarray::ArrayView1::from(&v));
                }
                a
            }
        };
        if out_len > 0 {
            let dst = std::slice::from_raw_parts_mut(out, out_len);
            for (d, v) in dst.iter_mut().zip(actions.iter()) {
                *d = *v;
            }
        }
        Ok(())
    })
}

/// Exact grid-world posteriors for `p_right` in (0, 1).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn diffbc_gridworld_posteriors(p_right: f64, out: *mut DiffbcGridPosteriors) -> DiffbcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = gridworld_exact_posteriors(&GridWorldSpec { p_right }).map_err(fail)?;
        *out = DiffbcGridPosteriors {
            p_obs: p.p_obs,
            p_action: p.p_action,
            p_o1_given: p.p_o1_given.map(|v| v.unwrap_or(f64::NAN)),
        };
        Ok(())
    })
}

unsafe fn cloud<'a>(ptr: *const f64, rows: usize, dim: usize) -> Result<ArrayView2<'a, f64>, DiffbcStatus> {
    if ptr.is_null() {
        return Err(null("points"));
    }
    // SAFETY: caller guarantees `rows * dim` readable values.
    let s = std::slice::from_raw_parts(ptr, rows * dim);
    ArrayView2::from_shape((rows, dim), s).map_err(|e| fail(Error::Shape(e.to_string())))
}

/// Exact earth mover's distance between two uniform point clouds.
///
/// # Safety
/// `a` holds `n * dim` values, `b` holds `m * dim`, `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn diffbc_emd(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    dim: usize,
    out: *mut f64,
) -> DiffbcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = EmpiricalDistribution::uniform(cloud(a, n, dim)?.to_owned()).map_err(fail)?;
        let q = EmpiricalDistribution::uniform(cloud(b, m, dim)?.to_owned()).map_err(fail)?;
        *out = emd(&p, &q).map_err(fail)?;
        Ok(())
    })
}

/// Density and coverage of `fake` against `real` with `k` neighbours.
///
/// # Safety
/// `real` holds `n * dim` values, `fake` holds `m * dim`; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn diffbc_density_coverage(
    real: *const f64,
    n: usize,
    fake: *const f64,
    m: usize,
    dim: usize,
    k: usize,
    density: *mut f64,
    coverage: *mut f64,
) -> DiffbcStatus {
    guard(|| {
        if density.is_null() || coverage.is_null() {
            return Err(null("output"));
        }
        let r = density_coverage(cloud(real, n, dim)?, cloud(fake, m, dim)?, k).map_err(fail)?;
        *density = r.density;
        *coverage = r.coverage;
        Ok(())
    })
}
