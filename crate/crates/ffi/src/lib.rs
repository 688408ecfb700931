//! C ABI over the weight-space group, the mean-field posterior and the
//! symmetrized entropy estimator.
//!
//! Every fallible call returns a [`SymviStatus`]; on failure the message is
//! available from [`symvi_last_error`] until the next call on the same
//! thread. Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use symvi::rng::{stream, Stream};
use symvi::symmetrization::{draw_noise_and_perms, hk_values, symmetric_mixture_log_density, SymmetrizationConfig};
use symvi::variational::{MeanFieldGaussian, MixtureTarget};
use symvi::weightspace::{
    apply_action_flat, nearest_nontrivial, proximity_bound, Architecture, GroupElement, SearchMode, WeightVector,
};
use symvi::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NotBijective = 4,
    NonFinite = 5,
    Failed = 6,
    Panic = 7,
}

/// Network layout.
pub struct SymviArchitecture(Architecture);

/// Permutation of every hidden layer.
pub struct SymviGroupElement(GroupElement);

/// Mean-field Gaussian over the flattened weights.
pub struct SymviPosterior(MeanFieldGaussian);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SymviStatus {
    match e {
        Error::Shape(_) => SymviStatus::ShapeMismatch,
        Error::InvalidArgument(_) | Error::Config(_) => SymviStatus::InvalidArgument,
        Error::NotBijective(_) => SymviStatus::NotBijective,
        Error::NonFinite(_) => SymviStatus::NonFinite,
        _ => SymviStatus::Failed,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SymviStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SymviStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("{what} is null"));
            SymviStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside symvi");
            SymviStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got == want {
        Ok(())
    } else {
        Err(Fail::Lib(Error::Shape(format!(
            "{what}: expected {want} values, got {got}"
        ))))
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call.
#[no_mangle]
pub extern "C" fn symvi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn symvi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// MLP with layer widths `dims[0..n_dims]`, every layer with or without bias.
///
/// # Safety
/// `dims` must point to `n_dims` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_architecture_new(
    dims: *const usize,
    n_dims: usize,
    has_bias: bool,
    out: *mut *mut SymviArchitecture,
) -> SymviStatus {
    guard(|| {
        if dims.is_null() {
            return Err(Fail::Null("dims"));
        }
        let d = slice::from_raw_parts(dims, n_dims);
        let arch = Architecture::new(d, &vec![has_bias; n_dims.saturating_sub(1)])?;
        write(out, Box::into_raw(Box::new(SymviArchitecture(arch))), "out")
    })
}

/// The two-weight network `x ↦ relu(w₁x) + relu(w₂x)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_architecture_toy(out: *mut *mut SymviArchitecture) -> SymviStatus {
    guard(|| {
        write(
            out,
            Box::into_raw(Box::new(SymviArchitecture(Architecture::toy()))),
            "out",
        )
    })
}

/// # Safety
/// `arch` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn symvi_architecture_free(arch: *mut SymviArchitecture) {
    if !arch.is_null() {
        drop(Box::from_raw(arch));
    }
}

/// Number of trainable parameters; 0 for a null handle.
///
/// # Safety
/// `arch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn symvi_architecture_num_params(arch: *const SymviArchitecture) -> usize {
    arch.as_ref().map(|a| a.0.num_params()).unwrap_or(0)
}

/// Group element from one permutation per hidden layer, concatenated.
///
/// # Safety
/// `perms` must point to `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_group_element_new(
    arch: *const SymviArchitecture,
    perms: *const usize,
    len: usize,
    out: *mut *mut SymviGroupElement,
) -> SymviStatus {
    guard(|| {
        let arch = &obj(arch, "arch")?.0;
        if perms.is_null() && len > 0 {
            return Err(Fail::Null("perms"));
        }
        let flat = if len == 0 {
            &[][..]
        } else {
            slice::from_raw_parts(perms, len)
        };
        let widths = arch.hidden_dims();
        check_len(len, widths.iter().sum(), "perms")?;
        let mut parts = Vec::with_capacity(widths.len());
        let mut at = 0;
        for &w in widths {
            parts.push(flat[at..at + w].to_vec());
            at += w;
        }
        let g = GroupElement::new(parts)?;
        g.check_arch(arch)?;
        write(out, Box::into_raw(Box::new(SymviGroupElement(g))), "out")
    })
}

/// Uniformly random group element from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_group_element_sample(
    arch: *const SymviArchitecture,
    seed: u64,
    out: *mut *mut SymviGroupElement,
) -> SymviStatus {
    guard(|| {
        let arch = &obj(arch, "arch")?.0;
        let g = GroupElement::sample_uniform(&mut stream(seed, Stream::Permutation, 0), arch);
        write(out, Box::into_raw(Box::new(SymviGroupElement(g))), "out")
    })
}

/// # Safety
/// `g` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn symvi_group_element_free(g: *mut SymviGroupElement) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// `out = g·w` on flattened weights of length `len`. `out` may alias `w`.
///
/// # Safety
/// `w` and `out` must each hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn symvi_apply_action(
    arch: *const SymviArchitecture,
    g: *const SymviGroupElement,
    w: *const f64,
    out: *mut f64,
    len: usize,
) -> SymviStatus {
    guard(|| {
        let arch = &obj(arch, "arch")?.0;
        let g = &obj(g, "g")?.0;
        let moved = apply_action_flat(g, arch, input(w, len, "w")?)?;
        output(out, len, "out")?.copy_from_slice(&moved);
        Ok(())
    })
}

/// Mean-field Gaussian with means `mu` and stds `exp(rho)`.
///
/// # Safety
/// `mu` and `rho` must each hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_posterior_new(
    mu: *const f64,
    rho: *const f64,
    len: usize,
    out: *mut *mut SymviPosterior,
) -> SymviStatus {
    guard(|| {
        let q = MeanFieldGaussian::new(input(mu, len, "mu")?.to_vec(), input(rho, len, "rho")?.to_vec())?;
        write(out, Box::into_raw(Box::new(SymviPosterior(q))), "out")
    })
}

/// # Safety
/// `q` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn symvi_posterior_free(q: *mut SymviPosterior) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// `log q(w)`.
///
/// # Safety
/// `w` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_posterior_log_density(
    q: *const SymviPosterior,
    w: *const f64,
    len: usize,
    out: *mut f64,
) -> SymviStatus {
    guard(|| {
        let q = &obj(q, "q")?.0;
        let v = q.log_density(input(w, len, "w")?)?;
        write(out, v, "out")
    })
}

/// `log q^G(w)` averaged over the first `limit` enumerated group elements
/// (the whole group when it is no larger).
///
/// # Safety
/// `w` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_symmetric_log_density(
    q: *const SymviPosterior,
    arch: *const SymviArchitecture,
    w: *const f64,
    len: usize,
    limit: usize,
    out: *mut f64,
) -> SymviStatus {
    guard(|| {
        let q = &obj(q, "q")?.0;
        let arch = &obj(arch, "arch")?.0;
        let w = WeightVector::new(arch, input(w, len, "w")?.to_vec())?;
        let group = GroupElement::enumerate(arch, limit)?;
        write(out, symmetric_mixture_log_density(q, arch, &w, &group)?, "out")
    })
}

/// Entropy estimates from `s` shared draws: `Ĥᴷ` into `out_hk` and the
/// plain Monte Carlo `Ĥ¹` into `out_h1`.
///
/// # Safety
/// `out_hk` and `out_h1` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_hk_estimate(
    q: *const SymviPosterior,
    arch: *const SymviArchitecture,
    k: usize,
    s: usize,
    seed: u64,
    out_hk: *mut f64,
    out_h1: *mut f64,
) -> SymviStatus {
    guard(|| {
        let q = &obj(q, "q")?.0;
        let arch = &obj(arch, "arch")?.0;
        let cfg = SymmetrizationConfig::new(k, s)?;
        let (eps, perms) = draw_noise_and_perms(&mut stream(seed, Stream::Noise, 0), arch, cfg);
        let (hk, h1) = hk_values(q, arch, &eps, &perms)?;
        write(out_hk, hk, "out_hk")?;
        write(out_h1, h1, "out_h1")
    })
}

/// Distance from `w` to its nearest non-trivial permutation, by exhaustive
/// search or by scanning transpositions.
///
/// # Safety
/// `w` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_nearest_nontrivial(
    arch: *const SymviArchitecture,
    w: *const f64,
    len: usize,
    brute_force: bool,
    out: *mut f64,
) -> SymviStatus {
    guard(|| {
        let arch = &obj(arch, "arch")?.0;
        let w = WeightVector::new(arch, input(w, len, "w")?.to_vec())?;
        let mode = if brute_force {
            SearchMode::BruteForce
        } else {
            SearchMode::TranspositionScan
        };
        write(out, nearest_nontrivial(&w, mode)?.1, "out")
    })
}

/// Upper bound on the nearest non-trivial permutation distance at `norm`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_proximity_bound(
    arch: *const SymviArchitecture,
    norm: f64,
    out: *mut f64,
) -> SymviStatus {
    guard(|| {
        let arch = &obj(arch, "arch")?.0;
        write(out, proximity_bound(arch, norm)?, "out")
    })
}

/// `log p(x)` of the equal mixture `N(0, σ²I)` and `N(αu, σ²I)` in `d` dimensions.
///
/// # Safety
/// `u` and `x` must each hold `d` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn symvi_mixture_log_density(
    alpha: f64,
    sigma: f64,
    u: *const f64,
    x: *const f64,
    d: usize,
    out: *mut f64,
) -> SymviStatus {
    guard(|| {
        let t = MixtureTarget::new(alpha, sigma, input(u, d, "u")?.to_vec())?;
        write(out, t.log_density(input(x, d, "x")?)?, "out")
    })
}
