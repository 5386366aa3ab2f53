//! C ABI over the `iavi` library.
//!
//! Objects cross the boundary as opaque heap handles created by `*_new`,
//! `*_generate` or `*_from_*` functions and released with the matching
//! `*_free`. Every fallible function returns an [`IaviStatus`]; on failure
//! [`iavi_last_error_message`] describes the error for the calling thread.
//! Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use iavi::iavi::{iavi_solve as solve, IaviConfig, IaviResult as CoreResult};
use iavi::mdp::{expected_value_difference, PolicyTable, RewardTable, TabularMdp};
use iavi::objectworld::{self, ObjectworldInstance, ObjectworldSpec};
use iavi::reward_solver::{solve_state_rewards, EtaVector};
use iavi::Error;

/// Bumped on any incompatible change to the functions or types below.
pub const IAVI_ABI_VERSION: u32 = 1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IaviStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    NonConvergence = 4,
    Infeasible = 5,
    Io = 6,
    Numerical = 7,
    Panic = 8,
}

pub struct IaviObjectworld(ObjectworldInstance);
pub struct IaviMdp(TabularMdp);
pub struct IaviPolicy(PolicyTable);
pub struct IaviReward(RewardTable);
pub struct IaviResult(CoreResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(err: &Error) -> IaviStatus {
    match err {
        Error::InvalidModel(_) => IaviStatus::InvalidModel,
        Error::InvalidDimension(_) | Error::InvalidInput(_) => IaviStatus::InvalidArgument,
        Error::NonConvergence { .. } => IaviStatus::NonConvergence,
        Error::Infeasible { .. } | Error::InfeasibleStates { .. } => IaviStatus::Infeasible,
        Error::Numerical(_) => IaviStatus::Numerical,
        Error::Schema { .. } | Error::Json(_) | Error::Io(_) => IaviStatus::Io,
    }
}

/// Failure raised inside the shim before reaching the library.
struct Fail(IaviStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(IaviStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> IaviStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            IaviStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            IaviStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IaviStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn copy_out(values: &[f64], out: &mut [f64]) -> Result<(), Fail> {
    if out.len() != values.len() {
        return Err(Fail(
            IaviStatus::InvalidArgument,
            format!("buffer holds {} values, {} required", out.len(), values.len()),
        ));
    }
    out.copy_from_slice(values);
    Ok(())
}

#[no_mangle]
pub extern "C" fn iavi_abi_version() -> u32 {
    IAVI_ABI_VERSION
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn iavi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_generate(
    grid_size: usize,
    colors: usize,
    objects: usize,
    wind: f64,
    gamma: f64,
    seed: u64,
    out: *mut *mut IaviObjectworld,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let spec = ObjectworldSpec {
            grid_size,
            colors,
            objects,
            wind,
            gamma,
            seed,
            ..ObjectworldSpec::default()
        };
        *slot = boxed(IaviObjectworld(objectworld::generate(&spec)?));
        Ok(())
    })
}

/// Parses an instance previously written by the library as JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` as above.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_from_json(json: *const c_char, out: *mut *mut IaviObjectworld) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let text = str_arg(json, "json")?;
        *slot = boxed(IaviObjectworld(iavi::io::from_json(text)?));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_free(world: *mut IaviObjectworld) {
    free(world)
}

/// # Safety
/// Pointers must be valid; `world` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_n_states(world: *const IaviObjectworld, out: *mut usize) -> IaviStatus {
    guard(|| {
        *out_slot(out, "out")? = obj(world, "world")?.0.n_states();
        Ok(())
    })
}

/// Copy of the instance's transition model.
///
/// # Safety
/// Pointers must be valid; `world` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_mdp(world: *const IaviObjectworld, out: *mut *mut IaviMdp) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        *slot = boxed(IaviMdp(obj(world, "world")?.0.mdp.clone()));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `world` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_true_reward(
    world: *const IaviObjectworld,
    out: *mut *mut IaviReward,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        *slot = boxed(IaviReward(obj(world, "world")?.0.true_reward.clone()));
        Ok(())
    })
}

/// Boltzmann policy of the optimal Q-function under the true reward.
///
/// # Safety
/// Pointers must be valid; `world` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_objectworld_expert(
    world: *const IaviObjectworld,
    out: *mut *mut IaviPolicy,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let (policy, _) = objectworld::expert(&obj(world, "world")?.0)?;
        *slot = boxed(IaviPolicy(policy));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iavi_mdp_from_json(json: *const c_char, out: *mut *mut IaviMdp) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let text = str_arg(json, "json")?;
        *slot = boxed(IaviMdp(iavi::io::from_json(text)?));
        Ok(())
    })
}

/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_mdp_free(mdp: *mut IaviMdp) {
    free(mdp)
}

/// # Safety
/// Pointers must be valid; `mdp` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_mdp_dims(mdp: *const IaviMdp, n_states: *mut usize, n_actions: *mut usize) -> IaviStatus {
    guard(|| {
        let m = &obj(mdp, "mdp")?.0;
        *out_slot(n_states, "n_states")? = m.n_states();
        *out_slot(n_actions, "n_actions")? = m.n_actions();
        Ok(())
    })
}

/// Policy from `n_states * n_actions` row-major probabilities.
///
/// # Safety
/// `probs` must point to that many doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iavi_policy_new(
    n_states: usize,
    n_actions: usize,
    probs: *const f64,
    out: *mut *mut IaviPolicy,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let len = n_states
            .checked_mul(n_actions)
            .ok_or_else(|| Fail(IaviStatus::InvalidArgument, "size overflow".into()))?;
        let values = slice(probs, len, "probs")?.to_vec();
        *slot = boxed(IaviPolicy(PolicyTable::new(n_states, n_actions, values)?));
        Ok(())
    })
}

/// Copies the probabilities row-major into `out`, which must hold exactly
/// `n_states * n_actions` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles; `policy` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_policy_copy(policy: *const IaviPolicy, out: *mut f64, len: usize) -> IaviStatus {
    guard(|| {
        let p = &obj(policy, "policy")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        copy_out(p.probs(), std::slice::from_raw_parts_mut(out, len))
    })
}

/// # Safety
/// `policy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_policy_free(policy: *mut IaviPolicy) {
    free(policy)
}

/// Reward table from `n_states * n_actions` row-major values.
///
/// # Safety
/// `values` must point to that many doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iavi_reward_new(
    n_states: usize,
    n_actions: usize,
    values: *const f64,
    out: *mut *mut IaviReward,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let len = n_states
            .checked_mul(n_actions)
            .ok_or_else(|| Fail(IaviStatus::InvalidArgument, "size overflow".into()))?;
        let values = slice(values, len, "values")?.to_vec();
        *slot = boxed(IaviReward(RewardTable::from_values(n_states, n_actions, values)?));
        Ok(())
    })
}

/// # Safety
/// `out` must point to `len` writable doubles; `reward` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_reward_copy(reward: *const IaviReward, out: *mut f64, len: usize) -> IaviStatus {
    guard(|| {
        let r = &obj(reward, "reward")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        copy_out(r.values(), std::slice::from_raw_parts_mut(out, len))
    })
}

/// # Safety
/// `reward` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_reward_free(reward: *mut IaviReward) {
    free(reward)
}

/// Recovers a reward whose optimal Boltzmann policy is `expert`.
/// Non-positive `convergence_tol` or zero `max_sweeps` select the defaults.
///
/// # Safety
/// Pointers must be valid; `mdp` and `expert` live handles.
#[no_mangle]
pub unsafe extern "C" fn iavi_solve(
    mdp: *const IaviMdp,
    expert: *const IaviPolicy,
    convergence_tol: f64,
    max_sweeps: usize,
    out: *mut *mut IaviResult,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        let mut cfg = IaviConfig::default();
        if convergence_tol > 0.0 {
            cfg.convergence_tol = convergence_tol;
        }
        if max_sweeps > 0 {
            cfg.max_sweeps = max_sweeps;
        }
        let res = solve(&obj(mdp, "mdp")?.0, &obj(expert, "expert")?.0, &cfg)?;
        *slot = boxed(IaviResult(res));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `result` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_result_reward(result: *const IaviResult, out: *mut *mut IaviReward) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        *slot = boxed(IaviReward(obj(result, "result")?.0.reward.clone()));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `result` a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_result_status(
    result: *const IaviResult,
    converged: *mut bool,
    sweeps_used: *mut usize,
) -> IaviStatus {
    guard(|| {
        let r = &obj(result, "result")?.0;
        *out_slot(converged, "converged")? = r.converged;
        *out_slot(sweeps_used, "sweeps_used")? = r.sweeps_used;
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn iavi_result_free(result: *mut IaviResult) {
    free(result)
}

/// # Safety
/// Pointers must be valid; handles live.
#[no_mangle]
pub unsafe extern "C" fn iavi_expected_value_difference(
    mdp: *const IaviMdp,
    true_reward: *const IaviReward,
    learned_reward: *const IaviReward,
    out: *mut f64,
) -> IaviStatus {
    guard(|| {
        let slot = out_slot(out, "out")?;
        *slot = expected_value_difference(
            &obj(mdp, "mdp")?.0,
            &obj(true_reward, "true_reward")?.0,
            &obj(learned_reward, "learned_reward")?.0,
        )?;
        Ok(())
    })
}

/// Minimum-norm reward vector for one state's η values; `eta` and `out`
/// both hold `n` doubles.
///
/// # Safety
/// `eta` must point to `n` readable and `out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn iavi_solve_state_rewards(eta: *const f64, n: usize, out: *mut f64) -> IaviStatus {
    guard(|| {
        let etas = EtaVector::new(slice(eta, n, "eta")?.to_vec())?;
        let rewards = solve_state_rewards(&etas)?;
        if out.is_null() {
            return Err(null("out"));
        }
        copy_out(&rewards, std::slice::from_raw_parts_mut(out, n))
    })
}
