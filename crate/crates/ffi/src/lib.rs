//! C ABI over `infopolicy`.
//!
//! Every function returns an [`IpStatus`]; results go through out-pointers.
//! On failure a message is kept per thread and can be read back with
//! [`ip_last_error`]. Objects are opaque handles owned by the caller and
//! released with the matching `_free` function. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;
use std::slice;

use infopolicy::deontic::{
    feasibility_onset, proportionality_optimize, DisutilitySpec, PolicyMatrix, Proportionality,
    RestrictionScenario,
};
use infopolicy::gibbs::{gibbs_policy, GibbsProblem};
use infopolicy::kernel::{
    channel_capacity, mutual_information, semidirect_product, StochasticKernel,
};
use infopolicy::matrix::Matrix;
use infopolicy::rate_utility::{
    solve_for_rate, solve_self_consistent, RateUtilityPoint, RateUtilityProblem, SolverOptions,
    UtilityMatrix,
};
use infopolicy::simplex::{entropy, kl_divergence, Distribution};
use infopolicy::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidDistribution = 4,
    InvalidKernel = 5,
    NotInterior = 6,
    OutOfRange = 7,
    Unattainable = 8,
    NotConverged = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

impl From<&Error> for IpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } => IpStatus::DimensionMismatch,
            Error::InvalidDistribution(_) => IpStatus::InvalidDistribution,
            Error::InvalidKernel(_) | Error::ZeroMass { .. } | Error::EmptyRow { .. } => {
                IpStatus::InvalidKernel
            }
            Error::NotInterior(_) => IpStatus::NotInterior,
            Error::OutOfRange { .. } => IpStatus::OutOfRange,
            Error::Unattainable { .. } => IpStatus::Unattainable,
            Error::NotConverged { .. } => IpStatus::NotConverged,
            Error::EmptyBlock { .. } | Error::InvalidArgument(_) => IpStatus::InvalidArgument,
        }
    }
}

struct Failure(IpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(IpStatus::from(&e), e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IpStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IpStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            IpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(IpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, capacity: usize, what: &str) -> Result<(), Failure> {
    if capacity < src.len() {
        return Err(Failure(
            IpStatus::BufferTooSmall,
            format!("{what} needs {} entries, got {capacity}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn rows_of(data: &[f64], cols: usize) -> Vec<Vec<f64>> {
    data.chunks(cols.max(1)).map(<[f64]>::to_vec).collect()
}

unsafe fn matrix_input<'a>(
    data: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<&'a [f64], Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| {
        Failure(
            IpStatus::InvalidArgument,
            format!("{what} dimensions overflow"),
        )
    })?;
    input(data, len, what)
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn ip_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Probability vector on a finite set.
pub struct IpDistribution(Distribution);

/// Row-stochastic matrix.
pub struct IpKernel(StochasticKernel);

/// Source, utilities and optional support mask of a rate-utility problem.
pub struct IpRateUtilityProblem(RateUtilityProblem);

/// Solution of a rate-utility problem at one multiplier.
pub struct IpRateUtilityPoint(RateUtilityPoint);

/// # Safety
/// `weights` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_distribution_new(
    weights: *const f64,
    len: usize,
    out: *mut *mut IpDistribution,
) -> IpStatus {
    guard(|| {
        let w = input(weights, len, "weights")?;
        let d = Distribution::new(w.to_vec())?;
        store(out, Box::into_raw(Box::new(IpDistribution(d))), "out")
    })
}

/// # Safety
/// `handle` must come from `ip_distribution_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ip_distribution_free(handle: *mut IpDistribution) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live distribution; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_distribution_len(
    handle: *const IpDistribution,
    out: *mut usize,
) -> IpStatus {
    guard(|| store(out, self::handle(handle, "distribution")?.0.len(), "out"))
}

/// # Safety
/// `handle` must be a live distribution; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ip_distribution_weights(
    handle: *const IpDistribution,
    out: *mut f64,
    capacity: usize,
) -> IpStatus {
    guard(|| {
        copy_out(
            self::handle(handle, "distribution")?.0.weights(),
            out,
            capacity,
            "out",
        )
    })
}

/// `D(p ‖ q)`; `INFINITY` when `p` is not absolutely continuous w.r.t. `q`.
///
/// # Safety
/// `p` and `q` must be live distributions; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_kl_divergence(
    p: *const IpDistribution,
    q: *const IpDistribution,
    out: *mut f64,
) -> IpStatus {
    guard(|| {
        let d = kl_divergence(&handle(p, "p")?.0, &handle(q, "q")?.0)?;
        store(out, d.to_f64(), "out")
    })
}

/// Shannon entropy in nats.
///
/// # Safety
/// `p` must be a live distribution; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_entropy(p: *const IpDistribution, out: *mut f64) -> IpStatus {
    guard(|| store(out, entropy(&handle(p, "p")?.0), "out"))
}

/// # Safety
/// `data` must point to `rows * cols` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_kernel_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut IpKernel,
) -> IpStatus {
    guard(|| {
        let m = Matrix::new(rows, cols, matrix_input(data, rows, cols, "data")?.to_vec())?;
        let k = StochasticKernel::new(m)?;
        store(out, Box::into_raw(Box::new(IpKernel(k))), "out")
    })
}

/// # Safety
/// `handle` must come from `ip_kernel_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ip_kernel_free(handle: *mut IpKernel) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Mutual information of `p ⋊ k` in nats.
///
/// # Safety
/// `p` and `k` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_mutual_information(
    p: *const IpDistribution,
    k: *const IpKernel,
    out: *mut f64,
) -> IpStatus {
    guard(|| {
        let joint = semidirect_product(&handle(p, "p")?.0, &handle(k, "kernel")?.0)?;
        store(out, mutual_information(&joint), "out")
    })
}

/// Blahut-Arimoto capacity. `input` receives the capacity-achieving input
/// distribution and must hold at least `rows` doubles; it may be null when
/// `input_capacity` is zero and the input is not wanted.
///
/// # Safety
/// `k` must be a live kernel; pointers must be valid for their sizes.
#[no_mangle]
pub unsafe extern "C" fn ip_channel_capacity(
    k: *const IpKernel,
    tol: f64,
    capacity: *mut f64,
    input: *mut f64,
    input_capacity: usize,
) -> IpStatus {
    guard(|| {
        let c = channel_capacity(&handle(k, "kernel")?.0, tol)?;
        if !input.is_null() || input_capacity > 0 {
            copy_out(c.input.weights(), input, input_capacity, "input")?;
        }
        store(capacity, c.capacity, "capacity")
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpGibbsSummary {
    pub log_partition: f64,
    pub free_energy: f64,
    pub expected_utility: f64,
    pub utility_variance: f64,
    pub kl_cost: f64,
}

/// Gibbs policy `q e^{βu} / Z`. `policy` must hold the prior's length.
///
/// # Safety
/// `prior` must be a live distribution; `utilities` must hold `len` doubles;
/// `policy` must hold `policy_capacity` doubles; `summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn ip_gibbs_policy(
    prior: *const IpDistribution,
    utilities: *const f64,
    len: usize,
    beta: f64,
    policy: *mut f64,
    policy_capacity: usize,
    summary: *mut IpGibbsSummary,
) -> IpStatus {
    guard(|| {
        let u = input(utilities, len, "utilities")?;
        let problem = GibbsProblem::new(u.to_vec(), handle(prior, "prior")?.0.clone(), beta)?;
        let s = gibbs_policy(&problem);
        copy_out(s.policy.weights(), policy, policy_capacity, "policy")?;
        if !summary.is_null() {
            summary.write(IpGibbsSummary {
                log_partition: s.log_partition,
                free_energy: s.free_energy,
                expected_utility: s.expected_utility,
                utility_variance: s.utility_variance,
                kl_cost: s.kl_cost,
            });
        }
        Ok(())
    })
}

/// `mask` is null for no restriction, otherwise `rows * cols` bytes where
/// nonzero permits the action.
///
/// # Safety
/// `source` must be a live distribution with `rows` outcomes; `utilities`
/// must hold `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_problem_new(
    source: *const IpDistribution,
    utilities: *const f64,
    rows: usize,
    cols: usize,
    mask: *const u8,
    out: *mut *mut IpRateUtilityProblem,
) -> IpStatus {
    guard(|| {
        let data = matrix_input(utilities, rows, cols, "utilities")?;
        let u = UtilityMatrix::from_rows(&rows_of(data, cols))?;
        let mask = if mask.is_null() {
            None
        } else {
            let bytes = slice::from_raw_parts(mask, rows * cols);
            Some(PolicyMatrix::new(
                rows,
                cols,
                bytes.iter().map(|&b| b != 0).collect(),
            )?)
        };
        let problem = RateUtilityProblem::new(handle(source, "source")?.0.clone(), u, mask)?;
        store(
            out,
            Box::into_raw(Box::new(IpRateUtilityProblem(problem))),
            "out",
        )
    })
}

/// # Safety
/// `handle` must come from `ip_rate_utility_problem_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_problem_free(handle: *mut IpRateUtilityProblem) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

fn options(tol: f64, max_iter: usize) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if tol > 0.0 {
        opts.tol = tol;
    }
    if max_iter > 0 {
        opts.max_iter = max_iter;
    }
    opts
}

/// Self-consistent solution at multiplier `beta`. Zero `tol` or `max_iter`
/// selects the default.
///
/// # Safety
/// `problem` must be a live problem; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_solve(
    problem: *const IpRateUtilityProblem,
    beta: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut IpRateUtilityPoint,
) -> IpStatus {
    guard(|| {
        let point = solve_self_consistent(
            &handle(problem, "problem")?.0,
            beta,
            &options(tol, max_iter),
        )?;
        store(
            out,
            Box::into_raw(Box::new(IpRateUtilityPoint(point))),
            "out",
        )
    })
}

/// Point on the curve at mutual information `rate`.
///
/// # Safety
/// `problem` must be a live problem; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_solve_for_rate(
    problem: *const IpRateUtilityProblem,
    rate: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut IpRateUtilityPoint,
) -> IpStatus {
    guard(|| {
        let point = solve_for_rate(
            &handle(problem, "problem")?.0,
            rate,
            &options(tol, max_iter),
        )?;
        store(
            out,
            Box::into_raw(Box::new(IpRateUtilityPoint(point))),
            "out",
        )
    })
}

/// # Safety
/// `handle` must come from a solve call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_point_free(handle: *mut IpRateUtilityPoint) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IpPointSummary {
    pub beta: f64,
    pub rate: f64,
    pub utility: f64,
    pub residual: f64,
    pub iterations: usize,
    pub rows: usize,
    pub cols: usize,
}

/// # Safety
/// `point` must be a live point; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_point_summary(
    point: *const IpRateUtilityPoint,
    out: *mut IpPointSummary,
) -> IpStatus {
    guard(|| {
        let p = &handle(point, "point")?.0;
        let summary = IpPointSummary {
            beta: p.beta,
            rate: p.rate,
            utility: p.utility,
            residual: p.residual,
            iterations: p.iterations,
            rows: p.kernel.rows(),
            cols: p.kernel.cols(),
        };
        store(out, summary, "out")
    })
}

/// Row-major policy kernel of the point.
///
/// # Safety
/// `point` must be a live point; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_point_kernel(
    point: *const IpRateUtilityPoint,
    out: *mut f64,
    capacity: usize,
) -> IpStatus {
    guard(|| {
        let k = &handle(point, "point")?.0.kernel;
        let flat: Vec<f64> = (0..k.rows()).flat_map(|x| k.row(x).to_vec()).collect();
        copy_out(&flat, out, capacity, "out")
    })
}

/// Action marginal `K_* P` of the point.
///
/// # Safety
/// `point` must be a live point; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ip_rate_utility_point_marginal(
    point: *const IpRateUtilityPoint,
    out: *mut f64,
    capacity: usize,
) -> IpStatus {
    guard(|| {
        copy_out(
            handle(point, "point")?.0.marginal.weights(),
            out,
            capacity,
            "out",
        )
    })
}

unsafe fn restriction(
    prior: *const IpDistribution,
    face: *const usize,
    face_len: usize,
    utilities: *const f64,
    beta: f64,
) -> Result<RestrictionScenario, Failure> {
    if face.is_null() && face_len > 0 {
        return Err(null("face"));
    }
    let face = if face_len == 0 {
        &[][..]
    } else {
        slice::from_raw_parts(face, face_len)
    };
    let u = input(utilities, face_len, "utilities")?;
    Ok(RestrictionScenario::new(
        handle(prior, "prior")?.0.clone(),
        face.to_vec(),
        u.to_vec(),
        beta,
        None,
    )?)
}

/// Linear disutility with cap `d_max`; a nonpositive `d_max` selects the
/// default `−ln min q`.
unsafe fn linear_spec(prior: *const IpDistribution, d_max: f64) -> Result<DisutilitySpec, Failure> {
    let d_max = if d_max > 0.0 {
        d_max
    } else {
        let q = &handle(prior, "prior")?.0;
        -q.weights()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .ln()
    };
    Ok(DisutilitySpec::linear(d_max)?)
}

/// Maximises the proportionality objective over the face spanned by `face`
/// with a linear disutility. `vertex` receives the winning outcome index,
/// or -1 when the net-benefit constraint fails (no lawful restriction).
/// `beta` may be `INFINITY`.
///
/// # Safety
/// `prior` must be a live distribution; `face` and `utilities` must hold
/// `face_len` entries; `vertex` must be writable, `objective` may be null.
#[no_mangle]
pub unsafe extern "C" fn ip_proportionality_optimize(
    prior: *const IpDistribution,
    face: *const usize,
    face_len: usize,
    utilities: *const f64,
    beta: f64,
    d_max: f64,
    vertex: *mut i64,
    objective: *mut f64,
) -> IpStatus {
    guard(|| {
        let scenario = restriction(prior, face, face_len, utilities, beta)?;
        let result = proportionality_optimize(&scenario, linear_spec(prior, d_max)?)?;
        let v = match (&result.outcome, result.vertex) {
            (Proportionality::Optimal(_), Some(v)) => v as i64,
            _ => -1,
        };
        if !objective.is_null() {
            objective.write(result.objective);
        }
        store(vertex, v, "vertex")
    })
}

/// Smallest `β` at which some face vertex meets the net-benefit constraint
/// under a linear disutility; NaN when none ever does.
///
/// # Safety
/// As for [`ip_proportionality_optimize`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ip_feasibility_onset(
    prior: *const IpDistribution,
    face: *const usize,
    face_len: usize,
    utilities: *const f64,
    d_max: f64,
    out: *mut f64,
) -> IpStatus {
    guard(|| {
        let scenario = restriction(prior, face, face_len, utilities, 1.0)?;
        let onset = feasibility_onset(&scenario, linear_spec(prior, d_max)?)?;
        store(out, onset.unwrap_or(f64::NAN), "out")
    })
}
