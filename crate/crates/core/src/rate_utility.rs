//! Rate-utility trade-off for state-dependent decisions.
//!
//! Given a source `P ∈ Δ(X)` and a utility matrix `U(x, y)`, the
//! rate-utility function is
//!
//! ```text
//! Ū(R) = max { E_π[U] : π = P ⋊ K, I(π) ≤ R }.
//! ```
//!
//! For a multiplier `β > 0` the maximiser solves the self-consistent system
//!
//! ```text
//! k(x, y) = q(y) e^{β U(x, y)} / Z(x),   q = K_* P,   Z(x) = Σ_y q(y) e^{β U(x, y)}
//! ```
//!
//! which [`solve_self_consistent`] iterates to a fixed point (an alternating
//! maximisation in the Blahut–Arimoto style). Sweeping `β` traces the curve;
//! its slope at `R(β)` is `1/β`.

use rayon::prelude::*;

use crate::deontic::PolicyMatrix;
use crate::error::{Error, Result};
use crate::kernel::{
    mutual_information, mutual_information_gradient, push_forward, semidirect_product,
    JointDistribution, StochasticKernel,
};
use crate::matrix::Matrix;
use crate::simplex::{check_len, log_sum_exp, Distribution, SUM_TOLERANCE};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Marginal weights below this are pinned to zero and the column is dropped.
pub const COLUMN_DEATH: f64 = 1e-300;

/// Rate queries give up on the interior iteration past this multiplier and
/// return the deterministic maximum-rate kernel instead.
pub const BETA_CAP: f64 = 1e4;

/// Smallest damping factor reachable by repeated halving.
pub const MIN_DAMPING: f64 = 1.0 / 1024.0;

const POLISH_START: usize = 20;
const POLISH_EVERY: usize = 20;

const RATE_BISECTION_MAX_ITER: usize = 200;
const RATE_MATCH_TOLERANCE: f64 = 1e-10;

/// State-action utilities `U(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    m: Matrix,
}

impl UtilityMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some(v) = m.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "utility entry {v} is not finite"
            )));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.m.rows()
    }

    pub fn cols(&self) -> usize {
        self.m.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.m.get(x, y)
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.m.row(x)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn negated(&self) -> UtilityMatrix {
        UtilityMatrix {
            m: self.m.map(|v| -v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateUtilityProblem {
    source: Distribution,
    utilities: UtilityMatrix,
    support_mask: Option<PolicyMatrix>,
}

impl RateUtilityProblem {
    pub fn new(
        source: Distribution,
        utilities: UtilityMatrix,
        support_mask: Option<PolicyMatrix>,
    ) -> Result<Self> {
        if !source.is_interior() {
            return Err(Error::NotInterior("source"));
        }
        check_len("utility rows", source.len(), utilities.rows())?;
        if let Some(mask) = &support_mask {
            if mask.shape() != utilities.shape() {
                return Err(Error::DimensionMismatch {
                    context: "support mask",
                    expected: utilities.rows() * utilities.cols(),
                    found: mask.rows() * mask.cols(),
                });
            }
        }
        Ok(Self {
            source,
            utilities,
            support_mask,
        })
    }

    pub fn source(&self) -> &Distribution {
        &self.source
    }

    pub fn utilities(&self) -> &UtilityMatrix {
        &self.utilities
    }

    pub fn support_mask(&self) -> Option<&PolicyMatrix> {
        self.support_mask.as_ref()
    }

    pub fn admissible(&self, x: usize, y: usize) -> bool {
        self.support_mask.as_ref().is_none_or(|m| m.allows(x, y))
    }

    /// Same problem with `−U`; its expansion path is the contraction path.
    pub fn negated(&self) -> RateUtilityProblem {
        RateUtilityProblem {
            source: self.source.clone(),
            utilities: self.utilities.negated(),
            support_mask: self.support_mask.clone(),
        }
    }

    fn rows(&self) -> usize {
        self.utilities.rows()
    }

    fn cols(&self) -> usize {
        self.utilities.cols()
    }

    /// Expected utility under `P ⋊ K`.
    pub fn expected_utility(&self, kernel: &StochasticKernel) -> Result<f64> {
        semidirect_product(&self.source, kernel)?.expectation(self.utilities.matrix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm bound on successive marginal and kernel iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// One sample of the rate-utility curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RateUtilityPoint {
    /// `+∞` marks the deterministic maximum-rate endpoint.
    pub beta: f64,
    /// `R(β) = β E_π[U] − Σ_x p(x) ln Z(x)` in nats.
    pub rate: f64,
    /// `Ū(β) = E_π[U]`.
    pub utility: f64,
    pub kernel: StochasticKernel,
    pub marginal: Distribution,
    pub residual: f64,
    pub iterations: usize,
    /// Number of times the damping factor was halved.
    pub damping_events: usize,
    pub damping: f64,
    /// The fixed point was reached by a Newton step on the dual and then
    /// verified against the plain iteration.
    pub polished: bool,
}

impl RateUtilityPoint {
    pub fn joint(&self, source: &Distribution) -> Result<JointDistribution> {
        semidirect_product(source, &self.kernel)
    }
}

/// Closed-form ends of the rate-utility curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    /// Best column usable by every state; `None` when a mask leaves none.
    pub zero_rate_column: Option<usize>,
    /// `Ū(0) = Σ_x p(x) U(x, y*)`.
    pub utility_at_zero: Option<f64>,
    /// `y*(x)`, lowest index on ties.
    pub argmax_columns: Vec<usize>,
    /// `Ū(R_max) = Σ_x p(x) U(x, y*(x))`.
    pub utility_at_max: f64,
    /// `I(P ⋊ δ_{y*(x)})`.
    pub rate_max: f64,
}

pub fn endpoints(problem: &RateUtilityProblem) -> Result<Endpoints> {
    let p = problem.source.weights();
    let u = &problem.utilities;
    let mut zero_rate: Option<(usize, f64)> = None;
    for y in 0..problem.cols() {
        if !(0..problem.rows()).all(|x| problem.admissible(x, y)) {
            continue;
        }
        let value: f64 = (0..problem.rows()).map(|x| p[x] * u.get(x, y)).sum();
        if zero_rate.is_none_or(|(_, best)| value > best) {
            zero_rate = Some((y, value));
        }
    }
    let mut argmax_columns = Vec::with_capacity(problem.rows());
    for x in 0..problem.rows() {
        let mut best: Option<usize> = None;
        for y in 0..problem.cols() {
            if problem.admissible(x, y) && best.is_none_or(|b| u.get(x, y) > u.get(x, b)) {
                best = Some(y);
            }
        }
        argmax_columns.push(best.ok_or(Error::EmptyRow { row: x })?);
    }
    let kernel = StochasticKernel::deterministic(&argmax_columns, problem.cols())?;
    let joint = semidirect_product(&problem.source, &kernel)?;
    Ok(Endpoints {
        zero_rate_column: zero_rate.map(|(y, _)| y),
        utility_at_zero: zero_rate.map(|(_, v)| v),
        utility_at_max: joint.expectation(u.matrix())?,
        rate_max: mutual_information(&joint),
        argmax_columns,
    })
}

/// Optimal prior over generic kernels for a fixed `K`: the minimiser of
/// `D_KL(P ⋊ K ‖ P ⋊ κ)`, which is `K` itself.
pub fn optimal_generic_prior(p: &Distribution, k: &StochasticKernel) -> Result<StochasticKernel> {
    check_len("generic prior", k.rows(), p.len())?;
    Ok(k.clone())
}

/// Optimal constant prior for a fixed `K`: `q* = K_* P`, the m-projection of
/// `P ⋊ K` onto the product measures `P ⊗ q`.
pub fn optimal_constant_prior(p: &Distribution, k: &StochasticKernel) -> Result<Distribution> {
    push_forward(k, p)
}

/// Unconstrained maximiser of `E_{P⋊K}[U]`: the row-wise argmax Dirac kernel.
pub fn argmax_kernel(problem: &RateUtilityProblem) -> Result<StochasticKernel> {
    StochasticKernel::deterministic(&endpoints(problem)?.argmax_columns, problem.cols())
}

/// Iterates the self-consistent equations at fixed `β`.
///
/// Starts from the uniform marginal over admissible columns. The marginal
/// update is damped, `q ← (1 − α) q + α q_new`, with `α = 1` halved whenever
/// the residual grows. Converged once successive marginals and kernels
/// differ by less than `opts.tol` in the sup norm.
///
/// At `β = 0` every marginal is a fixed point; the `β → 0⁺` limit
/// `P ⊗ δ_{y*}` (the zero-rate maximiser) is returned when it is admissible.
pub fn solve_self_consistent(
    problem: &RateUtilityProblem,
    beta: f64,
    opts: &SolverOptions,
) -> Result<RateUtilityPoint> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::OutOfRange {
            what: "beta",
            value: beta,
            allowed: "finite beta >= 0",
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::OutOfRange {
            what: "tol",
            value: opts.tol,
            allowed: "tol > 0",
        });
    }
    if beta == 0.0 {
        if let Some(y) = endpoints(problem)?.zero_rate_column {
            return zero_rate_point(problem, y);
        }
    }

    let (rows, cols) = (problem.rows(), problem.cols());
    let used: Vec<bool> = (0..cols)
        .map(|y| (0..rows).any(|x| problem.admissible(x, y)))
        .collect();
    let n_used = used.iter().filter(|u| **u).count() as f64;
    let mut q: Vec<f64> = used
        .iter()
        .map(|&u| if u { 1.0 / n_used } else { 0.0 })
        .collect();

    let mut alpha = 1.0;
    let mut damping_events = 0;
    let mut prev_kernel: Option<StochasticKernel> = None;
    let mut prev_residual = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        let kernel = gibbs_rows(problem, &q, beta)?;
        let q_new = push_forward(&kernel, &problem.source)?.into_weights();

        let mut q_next: Vec<f64> = q
            .iter()
            .zip(&q_new)
            .map(|(old, new)| {
                let v = (1.0 - alpha) * old + alpha * new;
                if v < COLUMN_DEATH {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let total: f64 = q_next.iter().sum();
        q_next.iter_mut().for_each(|v| *v /= total);

        let res_q = q
            .iter()
            .zip(&q_next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let res_k = match &prev_kernel {
            Some(prev) => prev.max_abs_diff(&kernel)?,
            None => f64::INFINITY,
        };
        residual = res_q.max(res_k);

        if residual > prev_residual && alpha > MIN_DAMPING {
            alpha = (alpha * 0.5).max(MIN_DAMPING);
            damping_events += 1;
        }
        prev_residual = residual;
        q = q_next;
        prev_kernel = Some(kernel);

        if residual < opts.tol {
            let mut point = finish(problem, &q, beta)?;
            point.residual = residual;
            point.iterations = iteration;
            point.damping_events = damping_events;
            point.damping = alpha;
            return Ok(point);
        }
        if iteration >= POLISH_START && iteration % POLISH_EVERY == 0 {
            if let Some(candidate) = polish(problem, &q, beta) {
                let check = fixed_point_residual(problem, &candidate, beta)?;
                if check < opts.tol {
                    let mut point = finish(problem, &candidate, beta)?;
                    point.residual = check;
                    point.iterations = iteration;
                    point.damping_events = damping_events;
                    point.damping = alpha;
                    point.polished = true;
                    return Ok(point);
                }
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

/// Sup-norm change of marginal and kernel over one plain iteration from `q`.
fn fixed_point_residual(problem: &RateUtilityProblem, q: &[f64], beta: f64) -> Result<f64> {
    let k1 = gibbs_rows(problem, q, beta)?;
    let q1 = push_forward(&k1, &problem.source)?.into_weights();
    let k2 = gibbs_rows(problem, &q1, beta)?;
    let res_q = q
        .iter()
        .zip(&q1)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(res_q.max(k1.max_abs_diff(&k2)?))
}

/// Active-set Newton maximisation of the concave dual `Σ_x p(x) ln Z(x; q)`
/// over the simplex, started from the support of `q`. Its maximiser is the
/// fixed point; `None` when the Hessian degenerates or the active set does
/// not settle.
fn polish(problem: &RateUtilityProblem, q: &[f64], beta: f64) -> Option<Vec<f64>> {
    let (rows, cols) = (problem.rows(), problem.cols());
    let p = problem.source.weights();
    let mut a = vec![0.0; rows * cols];
    for x in 0..rows {
        let u = problem.utilities.row(x);
        let top = (0..cols)
            .filter(|&y| problem.admissible(x, y))
            .map(|y| u[y])
            .fold(f64::NEG_INFINITY, f64::max);
        for y in 0..cols {
            if problem.admissible(x, y) {
                a[x * cols + y] = (beta * (u[y] - top)).exp();
            }
        }
    }
    let used: Vec<usize> = (0..cols)
        .filter(|&y| (0..rows).any(|x| a[x * cols + y] > 0.0))
        .collect();
    let q_top = q.iter().copied().fold(0.0, f64::max);
    let mut w = vec![0.0; cols];
    let mut active: Vec<usize> = used
        .iter()
        .copied()
        .filter(|&y| q[y] > 1e-8 * q_top)
        .collect();
    let mass: f64 = active.iter().map(|&y| q[y]).sum();
    for &y in &active {
        w[y] = q[y] / mass;
    }

    let partition = |w: &[f64]| -> Option<Vec<f64>> {
        let z: Vec<f64> = (0..rows)
            .map(|x| (0..cols).map(|y| w[y] * a[x * cols + y]).sum())
            .collect();
        z.iter()
            .all(|v: &f64| *v > 0.0 && v.is_finite())
            .then_some(z)
    };
    let dual = |z: &[f64]| -> f64 { z.iter().zip(p).map(|(z, p)| p * z.ln()).sum() };

    for _ in 0..4 * cols + 10 {
        let mut settled = false;
        for _ in 0..100 {
            let z = partition(&w)?;
            let n = active.len();
            let mut sys = vec![0.0; (n + 1) * (n + 2)];
            let mut grad = vec![0.0; n];
            for (i, &yi) in active.iter().enumerate() {
                for x in 0..rows {
                    grad[i] += p[x] * a[x * cols + yi] / z[x];
                    for (j, &yj) in active.iter().enumerate() {
                        sys[i * (n + 2) + j] -=
                            p[x] * a[x * cols + yi] * a[x * cols + yj] / (z[x] * z[x]);
                    }
                }
                sys[i * (n + 2) + n] = 1.0;
                sys[n * (n + 2) + i] = 1.0;
                sys[i * (n + 2) + n + 1] = -grad[i];
            }
            let Some(newton) = solve_linear(n + 1, &mut sys) else {
                // The Hessian has rank at most |X|; shed the lightest column that
                // leaves every row some support.
                if n == 1 {
                    return None;
                }
                let (i, _) = active
                    .iter()
                    .enumerate()
                    .filter(|&(_, &y)| {
                        (0..rows).all(|x| active.iter().any(|&v| v != y && a[x * cols + v] > 0.0))
                    })
                    .min_by(|a, b| w[*a.1].total_cmp(&w[*b.1]))?;
                w[active.remove(i)] = 0.0;
                let s: f64 = active.iter().map(|&y| w[y]).sum();
                active.iter().for_each(|&y| w[y] /= s);
                continue;
            };
            let mean = grad.iter().sum::<f64>() / n as f64;
            let projected: Vec<f64> = grad.iter().map(|g| g - mean).collect();
            let slope: f64 = projected.iter().zip(&newton).map(|(g, d)| g * d).sum();
            // Along nearly flat directions the Newton step is rounding noise;
            // fall back to the projected gradient, which always ascends.
            let (d, mut t) = if slope > 0.0 && newton[..n].iter().all(|v| v.is_finite()) {
                (newton[..n].to_vec(), 1.0)
            } else {
                (projected, f64::INFINITY)
            };
            let step = d.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            if step < 1e-15 {
                settled = true;
                break;
            }
            let mut blocking = None;
            for (i, &y) in active.iter().enumerate() {
                if d[i] < 0.0 {
                    let limit = w[y] / -d[i];
                    if limit <= t {
                        t = limit;
                        blocking = Some(i);
                    }
                }
            }
            let base = dual(&z);
            let tol = 1e-15 * base.abs().max(1.0);
            if let Some(i) = blocking {
                let mut trial = w.clone();
                for (k, &y) in active.iter().enumerate() {
                    trial[y] = (w[y] + t * d[k]).max(0.0);
                }
                trial[active[i]] = 0.0;
                if partition(&trial).is_some_and(|zt| dual(&zt) >= base - tol) {
                    w = trial;
                    active.remove(i);
                    if active.is_empty() {
                        return None;
                    }
                    let s: f64 = active.iter().map(|&y| w[y]).sum();
                    active.iter().for_each(|&y| w[y] /= s);
                    continue;
                }
                t *= 0.5;
            }
            let mut accepted = false;
            let mut gain = 0.0;
            for _ in 0..60 {
                let trial: Vec<f64> = (0..cols)
                    .map(|y| match active.iter().position(|&v| v == y) {
                        Some(k) => w[y] + t * d[k],
                        None => 0.0,
                    })
                    .collect();
                if let Some(zt) = partition(&trial) {
                    gain = dual(&zt) - base;
                    if gain >= -tol {
                        w = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
            // On a flat dual rounding keeps tiny steps alive; stop once they
            // no longer gain anything.
            if step < 1e-9 && gain <= 4.0 * f64::EPSILON * base.abs().max(1.0) {
                settled = true;
                break;
            }
        }
        if !settled {
            return None;
        }
        let z = partition(&w)?;
        let entering = used
            .iter()
            .copied()
            .filter(|y| !active.contains(y))
            .map(|y| {
                (
                    y,
                    (0..rows)
                        .map(|x| p[x] * a[x * cols + y] / z[x])
                        .sum::<f64>(),
                )
            })
            .filter(|(_, g)| *g > 1.0 + 1e-12)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match entering {
            Some((y, _)) => {
                active.push(y);
                active.sort_unstable();
            }
            None => {
                let s: f64 = w.iter().sum();
                return Some(w.into_iter().map(|v| v / s).collect());
            }
        }
    }
    None
}

/// Gaussian elimination with partial pivoting on an `n × (n + 1)` augmented
/// system stored row-major.
fn solve_linear(n: usize, sys: &mut [f64]) -> Option<Vec<f64>> {
    let w = n + 1;
    let scale = sys.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    for c in 0..n {
        let pivot =
            (c..n).max_by(|&i, &j| sys[i * w + c].abs().total_cmp(&sys[j * w + c].abs()))?;
        if sys[pivot * w + c].abs() <= 1e-13 * scale {
            return None;
        }
        for k in 0..w {
            sys.swap(c * w + k, pivot * w + k);
        }
        for r in c + 1..n {
            let f = sys[r * w + c] / sys[c * w + c];
            for k in c..w {
                sys[r * w + k] -= f * sys[c * w + k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|k| sys[r * w + k] * x[k]).sum();
        x[r] = (sys[r * w + n] - tail) / sys[r * w + r];
    }
    Some(x)
}

/// Kernel whose rows are Gibbs distributions with prior `q` restricted to
/// the admissible, still-alive columns.
fn gibbs_rows(problem: &RateUtilityProblem, q: &[f64], beta: f64) -> Result<StochasticKernel> {
    let (rows, cols) = (problem.rows(), problem.cols());
    let mut logs = Vec::with_capacity(rows * cols);
    for x in 0..rows {
        let u = problem.utilities.row(x);
        logs.extend((0..cols).map(|y| {
            if q[y] > 0.0 && problem.admissible(x, y) {
                q[y].ln() + beta * u[y]
            } else {
                f64::NEG_INFINITY
            }
        }));
    }
    StochasticKernel::from_log_rows(rows, cols, &logs)
}

fn finish(problem: &RateUtilityProblem, q: &[f64], beta: f64) -> Result<RateUtilityPoint> {
    let kernel = gibbs_rows(problem, q, beta)?;
    let marginal = push_forward(&kernel, &problem.source)?;
    let p = problem.source.weights();
    let u = &problem.utilities;
    let mut utility = 0.0;
    let mut log_partition_mean = 0.0;
    for x in 0..problem.rows() {
        let logs: Vec<f64> = (0..problem.cols())
            .map(|y| {
                if q[y] > 0.0 && problem.admissible(x, y) {
                    q[y].ln() + beta * u.get(x, y)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        log_partition_mean += p[x] * log_sum_exp(&logs);
        utility += p[x]
            * kernel
                .row(x)
                .iter()
                .zip(u.row(x))
                .filter(|(k, _)| **k > 0.0)
                .map(|(k, v)| k * v)
                .sum::<f64>();
    }
    let rate = (beta * utility - log_partition_mean).max(0.0);
    Ok(RateUtilityPoint {
        beta,
        rate,
        utility,
        kernel,
        marginal,
        residual: 0.0,
        iterations: 0,
        damping_events: 0,
        damping: 1.0,
        polished: false,
    })
}

fn zero_rate_point(problem: &RateUtilityProblem, column: usize) -> Result<RateUtilityPoint> {
    let delta = Distribution::dirac(problem.cols(), column)?;
    let kernel = StochasticKernel::constant(&delta, problem.rows())?;
    Ok(RateUtilityPoint {
        beta: 0.0,
        rate: 0.0,
        utility: problem.expected_utility(&kernel)?,
        kernel,
        marginal: delta,
        residual: 0.0,
        iterations: 0,
        damping_events: 0,
        damping: 1.0,
        polished: false,
    })
}

/// The deterministic argmax kernel as a curve point with `β = +∞`.
pub fn max_rate_point(problem: &RateUtilityProblem) -> Result<RateUtilityPoint> {
    let ends = endpoints(problem)?;
    let kernel = StochasticKernel::deterministic(&ends.argmax_columns, problem.cols())?;
    Ok(RateUtilityPoint {
        beta: f64::INFINITY,
        rate: ends.rate_max,
        utility: ends.utility_at_max,
        marginal: push_forward(&kernel, &problem.source)?,
        kernel,
        residual: 0.0,
        iterations: 0,
        damping_events: 0,
        damping: 1.0,
        polished: false,
    })
}

/// Solves for the multiplier whose fixed point attains `rate`, by bisection
/// on `β` (the achieved rate is non-decreasing in `β`).
pub fn solve_for_rate(
    problem: &RateUtilityProblem,
    rate: f64,
    opts: &SolverOptions,
) -> Result<RateUtilityPoint> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::OutOfRange {
            what: "rate",
            value: rate,
            allowed: "finite rate >= 0",
        });
    }
    if rate == 0.0 {
        return solve_self_consistent(problem, 0.0, opts);
    }
    let ends = endpoints(problem)?;
    if rate >= ends.rate_max {
        return max_rate_point(problem);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = loop {
        let point = solve_self_consistent(problem, hi, opts)?;
        if point.rate >= rate {
            break point;
        }
        if hi >= BETA_CAP {
            return max_rate_point(problem);
        }
        lo = hi;
        hi = (hi * 2.0).min(BETA_CAP);
    };
    for _ in 0..RATE_BISECTION_MAX_ITER {
        if (best.rate - rate).abs() < RATE_MATCH_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let point = solve_self_consistent(problem, mid, opts)?;
        if point.rate < rate {
            lo = mid;
        } else {
            hi = mid;
            best = point;
        }
    }
    Ok(best)
}

/// Grid along which a curve is sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveGrid {
    Beta(Vec<f64>),
    Rate(Vec<f64>),
}

/// One point per grid value, solved in parallel; failures are reported per
/// point in grid order.
pub fn rate_utility_curve(
    problem: &RateUtilityProblem,
    grid: &CurveGrid,
    opts: &SolverOptions,
) -> Result<Vec<Result<RateUtilityPoint>>> {
    let values = match grid {
        CurveGrid::Beta(v) | CurveGrid::Rate(v) => v,
    };
    if values.is_empty() {
        return Err(Error::InvalidArgument("curve grid is empty".into()));
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument(
            "curve grid must be sorted ascending".into(),
        ));
    }
    Ok(match grid {
        CurveGrid::Beta(betas) => betas
            .par_iter()
            .map(|&b| solve_self_consistent(problem, b, opts))
            .collect(),
        CurveGrid::Rate(rates) => rates
            .par_iter()
            .map(|&r| solve_for_rate(problem, r, opts))
            .collect(),
    })
}

/// Finite-difference slope `ΔŪ / ΔR` between two curve points.
pub fn slope_check(point: &RateUtilityPoint, neighbor: &RateUtilityPoint) -> Result<f64> {
    let dr = neighbor.rate - point.rate;
    if dr == 0.0 {
        return Err(Error::InvalidArgument(
            "slope undefined: the two points have the same rate".into(),
        ));
    }
    Ok((neighbor.utility - point.utility) / dr)
}

/// Optimal joints `P ⋊ K(β)` along a grid of positive multipliers.
pub fn expansion_path(
    problem: &RateUtilityProblem,
    beta_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<JointDistribution>> {
    if let Some(b) = beta_grid.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::OutOfRange {
            what: "beta",
            value: *b,
            allowed: "beta > 0 on expansion paths",
        });
    }
    beta_grid
        .par_iter()
        .map(|&b| solve_self_consistent(problem, b, opts)?.joint(&problem.source))
        .collect()
}

/// Minimising counterpart of [`expansion_path`]: the expansion path of `−U`.
pub fn contraction_path(
    problem: &RateUtilityProblem,
    beta_grid: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<JointDistribution>> {
    expansion_path(&problem.negated(), beta_grid, opts)
}

/// Distance between the unit normals of the utility hyperplane and of the
/// mutual-information level set at `joint`, both projected onto the tangent
/// space of the fixed-source manifold (row-wise zero-sum directions).
///
/// Only entries in the support of `joint` take part, so boundary points with
/// dead columns are handled on their face.
pub fn tangency_residual(problem: &RateUtilityProblem, joint: &JointDistribution) -> Result<f64> {
    let u = &problem.utilities;
    if u.shape() != (joint.rows(), joint.cols()) {
        return Err(Error::DimensionMismatch {
            context: "tangency residual",
            expected: u.rows() * u.cols(),
            found: joint.rows() * joint.cols(),
        });
    }
    let px = joint.matrix().row_sums();
    let py = joint.matrix().col_sums();
    let mut util = Vec::new();
    let mut grad = Vec::new();
    for x in 0..joint.rows() {
        let support: Vec<usize> = (0..joint.cols())
            .filter(|&y| joint.get(x, y) > 0.0)
            .collect();
        let n = support.len() as f64;
        let gx: Vec<f64> = support
            .iter()
            .map(|&y| (joint.get(x, y) / (px[x] * py[y])).ln())
            .collect();
        let g_mean = gx.iter().sum::<f64>() / n;
        let u_mean = support.iter().map(|&y| u.get(x, y)).sum::<f64>() / n;
        for (k, &y) in support.iter().enumerate() {
            util.push(u.get(x, y) - u_mean);
            grad.push(gx[k] - g_mean);
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nu, ng) = (norm(&util), norm(&grad));
    if nu == 0.0 || ng == 0.0 {
        return Err(Error::InvalidArgument(
            "tangency undefined: a projected normal vanishes".into(),
        ));
    }
    Ok(util
        .iter()
        .zip(&grad)
        .map(|(a, b)| (a / nu - b / ng).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Bregman divergence of the mutual information,
/// `I(π) − I(π₀) − ⟨∇I(π₀), π − π₀⟩`.
///
/// Both joints must be interior and share their X-marginal; on that slice
/// `I` is convex, so the result is non-negative.
pub fn bregman_divergence_of_i(pi: &JointDistribution, pi0: &JointDistribution) -> Result<f64> {
    if !pi.is_interior() {
        return Err(Error::NotInterior("joint distribution"));
    }
    let grad = mutual_information_gradient(pi0)?;
    pi.matrix().check_same_shape(pi0.matrix())?;
    let drift = pi.x_marginal().max_abs_diff(&pi0.x_marginal())?;
    if drift > SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "joints have different X-marginals (max difference {drift:e})"
        )));
    }
    let inner: f64 = grad
        .as_slice()
        .iter()
        .zip(pi.matrix().as_slice().iter().zip(pi0.matrix().as_slice()))
        .map(|(g, (a, b))| g * (a - b))
        .sum();
    Ok((mutual_information(pi) - mutual_information(pi0) - inner).max(0.0))
}
