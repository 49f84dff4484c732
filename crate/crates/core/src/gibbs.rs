//! Multiplier-robust control on a finite action set.
//!
//! For utilities `u`, an interior prior `q` and inverse temperature `β ≥ 0`
//! the problem
//!
//! ```text
//! max_p  E_p[U] − (1/β) D_KL(p ‖ q)
//! ```
//!
//! is solved by the Boltzmann-Gibbs policy `p_β(i) = q_i e^{β u_i} / Z_β`
//! with optimal value `U*_β = (1/β) ln Z_β`. Throughout the public API `β`
//! multiplies the utility in the exponent and `1/β` weighs the divergence
//! in the objective.
//!
//! Everything is evaluated in log-space with max subtraction so sweeps up
//! to `β = 10³` and beyond stay finite.

use crate::error::{Error, Result};
use crate::kernel::StochasticKernel;
use crate::rate_utility::UtilityMatrix;
use crate::simplex::{check_len, log_sum_exp, Distribution, TangentVector};

/// Iteration cap for the bisection in [`beta_of_rate`].
pub const BETA_BISECTION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsProblem {
    utilities: Vec<f64>,
    prior: Distribution,
    beta: f64,
}

impl GibbsProblem {
    pub fn new(utilities: Vec<f64>, prior: Distribution, beta: f64) -> Result<Self> {
        validate_utilities(&utilities, &prior)?;
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::OutOfRange {
                what: "beta",
                value: beta,
                allowed: "finite beta >= 0",
            });
        }
        Ok(Self {
            utilities,
            prior,
            beta,
        })
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn prior(&self) -> &Distribution {
        &self.prior
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.utilities.clone(), self.prior.clone(), beta)
    }

    fn log_weights(&self) -> Vec<f64> {
        log_weights(&self.utilities, &self.prior, self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSolution {
    pub policy: Distribution,
    /// `ln Z_β`
    pub log_partition: f64,
    /// `(1/β) ln Z_β`; at `β = 0` the limit `E_q[U]`.
    pub free_energy: f64,
    pub expected_utility: f64,
    pub utility_variance: f64,
    /// `D_KL(p_β ‖ q)`
    pub kl_cost: f64,
}

impl GibbsSolution {
    /// Objective value `E_p[U] − (1/β) D_KL(p ‖ q)` at the returned policy.
    pub fn objective(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            self.expected_utility
        } else {
            self.expected_utility - self.kl_cost / beta
        }
    }
}

/// `ln Z_β = ln Σ_i q_i e^{β u_i}`.
pub fn partition_function(problem: &GibbsProblem) -> f64 {
    log_sum_exp(&problem.log_weights())
}

pub fn gibbs_policy(problem: &GibbsProblem) -> GibbsSolution {
    let logs = problem.log_weights();
    let log_partition = log_sum_exp(&logs);
    let policy = Distribution::from_log_weights(&logs).expect("prior has full support");
    let (mean, variance) = moments(&policy, &problem.utilities);
    let free_energy = if problem.beta > 0.0 {
        log_partition / problem.beta
    } else {
        mean
    };
    GibbsSolution {
        kl_cost: rate_from_logs(problem.beta, mean, &problem.utilities, &problem.prior),
        policy,
        log_partition,
        free_energy,
        expected_utility: mean,
        utility_variance: variance,
    }
}

/// First two cumulants of `U` under the Gibbs policy: `(E[U], Var[U])`,
/// i.e. the first and second derivative of `ln Z_β` in `β`.
pub fn cumulants(problem: &GibbsProblem) -> (f64, f64) {
    let policy =
        Distribution::from_log_weights(&problem.log_weights()).expect("prior has full support");
    moments(&policy, &problem.utilities)
}

/// `r(β) = D_KL(p_β ‖ q) = β E_{p_β}[U] − ln Z_β`.
pub fn rate_of_beta(problem: &GibbsProblem) -> f64 {
    let (mean, _) = cumulants(problem);
    rate_from_logs(problem.beta, mean, &problem.utilities, &problem.prior)
}

/// `r_max = −ln q(argmax u)`, the supremum of `r(β)` over `β ≥ 0`.
///
/// With ties in the maximum the prior mass of the whole argmax set is used.
pub fn max_rate(utilities: &[f64], prior: &Distribution) -> Result<f64> {
    validate_utilities(utilities, prior)?;
    let top = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = utilities
        .iter()
        .zip(prior.weights())
        .filter(|(u, _)| **u == top)
        .map(|(_, q)| q)
        .sum();
    Ok(-mass.ln())
}

/// Inverse of [`rate_of_beta`] on `[0, r_max)`.
///
/// Brackets with `[0, 1]`, doubling the upper end until it overshoots, then
/// bisects. `r(β)` is strictly increasing so the root is unique.
pub fn beta_of_rate(utilities: &[f64], prior: &Distribution, rate: f64) -> Result<f64> {
    let r_max = max_rate(utilities, prior)?;
    if !(rate >= 0.0) {
        return Err(Error::OutOfRange {
            what: "rate",
            value: rate,
            allowed: "rate >= 0",
        });
    }
    if rate >= r_max {
        return Err(Error::Unattainable { rate, max: r_max });
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    let rate_at = |beta: f64| {
        let (mean, _) = moments(
            &Distribution::from_log_weights(&log_weights(utilities, prior, beta))
                .expect("prior has full support"),
            utilities,
        );
        rate_from_logs(beta, mean, utilities, prior)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while rate_at(hi) < rate {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Unattainable { rate, max: r_max });
        }
    }
    for _ in 0..BETA_BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate_at(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form e-geodesic `t ↦ q e^{tU} / Z_t` through the prior, evaluated
/// on `t_grid`. Negative `t` is allowed and runs towards `argmin u`.
pub fn solution_geodesic(
    utilities: &[f64],
    prior: &Distribution,
    t_grid: &[f64],
) -> Result<Vec<Distribution>> {
    validate_utilities(utilities, prior)?;
    t_grid
        .iter()
        .map(|&t| {
            if !t.is_finite() {
                return Err(Error::OutOfRange {
                    what: "t",
                    value: t,
                    allowed: "finite t",
                });
            }
            if t == 0.0 {
                return Ok(prior.clone());
            }
            Distribution::from_log_weights(&log_weights(utilities, prior, t))
        })
        .collect()
}

/// Initial velocity of [`solution_geodesic`]: `v_i = q_i (u_i − E_q[U])`.
pub fn geodesic_tangent(utilities: &[f64], prior: &Distribution) -> Result<TangentVector> {
    validate_utilities(utilities, prior)?;
    let mean = prior.expectation(utilities)?;
    let v: Vec<f64> = utilities
        .iter()
        .zip(prior.weights())
        .map(|(u, q)| q * (u - mean))
        .collect();
    // remove the rounding residue so the components sum to zero exactly enough
    let drift = v.iter().sum::<f64>() / v.len() as f64;
    TangentVector::new(prior.clone(), v.into_iter().map(|x| x - drift).collect())
}

/// Limit of the Gibbs policy as `β → +∞` (`towards_max`) or `β → −∞`:
/// the prior conditioned on the argmax (argmin) set of `u`.
pub fn gibbs_limit(
    utilities: &[f64],
    prior: &Distribution,
    towards_max: bool,
) -> Result<Distribution> {
    validate_utilities(utilities, prior)?;
    let target = if towards_max {
        utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        utilities.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Distribution::normalize(
        utilities
            .iter()
            .zip(prior.weights())
            .map(|(u, q)| if *u == target { *q } else { 0.0 })
            .collect(),
    )
}

/// Row-wise Gibbs kernel `k(x, y) = κ(x, y) e^{β U(x, y)} / Z_β(x)`.
///
/// Zeros of `κ` stay zeros; each row is the Gibbs policy of that row's
/// utilities restricted to the support of `κ_x`.
pub fn state_dependent_gibbs(
    utilities: &UtilityMatrix,
    kappa: &StochasticKernel,
    beta: f64,
) -> Result<StochasticKernel> {
    if utilities.shape() != (kappa.rows(), kappa.cols()) {
        return Err(Error::DimensionMismatch {
            context: "state-dependent Gibbs",
            expected: kappa.rows() * kappa.cols(),
            found: utilities.rows() * utilities.cols(),
        });
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::OutOfRange {
            what: "beta",
            value: beta,
            allowed: "finite beta >= 0",
        });
    }
    if beta == 0.0 {
        return Ok(kappa.clone());
    }
    let logs: Vec<f64> = (0..kappa.rows())
        .flat_map(|x| {
            kappa
                .row(x)
                .iter()
                .zip(utilities.row(x))
                .map(|(k, u)| {
                    if *k > 0.0 {
                        k.ln() + beta * u
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    StochasticKernel::from_log_rows(kappa.rows(), kappa.cols(), &logs)
}

fn validate_utilities(utilities: &[f64], prior: &Distribution) -> Result<()> {
    check_len("utilities", prior.len(), utilities.len())?;
    if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(Error::InvalidArgument(format!("utility {u} is not finite")));
    }
    if !prior.is_interior() {
        return Err(Error::NotInterior("prior"));
    }
    Ok(())
}

fn log_weights(utilities: &[f64], prior: &Distribution, beta: f64) -> Vec<f64> {
    prior
        .weights()
        .iter()
        .zip(utilities)
        .map(|(q, u)| q.ln() + beta * u)
        .collect()
}

fn moments(policy: &Distribution, utilities: &[f64]) -> (f64, f64) {
    let mean: f64 = policy
        .weights()
        .iter()
        .zip(utilities)
        .map(|(p, u)| p * u)
        .sum();
    let variance: f64 = policy
        .weights()
        .iter()
        .zip(utilities)
        .map(|(p, u)| p * (u - mean) * (u - mean))
        .sum();
    (mean, variance)
}

/// `β (E[U] − u_max) − ln Σ q e^{β (u − u_max)}`; shifting by `u_max` keeps
/// both terms O(1) at large β.
fn rate_from_logs(beta: f64, mean: f64, utilities: &[f64], prior: &Distribution) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let top = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Near saturation write r = r_max − ln(1 + s) − tail so the small
    // correction keeps full relative precision.
    let mass: f64 = utilities
        .iter()
        .zip(prior.weights())
        .filter(|(u, _)| **u == top)
        .map(|(_, q)| q)
        .sum();
    let rest: Vec<(f64, f64)> = utilities
        .iter()
        .zip(prior.weights())
        .filter(|(u, _)| **u != top)
        .map(|(u, q)| (q / mass * (beta * (u - top)).exp(), beta * (top - u)))
        .collect();
    let s: f64 = rest.iter().map(|(w, _)| w).sum();
    if s < 1.0 {
        let tail: f64 = rest.iter().map(|(w, gap)| w * gap).sum::<f64>() / (1.0 + s);
        return (-mass.ln() - s.ln_1p() - tail).max(0.0);
    }
    let shifted: Vec<f64> = prior
        .weights()
        .iter()
        .zip(utilities)
        .map(|(q, u)| q.ln() + beta * (u - top))
        .collect();
    (beta * (mean - top) - log_sum_exp(&shifted)).max(0.0)
}
