//! Probability distributions on finite sets and the information geometry of
//! the simplex: Kullback-Leibler divergence, entropy, Bregman balls and the
//! mixture (m) and exponential (e) geodesics.
//!
//! All divergences are in nats.

use std::fmt;

use crate::error::{Error, Result};

/// Allowed deviation of a distribution's total mass from one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Weights at or below this value are treated as structural zeros.
pub const SUPPORT_TOLERANCE: f64 = 1e-14;

/// A non-negative real that may be `+∞`.
///
/// Divergences return this instead of a bare `f64` so that the absolute
/// continuity condition `p ≪ q` can be checked without comparing against
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// Lossy conversion; `Infinite` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => write!(f, "+inf"),
        }
    }
}

/// A point of the probability simplex Δ(X) over `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates and wraps `weights`. They must be finite, non-negative and
    /// sum to one within [`SUM_TOLERANCE`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no outcomes".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {i} is {w}; weights must be finite and non-negative"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Rescales non-negative `mass` to unit total.
    pub fn normalize(mass: Vec<f64>) -> Result<Self> {
        if mass.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "mass must be finite and non-negative".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if mass.is_empty() || total <= 0.0 {
            return Err(Error::InvalidDistribution("total mass is zero".into()));
        }
        Ok(Self {
            weights: mass.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Builds `exp(log_weights)` normalised, with max subtraction. Entries
    /// equal to `-inf` become exact zeros.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(Error::InvalidDistribution(
                "log-weights do not define a finite mass".into(),
            ));
        }
        Ok(Self {
            weights: log_weights.iter().map(|l| (l - lse).exp()).collect(),
        })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDistribution("no outcomes".into()));
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    /// Point mass at `index`.
    pub fn dirac(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::DimensionMismatch {
                context: "dirac index",
                expected: len,
                found: index,
            });
        }
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Indices with weight above [`SUPPORT_TOLERANCE`].
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > SUPPORT_TOLERANCE)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn in_support(&self, i: usize) -> bool {
        self.weights[i] > SUPPORT_TOLERANCE
    }

    /// True when every outcome is in the support (a point of Δ°(X)).
    pub fn is_interior(&self) -> bool {
        self.weights.iter().all(|w| *w > SUPPORT_TOLERANCE)
    }

    pub fn expectation(&self, values: &[f64]) -> Result<f64> {
        check_len("expectation", self.len(), values.len())?;
        Ok(self
            .weights
            .iter()
            .zip(values)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum())
    }

    pub fn total_variation(&self, other: &Distribution) -> Result<f64> {
        check_len("total variation", self.len(), other.len())?;
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> Result<f64> {
        check_len("max abs diff", self.len(), other.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// A tangent vector at an interior point: a zero-mean function on X.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: Distribution,
    components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Distribution, components: Vec<f64>) -> Result<Self> {
        check_len("tangent vector", base.len(), components.len())?;
        let total: f64 = components.iter().sum();
        if total.abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "tangent components sum to {total}, expected 0"
            )));
        }
        Ok(Self { base, components })
    }

    pub fn base(&self) -> &Distribution {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }
}

/// `{ p : D_KL(p ‖ center) ≤ radius }`, a convex set around an interior point.
#[derive(Debug, Clone, PartialEq)]
pub struct BregmanBall {
    center: Distribution,
    radius: f64,
}

impl BregmanBall {
    pub fn new(center: Distribution, radius: f64) -> Result<Self> {
        if !center.is_interior() {
            return Err(Error::NotInterior("Bregman ball center"));
        }
        if !(radius >= 0.0) {
            return Err(Error::OutOfRange {
                what: "radius",
                value: radius,
                allowed: "radius >= 0",
            });
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Distribution {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, p: &Distribution) -> Result<bool> {
        Ok(match kl_divergence(p, &self.center)? {
            ExtendedReal::Finite(d) => d <= self.radius + SUM_TOLERANCE,
            ExtendedReal::Infinite => false,
        })
    }
}

/// `D_KL(p ‖ q) = Σ p_i ln(p_i / q_i)`; infinite when `p` puts mass outside
/// the support of `q`.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<ExtendedReal> {
    check_len("kl_divergence", p.len(), q.len())?;
    let mut total = 0.0;
    for (&pi, &qi) in p.weights.iter().zip(&q.weights) {
        if pi <= SUPPORT_TOLERANCE {
            continue;
        }
        if qi <= SUPPORT_TOLERANCE {
            return Ok(ExtendedReal::Infinite);
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can push the sum a hair below zero for p ≈ q.
    Ok(ExtendedReal::Finite(total.max(0.0)))
}

/// Shannon entropy in nats.
pub fn entropy(p: &Distribution) -> f64 {
    -p.weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * w.ln())
        .sum::<f64>()
}

/// Mixture geodesic `(1 - t) p + t q` for `t ∈ [0, 1]`.
pub fn m_geodesic(p: &Distribution, q: &Distribution, t: f64) -> Result<Distribution> {
    check_len("m_geodesic", p.len(), q.len())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
            allowed: "0 <= t <= 1",
        });
    }
    Ok(Distribution {
        weights: p
            .weights
            .iter()
            .zip(&q.weights)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect(),
    })
}

/// Exponential geodesic `∝ p^(1-t) q^t`, defined for every real `t`
/// (values outside `[0, 1]` extrapolate along the same exponential family).
pub fn e_geodesic(p: &Distribution, q: &Distribution, t: f64) -> Result<Distribution> {
    check_len("e_geodesic", p.len(), q.len())?;
    if !p.is_interior() {
        return Err(Error::NotInterior("e_geodesic start point"));
    }
    if !q.is_interior() {
        return Err(Error::NotInterior("e_geodesic end point"));
    }
    if !t.is_finite() {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
            allowed: "finite t",
        });
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    let logs: Vec<f64> = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(a, b)| (1.0 - t) * a.ln() + t * b.ln())
        .collect();
    Distribution::from_log_weights(&logs)
}

/// `ln Σ exp(x_i)` with max subtraction; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
