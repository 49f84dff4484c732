//! Markov kernels on finite sets.
//!
//! A [`StochasticKernel`] `K: X → Δ(Y)` is a row-stochastic `|X| × |Y|`
//! matrix. Together with a source `P ∈ Δ(X)` it induces the joint
//! distribution `P ⋊ K` with entries `p(x) K(x, y)`. This module covers the
//! calculus around that construction: push-forwards, disintegration,
//! Bayesian inversion, coarse graining, mutual information and channel
//! capacity.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::simplex::{
    check_len, kl_divergence, log_sum_exp, Distribution, ExtendedReal, SUM_TOLERANCE,
    SUPPORT_TOLERANCE,
};

/// Iteration cap of [`channel_capacity`].
pub const CAPACITY_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticKernel {
    m: Matrix,
}

impl StochasticKernel {
    /// Every row must be a distribution (non-negative, sums to one within
    /// [`SUM_TOLERANCE`]).
    pub fn new(m: Matrix) -> Result<Self> {
        for i in 0..m.rows() {
            let row = m.row(i);
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "row {i} has entry {v}; entries must be finite and non-negative"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidKernel(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Rescales each row of a non-negative matrix to unit mass.
    pub fn normalize_rows(mut m: Matrix) -> Result<Self> {
        for i in 0..m.rows() {
            let row = m.row_mut(i);
            let s: f64 = row.iter().sum();
            if !(s > 0.0) || !s.is_finite() || row.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "row {i} cannot be normalised"
                )));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(Self { m })
    }

    /// Rows given in log-space, normalised with max subtraction.
    pub(crate) fn from_log_rows(rows: usize, cols: usize, logs: &[f64]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = &logs[i * cols..(i + 1) * cols];
            let lse = log_sum_exp(row);
            if !lse.is_finite() {
                return Err(Error::EmptyRow { row: i });
            }
            data.extend(row.iter().map(|l| (l - lse).exp()));
        }
        Ok(Self {
            m: Matrix::new(rows, cols, data)?,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Matrix::filled(n, n, 0.0)?;
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        Ok(Self { m })
    }

    /// Kernel whose every row equals `q`.
    pub fn constant(q: &Distribution, rows: usize) -> Result<Self> {
        let data = q.weights().repeat(rows);
        Ok(Self {
            m: Matrix::new(rows, q.len(), data)?,
        })
    }

    /// Deterministic kernel `x ↦ δ_{targets[x]}`.
    pub fn deterministic(targets: &[usize], cols: usize) -> Result<Self> {
        let mut m = Matrix::filled(targets.len(), cols, 0.0)?;
        for (i, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(Error::DimensionMismatch {
                    context: "deterministic kernel target",
                    expected: cols,
                    found: t,
                });
            }
            m.set(i, t, 1.0);
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> usize {
        self.m.rows()
    }

    pub fn cols(&self) -> usize {
        self.m.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }

    pub fn row_distribution(&self, i: usize) -> Distribution {
        Distribution::normalize(self.m.row(i).to_vec())
            .expect("kernel rows are valid distributions")
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn max_abs_diff(&self, other: &StochasticKernel) -> Result<f64> {
        self.m.max_abs_diff(&other.m)
    }

    /// `(1 - t) self + t other`, again a kernel for `t ∈ [0, 1]`.
    pub fn mix(&self, other: &StochasticKernel, t: f64) -> Result<StochasticKernel> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                allowed: "0 <= t <= 1",
            });
        }
        Ok(Self {
            m: self.m.lerp(&other.m, t)?,
        })
    }

    /// True when all rows are equal within `tol`.
    pub fn is_constant(&self, tol: f64) -> bool {
        (1..self.rows()).all(|i| {
            self.row(i)
                .iter()
                .zip(self.row(0))
                .all(|(a, b)| (a - b).abs() <= tol)
        })
    }

    /// True when each row is a point mass (up to `tol`).
    pub fn is_deterministic(&self, tol: f64) -> bool {
        (0..self.rows()).all(|i| self.row(i).iter().any(|v| *v >= 1.0 - tol))
    }

    /// Output relabelling `g_* K`: column `j` is merged into `g(j)`.
    pub fn merge_columns(&self, g: &IndexMap) -> Result<StochasticKernel> {
        check_len("column map", self.cols(), g.len())?;
        let mut m = Matrix::filled(self.rows(), g.targets(), 0.0)?;
        for i in 0..self.rows() {
            for (j, v) in self.row(i).iter().enumerate() {
                let t = g.apply(j);
                m.set(i, t, m.get(i, t) + v);
            }
        }
        Ok(Self { m })
    }
}

/// A probability measure on `X × Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    m: Matrix,
}

impl JointDistribution {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some(v) = m.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "joint entry {v}; entries must be finite and non-negative"
            )));
        }
        let total: f64 = m.as_slice().iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "joint table sums to {total}"
            )));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Product measure `p ⊗ q`.
    pub fn product(p: &Distribution, q: &Distribution) -> Result<Self> {
        let data = p
            .weights()
            .iter()
            .flat_map(|a| q.weights().iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            m: Matrix::new(p.len(), q.len(), data)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.m.rows()
    }

    pub fn cols(&self) -> usize {
        self.m.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn x_marginal(&self) -> Distribution {
        Distribution::normalize(self.m.row_sums()).expect("joint has unit mass")
    }

    pub fn y_marginal(&self) -> Distribution {
        Distribution::normalize(self.m.col_sums()).expect("joint has unit mass")
    }

    /// All entries strictly inside the simplex.
    pub fn is_interior(&self) -> bool {
        self.m.as_slice().iter().all(|v| *v > SUPPORT_TOLERANCE)
    }

    pub fn mix(&self, other: &JointDistribution, t: f64) -> Result<JointDistribution> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                allowed: "0 <= t <= 1",
            });
        }
        Ok(Self {
            m: self.m.lerp(&other.m, t)?,
        })
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> Result<f64> {
        self.m.max_abs_diff(&other.m)
    }

    /// Image measure under `f × g`.
    pub fn push_forward(&self, f: &IndexMap, g: &IndexMap) -> Result<JointDistribution> {
        check_len("row map", self.rows(), f.len())?;
        check_len("column map", self.cols(), g.len())?;
        let mut m = Matrix::filled(f.targets(), g.targets(), 0.0)?;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let (a, b) = (f.apply(i), g.apply(j));
                m.set(a, b, m.get(a, b) + self.get(i, j));
            }
        }
        Ok(Self { m })
    }

    /// `E_π[U]` for a matrix of the same shape.
    pub fn expectation(&self, values: &Matrix) -> Result<f64> {
        self.m.check_same_shape(values)?;
        Ok(self
            .m
            .as_slice()
            .iter()
            .zip(values.as_slice())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, u)| p * u)
            .sum())
    }
}

/// A surjective index map `{0..len} → {0..targets}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    map: Vec<usize>,
    targets: usize,
}

impl IndexMap {
    /// The target set is `0..=max(map)`; every target must be hit.
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let targets = map.iter().max().map_or(0, |m| m + 1);
        if map.is_empty() {
            return Err(Error::InvalidArgument("index map is empty".into()));
        }
        let mut hit = vec![false; targets];
        map.iter().for_each(|&t| hit[t] = true);
        if let Some(missing) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidArgument(format!(
                "index map is not surjective: target {missing} has no preimage"
            )));
        }
        Ok(Self { map, targets })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            map: (0..len).collect(),
            targets: len,
        }
    }

    /// Collapses everything onto a single target.
    pub fn merge_all(len: usize) -> Self {
        Self {
            map: vec![0; len],
            targets: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn targets(&self) -> usize {
        self.targets
    }

    pub fn apply(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &IndexMap) -> Result<IndexMap> {
        check_len("index map composition", self.targets, next.len())?;
        Ok(Self {
            map: self.map.iter().map(|&t| next.apply(t)).collect(),
            targets: next.targets,
        })
    }

    /// Image measure `f_* P`.
    pub fn push(&self, p: &Distribution) -> Result<Distribution> {
        check_len("index map push", self.len(), p.len())?;
        let mut mass = vec![0.0; self.targets];
        for (i, w) in p.weights().iter().enumerate() {
            mass[self.map[i]] += w;
        }
        Distribution::normalize(mass)
    }
}

/// Pair of surjections relabelling inputs (`f`) and outputs (`g`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseGraining {
    pub f: IndexMap,
    pub g: IndexMap,
}

impl CoarseGraining {
    pub fn new(f: IndexMap, g: IndexMap) -> Self {
        Self { f, g }
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            f: IndexMap::identity(rows),
            g: IndexMap::identity(cols),
        }
    }

    /// Apply `self` first, then `next`.
    pub fn then(&self, next: &CoarseGraining) -> Result<CoarseGraining> {
        Ok(Self {
            f: self.f.then(&next.f)?,
            g: self.g.then(&next.g)?,
        })
    }
}

/// `(P ⋊ K)(x, y) = p(x) K(x, y)`.
pub fn semidirect_product(p: &Distribution, k: &StochasticKernel) -> Result<JointDistribution> {
    check_len("semidirect product", k.rows(), p.len())?;
    let mut m = k.m.clone();
    for i in 0..m.rows() {
        let w = p.get(i);
        m.row_mut(i).iter_mut().for_each(|v| *v *= w);
    }
    Ok(JointDistribution { m })
}

/// `(K_* P)(y) = Σ_x p(x) K(x, y)`.
pub fn push_forward(k: &StochasticKernel, p: &Distribution) -> Result<Distribution> {
    check_len("push forward", k.rows(), p.len())?;
    let mut out = vec![0.0; k.cols()];
    for (i, w) in p.weights().iter().enumerate() {
        for (o, v) in out.iter_mut().zip(k.row(i)) {
            *o += w * v;
        }
    }
    Distribution::normalize(out)
}

/// Splits `π` into its X-marginal and the conditional kernel `π / π_X`.
///
/// Rows with zero marginal mass are filled with the Y-marginal of `π`.
pub fn disintegrate(pi: &JointDistribution) -> (Distribution, StochasticKernel) {
    let px = pi.x_marginal();
    let py = pi.y_marginal();
    let mut m = pi.m.clone();
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.copy_from_slice(py.weights());
        }
    }
    (px, StochasticKernel { m })
}

/// Bayesian inversion `K⁻¹(y, x) = μ(x) K(x, y) / (K_* μ)(y)`.
pub fn reciprocal_kernel(mu: &Distribution, k: &StochasticKernel) -> Result<StochasticKernel> {
    let pi = semidirect_product(mu, k)?;
    let col = pi.m.col_sums();
    if let Some(index) = col.iter().position(|c| *c <= 0.0) {
        return Err(Error::ZeroMass { index });
    }
    let (rows, cols) = (k.rows(), k.cols());
    let mut m = Matrix::filled(cols, rows, 0.0)?;
    for y in 0..cols {
        for x in 0..rows {
            m.set(y, x, pi.get(x, y) / col[y]);
        }
    }
    Ok(StochasticKernel { m })
}

/// `I(π) = D_KL(π ‖ π_X ⊗ π_Y)` in nats.
pub fn mutual_information(pi: &JointDistribution) -> f64 {
    let px = pi.m.row_sums();
    let py = pi.m.col_sums();
    let mut total = 0.0;
    for i in 0..pi.rows() {
        for j in 0..pi.cols() {
            let v = pi.get(i, j);
            if v > 0.0 {
                total += v * (v / (px[i] * py[j])).ln();
            }
        }
    }
    total.max(0.0)
}

/// `∂I/∂π(x, y) = ln(π(x, y) / (π_X(x) π_Y(y))) − 1`, treating `I` as a
/// function of the unconstrained table entries.
pub fn mutual_information_gradient(pi: &JointDistribution) -> Result<Matrix> {
    if !pi.is_interior() {
        return Err(Error::NotInterior("joint distribution"));
    }
    let px = pi.m.row_sums();
    let py = pi.m.col_sums();
    let mut g = pi.m.clone();
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            g.set(i, j, (pi.get(i, j) / (px[i] * py[j])).ln() - 1.0);
        }
    }
    Ok(g)
}

/// Renormalised kernel `g_*(f_*^P K)` between the coarse alphabets:
/// `k̃(μ, ν) = Σ_{i ∈ f⁻¹(μ)} Σ_{j ∈ g⁻¹(ν)} p_i k_ij / P(f⁻¹(μ))`.
pub fn coarse_grain_kernel(
    k: &StochasticKernel,
    p: &Distribution,
    cg: &CoarseGraining,
) -> Result<StochasticKernel> {
    check_len("coarse graining source", k.rows(), p.len())?;
    let pi = semidirect_product(p, k)?;
    let coarse = pi.push_forward(&cg.f, &cg.g)?;
    let block_mass = cg.f.push(p)?;
    if let Some(index) = block_mass.weights().iter().position(|w| *w <= 0.0) {
        return Err(Error::EmptyBlock { index });
    }
    let mut m = coarse.m;
    for mu in 0..m.rows() {
        let s: f64 = m.row(mu).iter().sum();
        m.row_mut(mu).iter_mut().for_each(|v| *v /= s);
    }
    Ok(StochasticKernel { m })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataProcessing {
    pub before: f64,
    pub after: f64,
    /// `before ≥ after − 1e-12`
    pub holds: bool,
}

/// Compares `I(P; K)` with `I(P; g_* K)`.
pub fn data_processing_check(
    p: &Distribution,
    k: &StochasticKernel,
    g: &IndexMap,
) -> Result<DataProcessing> {
    let before = mutual_information(&semidirect_product(p, k)?);
    let after = mutual_information(&semidirect_product(p, &k.merge_columns(g)?)?);
    Ok(DataProcessing {
        before,
        after,
        holds: before >= after - 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    /// Lower end of the final bracket, `I(P; K)` at the returned input.
    pub capacity: f64,
    /// Upper end, `max_x D_KL(K_x ‖ K_* P)`.
    pub upper_bound: f64,
    pub input: Distribution,
    pub iterations: usize,
}

/// Channel capacity `max_P I(P; K)` by Blahut–Arimoto iteration.
///
/// Stops once the bracket `[I(P;K), max_x D(K_x ‖ K_*P)]` is narrower than
/// `tol · max(1, I)`.
pub fn channel_capacity(k: &StochasticKernel, tol: f64) -> Result<Capacity> {
    if !(tol > 0.0) {
        return Err(Error::OutOfRange {
            what: "tol",
            value: tol,
            allowed: "tol > 0",
        });
    }
    let n = k.rows();
    let mut log_p = vec![-(n as f64).ln(); n];
    let mut last = (0.0, f64::INFINITY);
    for iteration in 1..=CAPACITY_MAX_ITER {
        let p = Distribution::from_log_weights(&log_p)?;
        let q = push_forward(k, &p)?;
        let div: Vec<f64> = (0..n)
            .map(|x| kl_divergence(&k.row_distribution(x), &q).map(ExtendedReal::to_f64))
            .collect::<Result<_>>()?;
        let lower: f64 = p.weights().iter().zip(&div).map(|(w, d)| w * d).sum();
        let upper = div.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if upper - lower <= tol * lower.max(1.0) {
            return Ok(Capacity {
                capacity: lower.max(0.0),
                upper_bound: upper,
                input: p,
                iterations: iteration,
            });
        }
        last = (lower, upper);
        for (lp, d) in log_p.iter_mut().zip(&div) {
            *lp += d;
        }
        let lse = log_sum_exp(&log_p);
        log_p.iter_mut().for_each(|lp| *lp -= lse);
    }
    Err(Error::NotConverged {
        iterations: CAPACITY_MAX_ITER,
        residual: last.1 - last.0,
    })
}
