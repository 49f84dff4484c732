//! Ought sets, rights restrictions and proportionality.
//!
//! Actions act on states, `a.x`, and a potential `u` on states induces the
//! utility `U(x, a) = u(a.x) − u(x)`. A [`PolicyMatrix`] records which
//! actions are permitted in each state; it is the support constraint handed
//! to the rate-utility solver.
//!
//! Restricting rights moves a prior `q` onto a face of the simplex. The cost
//! of doing so is a disutility `D(d)` of the divergence `d = D_KL(p ‖ q)`,
//! and the restriction is proportionate when it maximises
//!
//! ```text
//! F_β[p] = E_p[U] − D(d(p, q)) / β     subject to   β E_p[U] > D(d(p, q)).
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rate_utility::UtilityMatrix;
use crate::simplex::{Distribution, ExtendedReal};

/// Slack for the strict net-benefit inequality.
pub const NET_BENEFIT_SLACK: f64 = 1e-12;

const CONVEXITY_SAMPLES: usize = 256;
const CONVEXITY_SEED: u64 = 0x5eed;
const GRID_POINT_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n_states: usize,
    /// `action_map[a][x] = a.x`.
    action_map: Vec<Vec<usize>>,
    potential: Vec<f64>,
}

impl StateSpace {
    pub fn new(n_states: usize, action_map: Vec<Vec<usize>>, potential: Vec<f64>) -> Result<Self> {
        if n_states == 0 || action_map.is_empty() {
            return Err(Error::InvalidArgument(
                "state space needs at least one state and one action".into(),
            ));
        }
        if potential.len() != n_states {
            return Err(Error::DimensionMismatch {
                context: "potential",
                expected: n_states,
                found: potential.len(),
            });
        }
        if let Some(v) = potential.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "potential value {v} is not finite"
            )));
        }
        for (a, row) in action_map.iter().enumerate() {
            if row.len() != n_states {
                return Err(Error::DimensionMismatch {
                    context: "action map row",
                    expected: n_states,
                    found: row.len(),
                });
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n_states) {
                return Err(Error::InvalidArgument(format!(
                    "action {a} maps to state {t}, but there are only {n_states} states"
                )));
            }
        }
        Ok(Self {
            n_states,
            action_map,
            potential,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.action_map.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// The consequence `a.x`.
    pub fn act(&self, a: usize, x: usize) -> Result<usize> {
        self.check_indices(x, a)?;
        Ok(self.action_map[a][x])
    }

    fn check_indices(&self, x: usize, a: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::InvalidArgument(format!(
                "state {x} out of range ({} states)",
                self.n_states
            )));
        }
        if a >= self.n_actions() {
            return Err(Error::InvalidArgument(format!(
                "action {a} is not admissible ({} actions)",
                self.n_actions()
            )));
        }
        Ok(())
    }
}

/// `U(x, a) = u(a.x) − u(x)`, one row per state and one column per action.
pub fn derive_utility_matrix(space: &StateSpace) -> UtilityMatrix {
    let rows: Vec<Vec<f64>> = (0..space.n_states)
        .map(|x| {
            space
                .action_map
                .iter()
                .map(|row| space.potential[row[x]] - space.potential[x])
                .collect()
        })
        .collect();
    UtilityMatrix::from_rows(&rows).expect("finite potential gives a finite utility matrix")
}

/// True iff `a.x` is a legal state and is weakly preferred to `x`.
pub fn legality_check(
    space: &StateSpace,
    legal_states: &[usize],
    x: usize,
    a: usize,
) -> Result<bool> {
    let target = space.act(a, x)?;
    Ok(legal_states.contains(&target) && space.potential[target] >= space.potential[x])
}

/// Boolean state-by-action matrix of permitted actions; no row is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMatrix {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

impl PolicyMatrix {
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "policy matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if mask.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "policy matrix",
                expected: rows * cols,
                found: mask.len(),
            });
        }
        if let Some(row) = (0..rows).find(|&x| !mask[x * cols..(x + 1) * cols].contains(&true)) {
            return Err(Error::EmptyRow { row });
        }
        Ok(Self { rows, cols, mask })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                context: "policy matrix row length",
                expected: cols,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn full(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![true; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn allows(&self, x: usize, a: usize) -> bool {
        self.mask[x * self.cols + a]
    }

    pub fn row(&self, x: usize) -> &[bool] {
        &self.mask[x * self.cols..(x + 1) * self.cols]
    }

    /// The ought set of state `x`.
    pub fn allowed_actions(&self, x: usize) -> Vec<usize> {
        (0..self.cols).filter(|&a| self.allows(x, a)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.rows).map(|x| self.row(x).to_vec()).collect()
    }
}

/// Result of intersecting a policy matrix with a predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    pub entries: Vec<Vec<bool>>,
    /// States left without any permitted action.
    pub empty_rows: Vec<usize>,
}

impl Restriction {
    pub fn to_policy(&self) -> Result<PolicyMatrix> {
        PolicyMatrix::from_rows(&self.entries)
    }
}

/// Entrywise `mask ∧ predicate(x, a)`. With `require_total` an emptied row
/// is an error.
pub fn select_restriction(
    mask: &PolicyMatrix,
    predicate: impl Fn(usize, usize) -> bool,
    require_total: bool,
) -> Result<Restriction> {
    let entries: Vec<Vec<bool>> = (0..mask.rows)
        .map(|x| {
            (0..mask.cols)
                .map(|a| mask.allows(x, a) && predicate(x, a))
                .collect()
        })
        .collect();
    let empty_rows: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.contains(&true))
        .map(|(x, _)| x)
        .collect();
    if require_total {
        if let Some(&row) = empty_rows.first() {
            return Err(Error::EmptyRow { row });
        }
    }
    Ok(Restriction {
        entries,
        empty_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisutilitySpec {
    /// `D(d) = 1/d`.
    Reciprocal,
    /// `D(d) = e^{−d}`.
    Exponential,
    /// `D(d) = max(d_max − d, 0)`.
    Linear { d_max: f64 },
}

impl DisutilitySpec {
    pub fn linear(d_max: f64) -> Result<Self> {
        if !(d_max > 0.0) || !d_max.is_finite() {
            return Err(Error::OutOfRange {
                what: "d_max",
                value: d_max,
                allowed: "finite d_max > 0",
            });
        }
        Ok(DisutilitySpec::Linear { d_max })
    }
}

pub fn disutility(spec: DisutilitySpec, d: f64) -> Result<ExtendedReal> {
    if !(d >= 0.0) {
        return Err(Error::OutOfRange {
            what: "divergence",
            value: d,
            allowed: "d >= 0",
        });
    }
    Ok(match spec {
        DisutilitySpec::Reciprocal if d == 0.0 => ExtendedReal::Infinite,
        DisutilitySpec::Reciprocal => ExtendedReal::Finite(1.0 / d),
        DisutilitySpec::Exponential => ExtendedReal::Finite((-d).exp()),
        DisutilitySpec::Linear { d_max } => ExtendedReal::Finite((d_max - d).max(0.0)),
    })
}

/// A prior on the full ought set restricted to a face of the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionScenario {
    prior: Distribution,
    face: Vec<usize>,
    utilities: Vec<f64>,
    beta: f64,
}

impl RestrictionScenario {
    /// `utilities[k]` is the public utility of vertex `face[k]`. `beta` may
    /// be `+∞`. The face must avoid every least likely prior outcome and,
    /// when given, every protected index.
    pub fn new(
        prior: Distribution,
        face: Vec<usize>,
        utilities: Vec<f64>,
        beta: f64,
        protected: Option<&[usize]>,
    ) -> Result<Self> {
        if !prior.is_interior() {
            return Err(Error::NotInterior("prior"));
        }
        if face.is_empty() {
            return Err(Error::InvalidArgument("face must be nonempty".into()));
        }
        let mut sorted = face.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != face.len() {
            return Err(Error::InvalidArgument(
                "face indices must be distinct".into(),
            ));
        }
        if let Some(&j) = face.iter().find(|&&j| j >= prior.len()) {
            return Err(Error::InvalidArgument(format!(
                "face index {j} out of range ({} outcomes)",
                prior.len()
            )));
        }
        if utilities.len() != face.len() {
            return Err(Error::DimensionMismatch {
                context: "face utilities",
                expected: face.len(),
                found: utilities.len(),
            });
        }
        if let Some(u) = utilities.iter().find(|u| !(**u >= 0.0) || !u.is_finite()) {
            return Err(Error::OutOfRange {
                what: "utility",
                value: *u,
                allowed: "finite utility >= 0",
            });
        }
        if !(beta > 0.0) {
            return Err(Error::OutOfRange {
                what: "beta",
                value: beta,
                allowed: "beta > 0",
            });
        }
        let q_min = prior
            .weights()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if let Some(&j) = face.iter().find(|&&j| prior.get(j) == q_min) {
            return Err(Error::InvalidArgument(format!(
                "face contains index {j}, a least likely prior outcome (q = {q_min}); \
                 the restricted face must exclude it"
            )));
        }
        if let Some(protected) = protected {
            if let Some(&j) = face.iter().find(|j| protected.contains(j)) {
                return Err(Error::InvalidArgument(format!(
                    "face contains protected index {j}"
                )));
            }
        }
        Ok(Self {
            prior,
            face,
            utilities,
            beta,
        })
    }

    pub fn prior(&self) -> &Distribution {
        &self.prior
    }

    pub fn face(&self) -> &[usize] {
        &self.face
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.prior.clone(),
            self.face.clone(),
            self.utilities.clone(),
            beta,
            None,
        )
    }

    /// `D_KL(p ‖ q)` for `p` given by its weights on the face.
    pub fn divergence(&self, p_face: &[f64]) -> f64 {
        p_face
            .iter()
            .zip(&self.face)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, &j)| w * (w / self.prior.get(j)).ln())
            .sum()
    }

    fn vertex_divergence(&self, k: usize) -> f64 {
        -self.prior.get(self.face[k]).ln()
    }

    fn embed(&self, p_face: &[f64]) -> Result<Distribution> {
        let mut w = vec![0.0; self.prior.len()];
        for (v, &j) in p_face.iter().zip(&self.face) {
            w[j] = *v;
        }
        Distribution::normalize(w)
    }
}

/// `(d_min, d*)`: the smallest divergence on the face, attained by the
/// conditional prior `q|face`, and the largest, attained at the least likely
/// vertex.
pub fn face_divergence_bounds(scenario: &RestrictionScenario) -> (f64, f64) {
    let mass: f64 = scenario.face.iter().map(|&j| scenario.prior.get(j)).sum();
    let d_star = (0..scenario.face.len())
        .map(|k| scenario.vertex_divergence(k))
        .fold(f64::NEG_INFINITY, f64::max);
    (-mass.ln(), d_star)
}

/// `β·E_p[U] − D(d(p, q))`, or `E_p[U]` scaled out when `β = +∞`. The sign
/// decides feasibility.
fn net_benefit(beta: f64, expected: f64, disutility: ExtendedReal) -> f64 {
    match disutility {
        ExtendedReal::Infinite => f64::NEG_INFINITY,
        ExtendedReal::Finite(d) if beta.is_infinite() => {
            if expected > 0.0 {
                f64::INFINITY
            } else {
                -d
            }
        }
        ExtendedReal::Finite(d) => beta * expected - d,
    }
}

fn inverse(beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        1.0 / beta
    }
}

/// `F_β[p]` for `p` given by its weights on the face.
pub fn objective(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
    p_face: &[f64],
) -> Result<f64> {
    if p_face.len() != scenario.face.len() {
        return Err(Error::DimensionMismatch {
            context: "face weights",
            expected: scenario.face.len(),
            found: p_face.len(),
        });
    }
    let expected: f64 = p_face
        .iter()
        .zip(&scenario.utilities)
        .map(|(p, u)| p * u)
        .sum();
    let tau = inverse(scenario.beta);
    Ok(match disutility(spec, scenario.divergence(p_face))? {
        ExtendedReal::Infinite => f64::NEG_INFINITY,
        ExtendedReal::Finite(_) if tau == 0.0 => expected,
        ExtendedReal::Finite(d) => expected - tau * d,
    })
}

/// Per-vertex disutilities `D(−ln q_j)`.
fn vertex_disutilities(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
) -> Result<Vec<ExtendedReal>> {
    (0..scenario.face.len())
        .map(|k| disutility(spec, scenario.vertex_divergence(k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    /// `F` passed the midpoint convexity test; its maximum sits at a vertex.
    VertexEnumeration,
    /// Convexity failed; the face was searched on a lattice.
    GridSearch { resolution: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Proportionality {
    Optimal(Distribution),
    NoSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalityResult {
    pub outcome: Proportionality,
    /// Maximiser of `F` over the face, feasible or not.
    pub maximizer: Distribution,
    pub objective: f64,
    /// `β E[U] − D` at the maximiser; positive means feasible.
    pub net_benefit: f64,
    /// Winning vertex as an index into the full outcome space.
    pub vertex: Option<usize>,
    pub method: SearchMethod,
    pub diagnostics: Vec<String>,
}

/// Maximises `F_β` over the face and checks the net-benefit constraint on
/// the maximiser.
pub fn proportionality_optimize(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
) -> Result<ProportionalityResult> {
    let m = scenario.face.len();
    let mut diagnostics = Vec::new();
    let (p_face, value, vertex, method) = if objective_is_convex(scenario, spec)? {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..m {
            let f = objective(scenario, spec, &unit(m, k))?;
            if f > best.1 {
                best = (k, f);
            }
        }
        (
            unit(m, best.0),
            best.1,
            Some(scenario.face[best.0]),
            SearchMethod::VertexEnumeration,
        )
    } else {
        let resolution = grid_resolution(m);
        diagnostics.push(format!(
            "objective failed the midpoint convexity test; searched a lattice of step 1/{resolution}"
        ));
        let (p, f) = grid_search(scenario, spec, resolution)?;
        let vertex = p.iter().position(|&w| w == 1.0).map(|k| scenario.face[k]);
        (p, f, vertex, SearchMethod::GridSearch { resolution })
    };

    let expected: f64 = p_face
        .iter()
        .zip(&scenario.utilities)
        .map(|(p, u)| p * u)
        .sum();
    let d = disutility(spec, scenario.divergence(&p_face))?;
    let net = net_benefit(scenario.beta, expected, d);
    let maximizer = scenario.embed(&p_face)?;
    let outcome = if net > NET_BENEFIT_SLACK {
        Proportionality::Optimal(maximizer.clone())
    } else {
        diagnostics.push(format!(
            "net-benefit constraint fails at the maximiser (beta*E[U] - D = {net})"
        ));
        Proportionality::NoSolution
    };
    Ok(ProportionalityResult {
        outcome,
        maximizer,
        objective: value,
        net_benefit: net,
        vertex,
        method,
        diagnostics,
    })
}

fn unit(m: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[k] = 1.0;
    v
}

/// Largest lattice step count whose point count stays within budget, capped
/// at 1000.
fn grid_resolution(m: usize) -> usize {
    let mut n = 1000;
    while n > 1 && lattice_size(n, m) > GRID_POINT_BUDGET as f64 {
        n /= 2;
    }
    n
}

fn lattice_size(n: usize, m: usize) -> f64 {
    // C(n + m − 1, m − 1)
    (1..m).fold(1.0, |acc, k| acc * (n + k) as f64 / k as f64)
}

/// Best lattice point `k/resolution` on the face, returned as face weights.
pub fn grid_search(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
    resolution: usize,
) -> Result<(Vec<f64>, f64)> {
    if resolution == 0 {
        return Err(Error::InvalidArgument(
            "grid resolution must be positive".into(),
        ));
    }
    let m = scenario.face.len();
    let mut counts = vec![0usize; m];
    let mut best = (unit(m, 0), f64::NEG_INFINITY);
    visit_lattice(&mut counts, 0, resolution, &mut |c| {
        let p: Vec<f64> = c.iter().map(|&k| k as f64 / resolution as f64).collect();
        let f = objective(scenario, spec, &p)?;
        if f > best.1 {
            best = (p, f);
        }
        Ok(())
    })?;
    Ok(best)
}

fn visit_lattice(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        return f(counts);
    }
    for k in 0..=remaining {
        counts[pos] = k;
        visit_lattice(counts, pos + 1, remaining - k, f)?;
    }
    Ok(())
}

/// Midpoint test `F((a+b)/2) ≤ (F(a) + F(b))/2` on vertices and seeded
/// random face points. Convexity does not depend on `β > 0`.
pub fn objective_is_convex(scenario: &RestrictionScenario, spec: DisutilitySpec) -> Result<bool> {
    let m = scenario.face.len();
    if m == 1 {
        return Ok(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(CONVEXITY_SEED);
    let mut points: Vec<Vec<f64>> = (0..m).map(|k| unit(m, k)).collect();
    points.extend((0..CONVEXITY_SAMPLES).map(|_| {
        let w: Vec<f64> = (0..m)
            .map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }));
    let values: Vec<f64> = points
        .iter()
        .map(|p| objective(scenario, spec, p))
        .collect::<Result<_>>()?;
    for i in 0..points.len() {
        let j = (i * 7 + 3) % points.len();
        if i == j {
            continue;
        }
        let mid: Vec<f64> = points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let fm = objective(scenario, spec, &mid)?;
        let chord = 0.5 * (values[i] + values[j]);
        if fm > chord + 1e-12 * (1.0 + chord.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest `β` at which some vertex satisfies `β u_j > D(−ln q_j)`, i.e.
/// `min_j D_j / u_j` over vertices with positive utility.
pub fn feasibility_onset(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
) -> Result<Option<f64>> {
    let ds = vertex_disutilities(scenario, spec)?;
    Ok(ds
        .iter()
        .zip(&scenario.utilities)
        .filter(|(_, &u)| u > 0.0)
        .filter_map(|(d, &u)| d.finite().map(|d| d / u))
        .reduce(f64::min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub beta: f64,
    /// `F_β[δ_j]` for each face vertex, in face order.
    pub vertex_objectives: Vec<f64>,
    /// Winning vertex as an index into the full outcome space.
    pub winner: usize,
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSwitch {
    /// Grid values of `β` bracketing the switch, in scan order.
    pub bracket: (f64, f64),
    /// Exact crossing of the two vertex objectives.
    pub beta: f64,
    pub inverse_temperature: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaScan {
    pub rows: Vec<ScanRow>,
    pub switches: Vec<VertexSwitch>,
}

/// Vertex winner, objective and feasibility at each `β` of a monotone grid
/// of positive values (`+∞` allowed), with every change of winner located.
///
/// The vertex objectives `u_j − D_j/β` are affine in `1/β`, so crossings are
/// found in closed form.
pub fn critical_beta_scan(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
    beta_grid: &[f64],
) -> Result<BetaScan> {
    if let Some(b) = beta_grid.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::OutOfRange {
            what: "beta",
            value: *b,
            allowed: "beta > 0",
        });
    }
    let ascending = beta_grid.windows(2).all(|w| w[0] < w[1]);
    let descending = beta_grid.windows(2).all(|w| w[0] > w[1]);
    if !ascending && !descending {
        return Err(Error::InvalidArgument(
            "beta grid must be strictly monotone".into(),
        ));
    }
    let ds = vertex_disutilities(scenario, spec)?;
    let us = &scenario.utilities;

    let rows: Vec<ScanRow> = beta_grid
        .iter()
        .map(|&beta| {
            let tau = inverse(beta);
            let values: Vec<f64> = ds
                .iter()
                .zip(us)
                .map(|(d, u)| match d {
                    ExtendedReal::Infinite => f64::NEG_INFINITY,
                    ExtendedReal::Finite(d) => u - tau * d,
                })
                .collect();
            let mut k = 0;
            for (i, v) in values.iter().enumerate() {
                if *v > values[k] {
                    k = i;
                }
            }
            ScanRow {
                beta,
                objective: values[k],
                winner: scenario.face[k],
                feasible: net_benefit(beta, us[k], ds[k]) > NET_BENEFIT_SLACK,
                vertex_objectives: values,
            }
        })
        .collect();

    let mut switches = Vec::new();
    for w in rows.windows(2) {
        if w[0].winner == w[1].winner {
            continue;
        }
        let a = scenario
            .face
            .iter()
            .position(|&j| j == w[0].winner)
            .unwrap();
        let b = scenario
            .face
            .iter()
            .position(|&j| j == w[1].winner)
            .unwrap();
        let tau = match (ds[a], ds[b]) {
            (ExtendedReal::Finite(da), ExtendedReal::Finite(db)) if da != db => {
                (us[a] - us[b]) / (da - db)
            }
            _ => 0.5 * (inverse(w[0].beta) + inverse(w[1].beta)),
        };
        switches.push(VertexSwitch {
            bracket: (w[0].beta, w[1].beta),
            beta: if tau == 0.0 { f64::INFINITY } else { 1.0 / tau },
            inverse_temperature: tau,
            from: w[0].winner,
            to: w[1].winner,
        });
    }
    Ok(BetaScan { rows, switches })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_outcome(beta: f64) -> (RestrictionScenario, DisutilitySpec) {
        let q = Distribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let scenario = RestrictionScenario::new(q, vec![0, 1], vec![7.0, 5.0], beta, None).unwrap();
        (scenario, DisutilitySpec::linear(-(0.1f64.ln())).unwrap())
    }

    #[test]
    fn utility_matrix_from_potential_differences() {
        // action 0 is the identity, action 1 sends 0 -> 2, action 2 agrees with 1 at state 0
        let space = StateSpace::new(
            3,
            vec![vec![0, 1, 2], vec![2, 0, 2], vec![2, 2, 1]],
            vec![0.0, 1.0, 3.0],
        )
        .unwrap();
        let u = derive_utility_matrix(&space);
        assert_eq!(
            (0..3).map(|x| u.get(x, 0)).collect::<Vec<_>>(),
            vec![0.0; 3]
        );
        assert_eq!(u.get(0, 1), 3.0);
        assert_eq!(u.get(0, 1), u.get(0, 2));
        assert_eq!(u.get(2, 2), -2.0);
        assert!(StateSpace::new(2, vec![vec![0, 2]], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn restriction_selection() {
        let full = PolicyMatrix::full(2, 3).unwrap();
        assert_eq!(
            select_restriction(&full, |_, _| true, true)
                .unwrap()
                .to_policy()
                .unwrap(),
            full
        );
        assert_eq!(
            select_restriction(&full, |_, _| false, true),
            Err(Error::EmptyRow { row: 0 })
        );
        let partial = select_restriction(&full, |x, _| x == 1, false).unwrap();
        assert_eq!(partial.empty_rows, vec![0]);
        assert!(partial.to_policy().is_err());
        let kept = select_restriction(&full, |_, a| a >= 1, true)
            .unwrap()
            .to_policy()
            .unwrap();
        assert_eq!(kept.allowed_actions(0), vec![1, 2]);
        assert_eq!(kept.allowed_actions(1), vec![1, 2]);
        assert!(PolicyMatrix::from_rows(&[vec![true, false], vec![false, false]]).is_err());
    }

    #[test]
    fn legality() {
        let space =
            StateSpace::new(3, vec![vec![0, 1, 2], vec![1, 2, 0]], vec![0.0, 1.0, 3.0]).unwrap();
        assert!(legality_check(&space, &[0, 1], 0, 0).unwrap());
        assert!(legality_check(&space, &[1, 2], 0, 1).unwrap());
        assert!(!legality_check(&space, &[0, 1, 2], 2, 1).unwrap());
        assert!(!legality_check(&space, &[0], 0, 1).unwrap());
        assert!(legality_check(&space, &[0], 0, 5).is_err());
    }

    #[test]
    fn disutility_kinds() {
        assert_eq!(
            disutility(DisutilitySpec::Exponential, 0.0).unwrap(),
            ExtendedReal::Finite(1.0)
        );
        assert_eq!(
            disutility(DisutilitySpec::Reciprocal, 0.0).unwrap(),
            ExtendedReal::Infinite
        );
        assert!(
            disutility(DisutilitySpec::Reciprocal, 1e300)
                .unwrap()
                .to_f64()
                < 1e-299
        );
        let linear = DisutilitySpec::linear(2.5).unwrap();
        assert_eq!(disutility(linear, 0.5).unwrap(), ExtendedReal::Finite(2.0));
        assert_eq!(disutility(linear, 5.0).unwrap(), ExtendedReal::Finite(0.0));
        assert!(disutility(linear, -1.0).is_err());
        assert!(DisutilitySpec::linear(0.0).is_err());
    }

    #[test]
    fn face_must_avoid_least_likely_outcome() {
        let q = Distribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let err = RestrictionScenario::new(q.clone(), vec![1, 2], vec![1.0, 1.0], 1.0, None);
        assert!(matches!(err, Err(Error::InvalidArgument(msg)) if msg.contains("least likely")));
        assert!(
            RestrictionScenario::new(q.clone(), vec![0, 1], vec![1.0, 1.0], 1.0, Some(&[1]))
                .is_err()
        );
        assert!(RestrictionScenario::new(q, vec![0, 1], vec![-1.0, 1.0], 1.0, None).is_err());
    }

    #[test]
    fn two_outcome_vertices() {
        let (s, spec) = two_outcome(10.0);
        let r = proportionality_optimize(&s, spec).unwrap();
        assert_eq!(r.method, SearchMethod::VertexEnumeration);
        assert_eq!(r.vertex, Some(0));
        assert!(matches!(r.outcome, Proportionality::Optimal(_)));

        let (s, _) = two_outcome(0.5);
        let r = proportionality_optimize(&s, spec).unwrap();
        assert_eq!(r.vertex, Some(1));
        assert!(matches!(r.outcome, Proportionality::Optimal(_)));

        let (s, _) = two_outcome(0.1);
        let r = proportionality_optimize(&s, spec).unwrap();
        assert_eq!(r.outcome, Proportionality::NoSolution);
        assert!(!r.diagnostics.is_empty());
    }

    #[test]
    fn two_outcome_onset_and_switch() {
        let (s, spec) = two_outcome(1.0);
        let onset = feasibility_onset(&s, spec).unwrap().unwrap();
        assert!((onset - 2f64.ln() / 5.0).abs() < 1e-15);

        let grid: Vec<f64> = (1..=80).map(|i| 1.0 / (i as f64 * 0.1)).collect();
        let scan = critical_beta_scan(&s, spec, &grid).unwrap();
        assert_eq!(scan.switches.len(), 1);
        let sw = &scan.switches[0];
        assert_eq!((sw.from, sw.to), (0, 1));
        let d0 = -(0.1f64.ln()) + 0.7f64.ln();
        let d1 = -(0.1f64.ln()) + 0.2f64.ln();
        assert!((sw.inverse_temperature - 2.0 / (d0 - d1)).abs() < 1e-12);
        assert!((sw.inverse_temperature - 1.5964712).abs() < 1e-6);
        assert!(!scan.rows.last().unwrap().feasible);
        assert!(scan.rows[0].feasible);
    }

    #[test]
    fn infinite_beta_picks_best_utility() {
        let (s, spec) = two_outcome(f64::INFINITY);
        let r = proportionality_optimize(&s, spec).unwrap();
        assert_eq!(r.vertex, Some(0));
        assert_eq!(r.objective, 7.0);
        let scan = critical_beta_scan(&s, spec, &[f64::INFINITY, 1.0]).unwrap();
        assert_eq!(scan.rows[0].objective, 7.0);
    }

    #[test]
    fn divergence_bounds_hold_on_face() {
        let (s, _) = two_outcome(1.0);
        let (d_min, d_star) = face_divergence_bounds(&s);
        assert!((d_min + 0.9f64.ln()).abs() < 1e-15);
        assert!((d_star + 0.2f64.ln()).abs() < 1e-15);
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let d = s.divergence(&[t, 1.0 - t]);
            assert!(d >= d_min - 1e-12 && d <= d_star + 1e-12);
        }
    }

    #[test]
    fn vertex_winner_beats_fine_grid() {
        let (s, spec) = two_outcome(0.9);
        let r = proportionality_optimize(&s, spec).unwrap();
        let (_, f) = grid_search(&s, spec, 1000).unwrap();
        assert!(f <= r.objective + 1e-6);
    }

    #[test]
    fn reciprocal_disutility_scan() {
        let q = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let s = RestrictionScenario::new(q, vec![0, 1], vec![2.0, 1.0], 2.0, None).unwrap();
        let r = proportionality_optimize(&s, DisutilitySpec::Reciprocal).unwrap();
        let (_, f) = grid_search(&s, DisutilitySpec::Reciprocal, 1000).unwrap();
        assert!(f <= r.objective + 1e-6);
    }
}
