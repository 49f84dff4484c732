//! Scenario files: JSON objects with a `kind` discriminator and a `schema`
//! version, parsed into validated domain objects.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::deontic::{DisutilitySpec, PolicyMatrix, RestrictionScenario};
use crate::kernel::{CoarseGraining, IndexMap, StochasticKernel};
use crate::rate_utility::{CurveGrid, RateUtilityProblem, SolverOptions, UtilityMatrix};
use crate::simplex::Distribution;

pub const SCHEMA_VERSION: u64 = 1;
pub const DEFAULT_CAPACITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Gibbs,
    RateUtility,
    Geodesic,
    CoarseGrain,
    Capacity,
    Legal,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Gibbs,
        Kind::RateUtility,
        Kind::Geodesic,
        Kind::CoarseGrain,
        Kind::Capacity,
        Kind::Legal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Gibbs => "gibbs",
            Kind::RateUtility => "rate_utility",
            Kind::Geodesic => "geodesic",
            Kind::CoarseGrain => "coarse_grain",
            Kind::Capacity => "capacity",
            Kind::Legal => "legal",
        }
    }

    fn parse(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

/// Either an explicit list or `{start, stop, count, scale}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range(GridRange),
}

impl Grid {
    pub fn expand(&self) -> Result<Vec<f64>, String> {
        let r = match self {
            Grid::Values(v) if v.is_empty() => return Err("grid is empty".into()),
            Grid::Values(v) => return Ok(v.clone()),
            Grid::Range(r) => r,
        };
        if r.count == 0 {
            return Err("count must be at least 1".into());
        }
        if !r.start.is_finite() || !r.stop.is_finite() {
            return Err("start and stop must be finite".into());
        }
        if r.count == 1 {
            return Ok(vec![r.start]);
        }
        let n = (r.count - 1) as f64;
        match r.scale {
            Scale::Linear => Ok((0..r.count)
                .map(|i| match i {
                    0 => r.start,
                    i if i == r.count - 1 => r.stop,
                    i => r.start + (r.stop - r.start) * i as f64 / n,
                })
                .collect()),
            Scale::Log => {
                if !(r.start > 0.0 && r.stop > 0.0) {
                    return Err("log scale needs start > 0 and stop > 0".into());
                }
                let (a, b) = (r.start.ln(), r.stop.ln());
                Ok((0..r.count)
                    .map(|i| match i {
                        0 => r.start,
                        i if i == r.count - 1 => r.stop,
                        i => (a + (b - a) * i as f64 / n).exp(),
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDistribution {
    pub len: usize,
}

/// Explicit weights or a flat-Dirichlet draw `{"random": {"len": n}}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DistributionInput {
    Weights(Vec<f64>),
    Random { random: RandomDistribution },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVector {
    pub len: usize,
    #[serde(default)]
    pub low: f64,
    #[serde(default = "one")]
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VectorInput {
    Values(Vec<f64>),
    Random { random: RandomVector },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMatrix {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub low: f64,
    #[serde(default = "one")]
    pub high: f64,
}

/// Row-major rows or uniform draws `{"random": {"rows", "cols", "low", "high"}}`.
/// For kernels each random row is a flat-Dirichlet draw and the bounds are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Rows(Vec<Vec<f64>>),
    Random { random: RandomMatrix },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisutilityKind {
    Reciprocal,
    Exponential,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisutilityInput {
    pub kind: DisutilityKind,
    /// Linear only; defaults to `−ln min q`.
    pub d_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    E,
    M,
    Solution,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GibbsFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    prior: DistributionInput,
    utilities: VectorInput,
    beta: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateUtilityFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    source: DistributionInput,
    utilities: MatrixInput,
    mask: Option<Vec<Vec<bool>>>,
    beta: Option<Grid>,
    rate: Option<Grid>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeodesicFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    family: Family,
    start: Option<DistributionInput>,
    end: Option<DistributionInput>,
    prior: Option<DistributionInput>,
    utilities: Option<VectorInput>,
    t: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoarseGrainFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    source: DistributionInput,
    kernel: MatrixInput,
    f: Vec<usize>,
    g: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapacityFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    kernel: MatrixInput,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LegalFile {
    #[allow(dead_code)]
    kind: String,
    #[allow(dead_code)]
    schema: u64,
    prior: DistributionInput,
    face: Vec<usize>,
    utilities: Vec<f64>,
    disutility: DisutilityInput,
    inv_beta: Grid,
    protected: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub enum Prepared {
    Gibbs {
        prior: Distribution,
        utilities: Vec<f64>,
        betas: Vec<f64>,
    },
    RateUtility {
        problem: RateUtilityProblem,
        grid: CurveGrid,
        opts: SolverOptions,
    },
    Geodesic {
        family: Family,
        start: Distribution,
        end: Option<Distribution>,
        utilities: Option<Vec<f64>>,
        ts: Vec<f64>,
    },
    CoarseGrain {
        source: Distribution,
        kernel: StochasticKernel,
        graining: CoarseGraining,
    },
    Capacity {
        kernel: StochasticKernel,
        tol: f64,
    },
    Legal {
        scenario: RestrictionScenario,
        spec: DisutilitySpec,
        /// `d_max` was filled in from the prior.
        d_max_defaulted: bool,
        inv_betas: Vec<f64>,
    },
}

/// Options that change how a file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Overrides every solver tolerance in the file.
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: Kind,
    pub raw: Value,
    pub prepared: Prepared,
    /// Random draws were made from this seed.
    pub seed_used: Option<u64>,
}

/// Parses and validates scenario text, returning every problem found.
pub fn load(text: &str, opts: &LoadOptions) -> Result<Scenario, Vec<Issue>> {
    let raw: Value = serde_json::from_str(text).map_err(|e| {
        vec![Issue {
            path: String::new(),
            message: format!("not valid JSON: {e}"),
        }]
    })?;
    let kind = header(&raw)?;
    let mut ctx = Context::new(opts);
    let prepared = match kind {
        Kind::Gibbs => prepare_gibbs(typed(&raw)?, &mut ctx),
        Kind::RateUtility => prepare_rate_utility(typed(&raw)?, &mut ctx),
        Kind::Geodesic => prepare_geodesic(typed(&raw)?, &mut ctx),
        Kind::CoarseGrain => prepare_coarse_grain(typed(&raw)?, &mut ctx),
        Kind::Capacity => prepare_capacity(typed(&raw)?, &mut ctx),
        Kind::Legal => prepare_legal(typed(&raw)?, &mut ctx),
    };
    match prepared {
        Some(prepared) if ctx.issues.is_empty() => Ok(Scenario {
            kind,
            raw,
            prepared,
            seed_used: ctx.rng.is_some().then_some(ctx.seed),
        }),
        _ => Err(ctx.issues),
    }
}

fn header(raw: &Value) -> Result<Kind, Vec<Issue>> {
    let issue = |path: &str, message: String| {
        vec![Issue {
            path: path.into(),
            message,
        }]
    };
    let Some(obj) = raw.as_object() else {
        return Err(issue("", "scenario must be a JSON object".into()));
    };
    let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
    let kind = match obj.get("kind") {
        None => return Err(issue("kind", "missing field".into())),
        Some(Value::String(s)) => Kind::parse(s).ok_or_else(|| {
            issue(
                "kind",
                format!("unknown kind {s:?}; expected one of {}", names.join(", ")),
            )
        })?,
        Some(_) => return Err(issue("kind", "must be a string".into())),
    };
    match obj.get("schema") {
        None => Err(issue("schema", "missing field".into())),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => Ok(kind),
        Some(v) => Err(issue(
            "schema",
            format!("unsupported schema version {v}; this build reads version {SCHEMA_VERSION}"),
        )),
    }
}

fn typed<T: DeserializeOwned>(raw: &Value) -> Result<T, Vec<Issue>> {
    serde_path_to_error::deserialize(raw.clone()).map_err(|e| {
        let path = e.path().to_string();
        vec![Issue {
            path: if path == "." { String::new() } else { path },
            message: e.into_inner().to_string(),
        }]
    })
}

struct Context {
    issues: Vec<Issue>,
    seed: u64,
    rng: Option<ChaCha8Rng>,
    tol: Option<f64>,
}

impl Context {
    fn new(opts: &LoadOptions) -> Self {
        Self {
            issues: Vec::new(),
            seed: opts.seed.unwrap_or(0),
            rng: None,
            tol: opts.tol,
        }
    }

    fn fail(&mut self, path: impl Into<String>, message: impl fmt::Display) {
        self.issues.push(Issue {
            path: path.into(),
            message: message.to_string(),
        });
    }

    fn check<T, E: fmt::Display>(&mut self, path: &str, r: Result<T, E>) -> Option<T> {
        r.map_err(|e| self.fail(path, e)).ok()
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.rng
            .get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed))
    }

    fn dirichlet(&mut self, len: usize) -> Vec<f64> {
        let rng = self.rng();
        let w: Vec<f64> = (0..len)
            .map(|_| -rng.gen_range(f64::EPSILON..1.0).ln())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    fn distribution(&mut self, path: &str, input: &DistributionInput) -> Option<Distribution> {
        let weights = match input {
            DistributionInput::Weights(w) => w.clone(),
            DistributionInput::Random { random } => {
                if random.len == 0 {
                    self.fail(format!("{path}.random.len"), "must be at least 1");
                    return None;
                }
                self.dirichlet(random.len)
            }
        };
        self.check(path, Distribution::new(weights))
    }

    fn interior(
        &mut self,
        path: &str,
        input: &DistributionInput,
        role: &str,
    ) -> Option<Distribution> {
        let d = self.distribution(path, input)?;
        if !d.is_interior() {
            self.fail(
                path,
                format!("every weight must be positive ({role} needs full support)"),
            );
            return None;
        }
        Some(d)
    }

    fn bounds_ok(&mut self, path: &str, low: f64, high: f64) -> bool {
        if !(low.is_finite() && high.is_finite() && low < high) {
            self.fail(path, "random bounds need finite low < high");
            return false;
        }
        true
    }

    fn vector(&mut self, path: &str, input: &VectorInput) -> Option<Vec<f64>> {
        let v = match input {
            VectorInput::Values(v) => v.clone(),
            VectorInput::Random { random } => {
                if !self.bounds_ok(&format!("{path}.random"), random.low, random.high) {
                    return None;
                }
                let (lo, hi) = (random.low, random.high);
                let rng = self.rng();
                (0..random.len).map(|_| rng.gen_range(lo..hi)).collect()
            }
        };
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            self.fail(format!("{path}[{i}]"), "must be finite");
            return None;
        }
        Some(v)
    }

    fn matrix(
        &mut self,
        path: &str,
        input: &MatrixInput,
        stochastic: bool,
    ) -> Option<Vec<Vec<f64>>> {
        match input {
            MatrixInput::Rows(rows) => {
                if rows.is_empty() || rows[0].is_empty() {
                    self.fail(path, "matrix must be non-empty");
                    return None;
                }
                if let Some(i) = rows.iter().position(|r| r.len() != rows[0].len()) {
                    self.fail(
                        format!("{path}[{i}]"),
                        format!(
                            "row has {} entries, expected {}",
                            rows[i].len(),
                            rows[0].len()
                        ),
                    );
                    return None;
                }
                Some(rows.clone())
            }
            MatrixInput::Random { random } => {
                if random.rows == 0 || random.cols == 0 {
                    self.fail(format!("{path}.random"), "rows and cols must be at least 1");
                    return None;
                }
                if stochastic {
                    return Some(
                        (0..random.rows)
                            .map(|_| self.dirichlet(random.cols))
                            .collect(),
                    );
                }
                if !self.bounds_ok(&format!("{path}.random"), random.low, random.high) {
                    return None;
                }
                let (lo, hi) = (random.low, random.high);
                let rng = self.rng();
                Some(
                    (0..random.rows)
                        .map(|_| (0..random.cols).map(|_| rng.gen_range(lo..hi)).collect())
                        .collect(),
                )
            }
        }
    }

    fn kernel(&mut self, path: &str, input: &MatrixInput) -> Option<StochasticKernel> {
        let rows = self.matrix(path, input, true)?;
        self.check(path, StochasticKernel::from_rows(&rows))
    }

    fn grid(&mut self, path: &str, grid: &Grid) -> Option<Vec<f64>> {
        self.check(path, grid.expand())
    }

    /// Flags grid values violating `ok`, naming the offending entry.
    fn grid_values(
        &mut self,
        path: &str,
        values: &[f64],
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> bool {
        let mut fine = true;
        for (i, v) in values.iter().enumerate() {
            if !ok(*v) {
                self.fail(format!("{path}[{i}]"), format!("value {v} violates {rule}"));
                fine = false;
            }
        }
        fine
    }

    fn tolerance(&mut self, path: &str, file_tol: Option<f64>, default: f64) -> Option<f64> {
        let tol = self.tol.or(file_tol).unwrap_or(default);
        if !(tol > 0.0) || !tol.is_finite() {
            self.fail(path, format!("tolerance {tol} must be positive and finite"));
            return None;
        }
        Some(tol)
    }
}

fn prepare_gibbs(file: GibbsFile, ctx: &mut Context) -> Option<Prepared> {
    let prior = ctx.interior("prior", &file.prior, "the Gibbs prior");
    let utilities = ctx.vector("utilities", &file.utilities);
    let betas = ctx.grid("beta", &file.beta);
    if let Some(b) = &betas {
        ctx.grid_values(
            "beta",
            b,
            |v| v >= 0.0 && v.is_finite(),
            "beta >= 0 (finite)",
        );
    }
    let (prior, utilities, betas) = (prior?, utilities?, betas?);
    if utilities.len() != prior.len() {
        ctx.fail(
            "utilities",
            format!(
                "has {} entries but the prior has {}",
                utilities.len(),
                prior.len()
            ),
        );
    }
    Some(Prepared::Gibbs {
        prior,
        utilities,
        betas,
    })
}

fn ascending(ctx: &mut Context, path: &str, values: &[f64]) {
    if let Some(i) = values.windows(2).position(|w| !(w[0] <= w[1])) {
        ctx.fail(
            format!("{path}[{}]", i + 1),
            "grid must be sorted ascending",
        );
    }
}

fn prepare_rate_utility(file: RateUtilityFile, ctx: &mut Context) -> Option<Prepared> {
    let source = ctx.interior("source", &file.source, "the source");
    let utilities = ctx
        .matrix("utilities", &file.utilities, false)
        .and_then(|rows| ctx.check("utilities", UtilityMatrix::from_rows(&rows)));
    let mask = match &file.mask {
        None => Some(None),
        Some(rows) => ctx.check("mask", PolicyMatrix::from_rows(rows)).map(Some),
    };
    let grid = match (&file.beta, &file.rate) {
        (Some(g), None) => ctx.grid("beta", g).and_then(|v| {
            let ok = ctx.grid_values(
                "beta",
                &v,
                |b| b >= 0.0 && b.is_finite(),
                "beta >= 0 (finite)",
            );
            ascending(ctx, "beta", &v);
            ok.then_some(CurveGrid::Beta(v))
        }),
        (None, Some(g)) => ctx.grid("rate", g).and_then(|v| {
            let ok = ctx.grid_values(
                "rate",
                &v,
                |r| r >= 0.0 && r.is_finite(),
                "rate >= 0 (finite)",
            );
            ascending(ctx, "rate", &v);
            ok.then_some(CurveGrid::Rate(v))
        }),
        _ => {
            ctx.fail("", "exactly one of \"beta\" and \"rate\" must be given");
            None
        }
    };
    let tol = ctx.tolerance("tol", file.tol, SolverOptions::default().tol);
    let max_iter = file.max_iter.unwrap_or(SolverOptions::default().max_iter);
    if max_iter == 0 {
        ctx.fail("max_iter", "must be at least 1");
    }
    let problem = ctx.check(
        "utilities",
        RateUtilityProblem::new(source?, utilities?, mask?),
    )?;
    Some(Prepared::RateUtility {
        problem,
        grid: grid?,
        opts: SolverOptions {
            tol: tol?,
            max_iter,
        },
    })
}

fn prepare_geodesic(file: GeodesicFile, ctx: &mut Context) -> Option<Prepared> {
    let ts = ctx.grid("t", &file.t);
    if let Some(ts) = &ts {
        ctx.grid_values("t", ts, f64::is_finite, "t finite");
    }
    let forbid = |ctx: &mut Context, name: &str, present: bool| {
        if present {
            ctx.fail(name, format!("not used by the {:?} family", file.family));
        }
    };
    match file.family {
        Family::E | Family::M => {
            forbid(ctx, "prior", file.prior.is_some());
            forbid(ctx, "utilities", file.utilities.is_some());
            let endpoint = |ctx: &mut Context, name: &str, input: &Option<DistributionInput>| {
                let input = input.as_ref().or_else(|| {
                    ctx.fail(name, "missing field");
                    None
                })?;
                if file.family == Family::E {
                    ctx.interior(name, input, "an e-geodesic endpoint")
                } else {
                    ctx.distribution(name, input)
                }
            };
            let start = endpoint(ctx, "start", &file.start);
            let end = endpoint(ctx, "end", &file.end);
            let (start, end, ts) = (start?, end?, ts?);
            if start.len() != end.len() {
                ctx.fail(
                    "end",
                    format!("has {} outcomes but start has {}", end.len(), start.len()),
                );
            }
            if file.family == Family::M {
                ctx.grid_values(
                    "t",
                    &ts,
                    |t| (0.0..=1.0).contains(&t),
                    "0 <= t <= 1 on an m-geodesic",
                );
            }
            Some(Prepared::Geodesic {
                family: file.family,
                start,
                end: Some(end),
                utilities: None,
                ts,
            })
        }
        Family::Solution => {
            forbid(ctx, "start", file.start.is_some());
            forbid(ctx, "end", file.end.is_some());
            let prior = match &file.prior {
                Some(p) => ctx.interior("prior", p, "the Gibbs prior"),
                None => {
                    ctx.fail("prior", "missing field");
                    None
                }
            };
            let utilities = match &file.utilities {
                Some(u) => ctx.vector("utilities", u),
                None => {
                    ctx.fail("utilities", "missing field");
                    None
                }
            };
            let (prior, utilities, ts) = (prior?, utilities?, ts?);
            if utilities.len() != prior.len() {
                ctx.fail(
                    "utilities",
                    format!(
                        "has {} entries but the prior has {}",
                        utilities.len(),
                        prior.len()
                    ),
                );
            }
            Some(Prepared::Geodesic {
                family: Family::Solution,
                start: prior,
                end: None,
                utilities: Some(utilities),
                ts,
            })
        }
    }
}

fn prepare_coarse_grain(file: CoarseGrainFile, ctx: &mut Context) -> Option<Prepared> {
    let source = ctx.distribution("source", &file.source);
    let kernel = ctx.kernel("kernel", &file.kernel);
    let f = ctx.check("f", IndexMap::new(file.f.clone()));
    let g = ctx.check("g", IndexMap::new(file.g.clone()));
    let (source, kernel, f, g) = (source?, kernel?, f?, g?);
    if kernel.rows() != source.len() {
        ctx.fail(
            "kernel",
            format!(
                "has {} rows but the source has {} outcomes",
                kernel.rows(),
                source.len()
            ),
        );
    }
    if f.len() != kernel.rows() {
        ctx.fail(
            "f",
            format!(
                "maps {} states but the kernel has {} rows",
                f.len(),
                kernel.rows()
            ),
        );
    }
    if g.len() != kernel.cols() {
        ctx.fail(
            "g",
            format!(
                "maps {} actions but the kernel has {} columns",
                g.len(),
                kernel.cols()
            ),
        );
    }
    Some(Prepared::CoarseGrain {
        source,
        kernel,
        graining: CoarseGraining::new(f, g),
    })
}

fn prepare_capacity(file: CapacityFile, ctx: &mut Context) -> Option<Prepared> {
    let kernel = ctx.kernel("kernel", &file.kernel);
    let tol = ctx.tolerance("tol", file.tol, DEFAULT_CAPACITY_TOL);
    Some(Prepared::Capacity {
        kernel: kernel?,
        tol: tol?,
    })
}

fn prepare_legal(file: LegalFile, ctx: &mut Context) -> Option<Prepared> {
    let prior = ctx.interior("prior", &file.prior, "the prior on the ought set");
    let inv_betas = ctx.grid("inv_beta", &file.inv_beta);
    if let Some(v) = &inv_betas {
        ctx.grid_values(
            "inv_beta",
            v,
            |t| t >= 0.0 && t.is_finite(),
            "1/beta >= 0 (finite)",
        );
        if let Some(i) = v.windows(2).position(|w| !(w[0] < w[1])) {
            ctx.fail(
                format!("inv_beta[{}]", i + 1),
                "grid must be strictly ascending",
            );
        }
    }
    let prior = prior?;
    let mut d_max_defaulted = false;
    let spec = match (file.disutility.kind, file.disutility.d_max) {
        (DisutilityKind::Linear, Some(d_max)) => {
            ctx.check("disutility.d_max", DisutilitySpec::linear(d_max))
        }
        (DisutilityKind::Linear, None) => {
            d_max_defaulted = true;
            let q_min = prior
                .weights()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            ctx.check("disutility.d_max", DisutilitySpec::linear(-q_min.ln()))
        }
        (_, Some(_)) => {
            ctx.fail("disutility.d_max", "only the linear disutility takes d_max");
            None
        }
        (DisutilityKind::Reciprocal, None) => Some(DisutilitySpec::Reciprocal),
        (DisutilityKind::Exponential, None) => Some(DisutilitySpec::Exponential),
    };
    let scenario = ctx.check(
        "face",
        RestrictionScenario::new(
            prior,
            file.face.clone(),
            file.utilities.clone(),
            1.0,
            file.protected.as_deref(),
        ),
    );
    Some(Prepared::Legal {
        scenario: scenario?,
        spec: spec?,
        d_max_defaulted,
        inv_betas: inv_betas?,
    })
}
