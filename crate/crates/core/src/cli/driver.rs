//! Evaluates a validated scenario into a [`Table`].

use rayon::prelude::*;
use serde_json::{json, Value};

use super::output::{json_number, Table};
use super::scenario::{Family, Prepared, Scenario};
use crate::deontic::{
    critical_beta_scan, face_divergence_bounds, feasibility_onset, objective_is_convex,
    DisutilitySpec, RestrictionScenario,
};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_policy, solution_geodesic, GibbsProblem};
use crate::kernel::{
    channel_capacity, coarse_grain_kernel, mutual_information, semidirect_product, CoarseGraining,
    StochasticKernel,
};
use crate::rate_utility::{
    endpoints, rate_utility_curve, CurveGrid, RateUtilityPoint, RateUtilityProblem, SolverOptions,
};
use crate::simplex::{e_geodesic, entropy, kl_divergence, m_geodesic, Distribution};

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    /// Grid points whose solver did not converge; their rows hold `NaN`.
    pub failed_points: usize,
    pub warnings: Vec<String>,
}

pub fn run(scenario: &Scenario, tol_override: Option<f64>) -> Result<Report> {
    let mut report = match &scenario.prepared {
        Prepared::Gibbs {
            prior,
            utilities,
            betas,
        } => gibbs(prior, utilities, betas)?,
        Prepared::RateUtility {
            problem,
            grid,
            opts,
        } => rate_utility(problem, grid, opts)?,
        Prepared::Geodesic {
            family,
            start,
            end,
            utilities,
            ts,
        } => geodesic(*family, start, end.as_ref(), utilities.as_deref(), ts)?,
        Prepared::CoarseGrain {
            source,
            kernel,
            graining,
        } => coarse_grain(source, kernel, graining)?,
        Prepared::Capacity { kernel, tol } => capacity(kernel, *tol)?,
        Prepared::Legal {
            scenario,
            spec,
            d_max_defaulted,
            inv_betas,
        } => legal(scenario, *spec, *d_max_defaulted, inv_betas)?,
    };
    let table = &mut report.table;
    let mut head = serde_json::Map::new();
    head.insert("kind".into(), scenario.kind.name().into());
    head.insert("scenario".into(), scenario.raw.clone());
    if let Some(tol) = tol_override {
        head.insert("tol_override".into(), json_number(tol));
    }
    if let Some(seed) = scenario.seed_used {
        head.insert("seed".into(), seed.into());
    }
    head.append(&mut table.metadata);
    head.insert("warnings".into(), json!(report.warnings));
    table.metadata = head;
    Ok(report)
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

fn push_weights(table: &mut Table, prefix: &str, dists: &[Option<Vec<f64>>], n: usize) {
    for (name, i) in indexed(prefix, n).zip(0..) {
        table.push(
            name,
            dists
                .iter()
                .map(|d| d.as_ref().map_or(f64::NAN, |w| w[i]))
                .collect(),
        );
    }
}

fn gibbs(prior: &Distribution, utilities: &[f64], betas: &[f64]) -> Result<Report> {
    let solutions = betas
        .par_iter()
        .map(|&b| GibbsProblem::new(utilities.to_vec(), prior.clone(), b).map(|p| gibbs_policy(&p)))
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&crate::gibbs::GibbsSolution) -> f64| solutions.iter().map(f).collect();
    let mut table = Table::new();
    table.push("beta", betas.to_vec());
    table.push("lnZ", col(|s| s.log_partition));
    table.push("free_energy", col(|s| s.free_energy));
    table.push("expected_utility", col(|s| s.expected_utility));
    table.push("variance", col(|s| s.utility_variance));
    table.push("kl_cost", col(|s| s.kl_cost));
    let policies: Vec<Option<Vec<f64>>> = solutions
        .iter()
        .map(|s| Some(s.policy.weights().to_vec()))
        .collect();
    push_weights(&mut table, "policy", &policies, prior.len());
    table.meta("free_energy_at_beta_0", "limit E_q[U]");
    Ok(Report {
        table,
        failed_points: 0,
        warnings: Vec::new(),
    })
}

fn rate_utility(
    problem: &RateUtilityProblem,
    grid: &CurveGrid,
    opts: &SolverOptions,
) -> Result<Report> {
    let results = rate_utility_curve(problem, grid, opts)?;
    let mut warnings = Vec::new();
    let mut failed = 0;
    let mut points: Vec<Option<RateUtilityPoint>> = Vec::with_capacity(results.len());
    let grid_values = match grid {
        CurveGrid::Beta(v) | CurveGrid::Rate(v) => v,
    };
    for (r, g) in results.into_iter().zip(grid_values) {
        match r {
            Ok(p) => points.push(Some(p)),
            Err(e @ Error::NotConverged { .. }) => {
                failed += 1;
                warnings.push(format!("grid value {g}: {e}"));
                points.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let get = |f: fn(&RateUtilityPoint) -> f64| -> Vec<f64> {
        points
            .iter()
            .map(|p| p.as_ref().map_or(f64::NAN, f))
            .collect()
    };
    let betas = get(|p| p.beta);
    let rates = get(|p| p.rate);
    let utils = get(|p| p.utility);
    let n = points.len();
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dr = rates[b] - rates[a];
            if a == b || !(dr.abs() > 0.0) {
                f64::NAN
            } else {
                (utils[b] - utils[a]) / dr
            }
        })
        .collect();
    let slope_check: Vec<f64> = slope
        .iter()
        .zip(&betas)
        .map(|(s, b)| {
            if b.is_finite() && *b > 0.0 {
                s * b - 1.0
            } else {
                f64::NAN
            }
        })
        .collect();

    let mut table = Table::new();
    table.push("beta", betas);
    table.push("R", rates);
    table.push("U_bar", utils);
    table.push("slope", slope);
    table.push("slope_check", slope_check);
    table.push("residual", get(|p| p.residual));
    table.push("iterations", get(|p| p.iterations as f64));

    let ends = endpoints(problem)?;
    let ok: Vec<&RateUtilityPoint> = points.iter().flatten().collect();
    table.meta(
        "endpoints",
        json!({
            "zero_rate_column": ends.zero_rate_column,
            "utility_at_zero": ends.utility_at_zero.map(json_number),
            "argmax_columns": ends.argmax_columns,
            "utility_at_max": json_number(ends.utility_at_max),
            "rate_max": json_number(ends.rate_max),
            "tie_break": "lowest column index",
        }),
    );
    table.meta(
        "solver",
        json!({
            "tol": json_number(opts.tol),
            "max_iter": opts.max_iter,
            "start": "uniform marginal over admissible columns",
            "damping_events": ok.iter().map(|p| p.damping_events).sum::<usize>(),
            "polished_points": ok.iter().filter(|p| p.polished).count(),
            "max_residual": json_number(ok.iter().map(|p| p.residual).fold(0.0, f64::max)),
            "failed_points": failed,
        }),
    );
    table.meta(
        "slope_check",
        "finite-difference slope dU/dR times beta minus 1 (centred inside the grid)",
    );
    if problem.support_mask().is_some() {
        table.meta("support_mask", true);
    }
    if ok.iter().any(|p| p.beta.is_infinite()) {
        warnings.push(
            "rates at or above R_max map to the deterministic argmax kernel (beta = inf)".into(),
        );
    }
    Ok(Report {
        table,
        failed_points: failed,
        warnings,
    })
}

fn geodesic(
    family: Family,
    start: &Distribution,
    end: Option<&Distribution>,
    utilities: Option<&[f64]>,
    ts: &[f64],
) -> Result<Report> {
    let path: Vec<Distribution> = match family {
        Family::E => ts
            .iter()
            .map(|&t| e_geodesic(start, end.expect("validated"), t))
            .collect::<Result<_>>()?,
        Family::M => ts
            .iter()
            .map(|&t| m_geodesic(start, end.expect("validated"), t))
            .collect::<Result<_>>()?,
        Family::Solution => solution_geodesic(utilities.expect("validated"), start, ts)?,
    };
    let mut table = Table::new();
    table.push("t", ts.to_vec());
    table.push("entropy", path.iter().map(entropy).collect());
    table.push(
        "kl_from_start",
        path.iter()
            .map(|p| kl_divergence(p, start).map(|d| d.to_f64()))
            .collect::<Result<_>>()?,
    );
    if let Some(u) = utilities {
        table.push(
            "expected_utility",
            path.iter()
                .map(|p| p.expectation(u))
                .collect::<Result<_>>()?,
        );
    }
    let weights: Vec<Option<Vec<f64>>> = path.iter().map(|p| Some(p.weights().to_vec())).collect();
    push_weights(&mut table, "p", &weights, start.len());
    table.meta(
        "family",
        match family {
            Family::E => "e",
            Family::M => "m",
            Family::Solution => "solution",
        },
    );
    Ok(Report {
        table,
        failed_points: 0,
        warnings: Vec::new(),
    })
}

fn coarse_grain(
    source: &Distribution,
    kernel: &StochasticKernel,
    cg: &CoarseGraining,
) -> Result<Report> {
    let coarse = coarse_grain_kernel(kernel, source, cg)?;
    let block_mass = cg.f.push(source)?;
    let fine_joint = semidirect_product(source, kernel)?;
    let coarse_joint = semidirect_product(&block_mass, &coarse)?;
    let factorization = fine_joint
        .push_forward(&cg.f, &cg.g)?
        .max_abs_diff(&coarse_joint)?;
    let (before, after) = (
        mutual_information(&fine_joint),
        mutual_information(&coarse_joint),
    );

    let mut table = Table::new();
    table.push("block", (0..coarse.rows()).map(|i| i as f64).collect());
    table.push("mass", block_mass.weights().to_vec());
    for (name, j) in indexed("k", coarse.cols()).zip(0..) {
        table.push(name, (0..coarse.rows()).map(|i| coarse.get(i, j)).collect());
    }
    table.meta(
        "mutual_information",
        json!({
            "fine": json_number(before),
            "coarse": json_number(after),
            "data_processing_holds": before >= after - 1e-12,
        }),
    );
    table.meta("factorization_residual", json_number(factorization));
    Ok(Report {
        table,
        failed_points: 0,
        warnings: Vec::new(),
    })
}

fn capacity(kernel: &StochasticKernel, tol: f64) -> Result<Report> {
    let c = channel_capacity(kernel, tol)?;
    let mut table = Table::new();
    table.push("capacity", vec![c.capacity]);
    table.push("upper_bound", vec![c.upper_bound]);
    table.push("iterations", vec![c.iterations as f64]);
    for (name, i) in indexed("input", c.input.len()).zip(0..) {
        table.push(name, vec![c.input.get(i)]);
    }
    table.meta("tol", json_number(tol));
    table.meta("stopping_rule", "bracket width <= tol * max(1, I)");
    Ok(Report {
        table,
        failed_points: 0,
        warnings: Vec::new(),
    })
}

fn legal(
    scenario: &RestrictionScenario,
    spec: DisutilitySpec,
    d_max_defaulted: bool,
    inv_betas: &[f64],
) -> Result<Report> {
    let betas: Vec<f64> = inv_betas
        .iter()
        .map(|&t| if t == 0.0 { f64::INFINITY } else { 1.0 / t })
        .collect();
    let scan = critical_beta_scan(scenario, spec, &betas)?;
    let mut warnings = Vec::new();
    let convex = objective_is_convex(scenario, spec)?;
    if !convex {
        warnings.push(
            "objective failed the midpoint convexity test; vertex winners may not be global maxima"
                .into(),
        );
    }

    let mut table = Table::new();
    table.push("inv_beta", inv_betas.to_vec());
    for (k, &j) in scenario.face().iter().enumerate() {
        table.push(
            format!("F_vertex_{j}"),
            scan.rows.iter().map(|r| r.vertex_objectives[k]).collect(),
        );
    }
    table.push(
        "winner",
        scan.rows.iter().map(|r| r.winner as f64).collect(),
    );
    table.push(
        "feasible",
        scan.rows
            .iter()
            .map(|r| if r.feasible { 1.0 } else { 0.0 })
            .collect(),
    );
    table.push(
        "switch",
        (0..scan.rows.len())
            .map(|i| {
                if i > 0 && scan.rows[i].winner != scan.rows[i - 1].winner {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    );

    let (d_min, d_star) = face_divergence_bounds(scenario);
    let onset = feasibility_onset(scenario, spec)?;
    table.meta(
        "disutility",
        match spec {
            DisutilitySpec::Reciprocal => json!({"kind": "reciprocal"}),
            DisutilitySpec::Exponential => json!({"kind": "exponential"}),
            DisutilitySpec::Linear { d_max } => json!({
                "kind": "linear",
                "d_max": json_number(d_max),
                "d_max_source": if d_max_defaulted { "-ln min q (default)" } else { "scenario" },
            }),
        },
    );
    table.meta(
        "face_divergence",
        json!({"d_min": json_number(d_min), "d_star": json_number(d_star)}),
    );
    table.meta(
        "feasibility_onset",
        match onset {
            Some(b) => json!({"beta": json_number(b), "inv_beta": json_number(1.0 / b)}),
            None => Value::Null,
        },
    );
    table.meta(
        "switches",
        Value::Array(
            scan.switches
                .iter()
                .map(|s| {
                    json!({
                        "inv_beta": json_number(s.inverse_temperature),
                        "beta": json_number(s.beta),
                        "from": s.from,
                        "to": s.to,
                        "bracket_inv_beta": [
                            json_number(if s.bracket.0.is_infinite() { 0.0 } else { 1.0 / s.bracket.0 }),
                            json_number(1.0 / s.bracket.1),
                        ],
                    })
                })
                .collect(),
        ),
    );
    table.meta("objective_convex", convex);
    table.meta(
        "search",
        "vertex objectives u_j - D(-ln q_j)/beta; ties go to the lower face position",
    );
    table.meta(
        "net_benefit_slack",
        json_number(crate::deontic::NET_BENEFIT_SLACK),
    );
    let infeasible = scan.rows.iter().filter(|r| !r.feasible).count();
    if infeasible > 0 {
        table.meta("no_solution_rows", infeasible);
    }
    Ok(Report {
        table,
        failed_points: 0,
        warnings,
    })
}
