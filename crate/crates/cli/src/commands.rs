//! Command implementations and their exit-code semantics:
//! 0 success, 1 configuration or infeasible target, 2 solver failure,
//! 3 verification failure.

use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;

use qmaxent_core::{
    check_energy_entropy_relation, compute_m0, geometric_grid, inequality_suite, match_energy,
    solve_two_moment, temperature_scan, tolerances, varsigma_sum_across_cutoffs, ConstraintSet,
    DensityOperator, EnergyTarget, MatchError, OperatorError, RungRecord, SolveError,
    SpectralGrid, TemperatureScan,
};

use crate::config::{OutputFormat, RunConfig};
use crate::output::{fmt, write_json, write_table};

pub enum CommandError {
    /// Invalid configuration or infeasible target (exit 1).
    Config(anyhow::Error),
    /// The solver failed to produce a state (exit 2).
    Solver(anyhow::Error),
    /// Verification verdicts failed (exit 3).
    Verification(Vec<String>),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 1,
            CommandError::Solver(_) => 2,
            CommandError::Verification(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CommandError::Config(e) => format!("configuration error: {e:#}"),
            CommandError::Solver(e) => format!("solver failure: {e:#}"),
            CommandError::Verification(v) => {
                format!("verification failed:\n  {}", v.join("\n  "))
            }
        }
    }
}

type CommandResult = Result<(), CommandError>;

fn config_err(e: impl Into<anyhow::Error>) -> CommandError {
    CommandError::Config(e.into())
}

fn solver_err(e: impl Into<anyhow::Error>) -> CommandError {
    CommandError::Solver(e.into())
}

/// Precondition violations map to exit 1, runtime failures to exit 2.
fn classify_solve(e: SolveError) -> CommandError {
    match &e {
        SolveError::NonPositiveDensity { .. }
        | SolveError::NonPositiveTemperature(_)
        | SolveError::NonPositiveEpsilon(_)
        | SolveError::BadLadder
        | SolveError::BadDamping(_) => config_err(e),
        SolveError::Operator(OperatorError::CirculationNotQuantized { .. }) => config_err(e),
        _ => solver_err(e),
    }
}

fn classify_match(e: MatchError) -> CommandError {
    match &e {
        MatchError::Infeasible { .. } | MatchError::NonPositiveDensity(_) => config_err(e),
        MatchError::Operator(OperatorError::CirculationNotQuantized { .. }) => config_err(e),
        MatchError::Solve(_) => match e {
            MatchError::Solve(inner) => classify_solve(inner),
            _ => unreachable!(),
        },
        _ => solver_err(e),
    }
}

#[derive(Serialize)]
struct ToleranceSet {
    tol_fixed_point: f64,
    tol_constraint: f64,
    tol_energy: f64,
    tol_hermitian: f64,
    tol_psd_rel: f64,
    circulation_tol: f64,
    degeneracy_threshold: f64,
    pure_state_rel: f64,
    relation_floor_rel: f64,
    entropy_floor: f64,
}

impl ToleranceSet {
    fn from_config(config: &RunConfig) -> Self {
        Self {
            tol_fixed_point: config.solver.tol_fixed_point,
            tol_constraint: config.solver.tol_constraint,
            tol_energy: config.solver.tol_energy,
            tol_hermitian: tolerances::TOL_HERMITIAN,
            tol_psd_rel: tolerances::TOL_PSD_REL,
            circulation_tol: tolerances::CIRCULATION_TOL,
            degeneracy_threshold: tolerances::DEGENERACY_THRESHOLD,
            pure_state_rel: tolerances::PURE_STATE_REL,
            relation_floor_rel: tolerances::RELATION_FLOOR_REL,
            entropy_floor: tolerances::ENTROPY_FLOOR,
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    seed: u64,
    grid_k: usize,
    grid_n: usize,
    tolerances: ToleranceSet,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdicts: Option<Vec<VerdictRow>>,
}

#[derive(Serialize, Clone)]
struct VerdictRow {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Residuals {
    fixed_point_l2: f64,
    constraint_l2: f64,
}

#[derive(Serialize)]
struct SolutionReport {
    pure_state: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    m0: f64,
    energy: f64,
    entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    free_energy: Option<f64>,
    trace: f64,
    eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<Residuals>,
    rungs: Vec<RungRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bisection_evaluations: Option<usize>,
}

fn write_meta(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    grid: &SpectralGrid,
    verdicts: Option<Vec<VerdictRow>>,
) -> Result<(), CommandError> {
    let meta = Meta {
        command,
        seed: config.lab.seed,
        grid_k: grid.k_max(),
        grid_n: grid.n_points(),
        tolerances: ToleranceSet::from_config(config),
        config,
        verdicts,
    };
    write_json(dir, "meta.json", &meta).map_err(config_err)
}

fn write_moments(
    dir: &Path,
    config: &RunConfig,
    grid: &SpectralGrid,
    state: &DensityOperator,
) -> Result<(), CommandError> {
    let m = state.moments();
    let rows: Vec<Vec<f64>> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            vec![
                x,
                m.density.values()[j].re,
                m.current.values()[j].re,
                m.kinetic.values()[j].re,
                m.total_energy.values()[j].re,
            ]
        })
        .collect();
    write_table(
        dir,
        "moments",
        config.output.format,
        &["x", "n", "nu", "k", "w"],
        &rows,
    )
    .map_err(config_err)
}

/// `solve`: dispatch on the target kind, write `solution.json`,
/// `moments.csv` and `meta.json`.
pub fn cmd_solve(config: &RunConfig, dir: &Path) -> CommandResult {
    solve_impl(config, dir, "solve", false)
}

/// `match-energy`: like `solve` but requires a global energy target.
pub fn cmd_match_energy(config: &RunConfig, dir: &Path) -> CommandResult {
    solve_impl(config, dir, "match-energy", true)
}

fn solve_impl(config: &RunConfig, dir: &Path, command: &str, require_energy: bool) -> CommandResult {
    let grid = config.build_grid().map_err(config_err)?;
    let n0 = config.constraints.n0.build(&grid).map_err(config_err)?;
    let u0 = config.constraints.u0.build(&grid).map_err(config_err)?;
    let opts = config.solver.to_options();

    let target_energy = config.constraints.target.energy;
    if require_energy && target_energy.is_none() {
        return Err(config_err(anyhow!(
            "the match-energy command requires constraints.target.energy"
        )));
    }
    let constraints = ConstraintSet {
        n0: n0.clone(),
        u0: u0.clone(),
        target: match target_energy {
            Some(e0) => EnergyTarget::GlobalEnergy(e0),
            None => EnergyTarget::Temperature(
                config
                    .constraints
                    .target
                    .temperature
                    .expect("validated: temperature set"),
            ),
        },
    };
    constraints.validate(&grid).map_err(classify_match)?;
    let m0 = compute_m0(&grid, &n0, &u0).map_err(classify_match)?;

    let (report, state) = if let Some(e0) = target_energy {
        let outcome = match_energy(
            &grid,
            &n0,
            &u0,
            e0,
            None,
            config.solver.tol_energy,
            &opts,
        )
        .map_err(classify_match)?;
        let free_energy = outcome.temperature.map(|t| outcome.state.free_energy(t));
        let report = SolutionReport {
            pure_state: outcome.pure_state,
            temperature: outcome.temperature,
            m0,
            energy: outcome.state.energy(),
            entropy: outcome.state.entropy(),
            free_energy,
            trace: outcome.state.trace(),
            eigenvalues: outcome.state.eigenvalues().to_vec(),
            potential: None,
            residuals: outcome.report.as_ref().map(|r| Residuals {
                fixed_point_l2: r.final_fixed_point_residual_l2,
                constraint_l2: r.final_constraint_residual_l2,
            }),
            rungs: outcome.report.map(|r| r.rungs).unwrap_or_default(),
            bisection_evaluations: Some(outcome.evaluations),
        };
        (report, outcome.state)
    } else {
        let t = config
            .constraints
            .target
            .temperature
            .expect("validated: temperature set");
        let sol = solve_two_moment(&grid, &n0, &u0, t, &opts).map_err(classify_match)?;
        let report = SolutionReport {
            pure_state: false,
            temperature: Some(t),
            m0,
            energy: sol.state.energy(),
            entropy: sol.state.entropy(),
            free_energy: Some(sol.state.free_energy(t)),
            trace: sol.state.trace(),
            eigenvalues: sol.state.eigenvalues().to_vec(),
            potential: Some(sol.potential.real_values()),
            residuals: Some(Residuals {
                fixed_point_l2: sol.report.final_fixed_point_residual_l2,
                constraint_l2: sol.report.final_constraint_residual_l2,
            }),
            rungs: sol.report.rungs.clone(),
            bisection_evaluations: None,
        };
        (report, sol.state)
    };
    write_json(dir, "solution.json", &report).map_err(config_err)?;
    write_moments(dir, config, &grid, &state)?;
    write_meta(dir, command, config, &grid, None)
}

/// `scan`: temperature scan only; writes `scan.csv` and `meta.json`.
pub fn cmd_scan(config: &RunConfig, dir: &Path) -> CommandResult {
    let grid = config.build_grid().map_err(config_err)?;
    let n0 = config.constraints.n0.build(&grid).map_err(config_err)?;
    let u0 = config.constraints.u0.build(&grid).map_err(config_err)?;
    let opts = config.solver.to_options();
    let t_grid = geometric_grid(config.lab.t_min, config.lab.t_max, config.lab.points);
    let scan = temperature_scan(&grid, &n0, &u0, &t_grid, &opts)
        .map_err(|e| config_err(anyhow!(e.to_string())))?;
    write_scan(dir, config, &scan)?;
    write_meta(dir, "scan", config, &grid, None)?;
    if let Some(bad) = scan.records.iter().find(|r| r.error.is_some()) {
        return Err(solver_err(anyhow!(
            "scan solve failed at T = {}: {}",
            bad.temperature,
            bad.error.clone().unwrap_or_default()
        )));
    }
    Ok(())
}

fn write_scan(dir: &Path, config: &RunConfig, scan: &TemperatureScan) -> Result<(), CommandError> {
    let rows: Vec<Vec<f64>> = scan
        .records
        .iter()
        .map(|r| vec![r.temperature, r.energy, r.entropy, r.free_energy, r.potential_norm_l2])
        .collect();
    write_table(
        dir,
        "scan",
        config.output.format,
        &["T", "E", "S", "F", "normA"],
        &rows,
    )
    .map_err(config_err)
}

/// `verify`: scan + integral relation + randomized inequality suites, with
/// tolerance-slack verdicts recorded in `meta.json`; exit 3 on any failure.
pub fn cmd_verify(config: &RunConfig, dir: &Path) -> CommandResult {
    let grid = config.build_grid().map_err(config_err)?;
    let n0 = config.constraints.n0.build(&grid).map_err(config_err)?;
    let u0 = config.constraints.u0.build(&grid).map_err(config_err)?;
    let opts = config.solver.to_options();
    let t_grid = geometric_grid(config.lab.t_min, config.lab.t_max, config.lab.points);
    let scan = temperature_scan(&grid, &n0, &u0, &t_grid, &opts)
        .map_err(|e| config_err(anyhow!(e.to_string())))?;
    write_scan(dir, config, &scan)?;
    let mut verdicts = Vec::new();

    if !scan.all_converged() {
        verdicts.push(VerdictRow {
            name: "scan_converged".into(),
            pass: false,
            detail: "inner solve failures in the scan".into(),
        });
    }

    // Monotonicity with a slack 1000x the fixed-point tolerance: the strict
    // increase is attested only above solver noise; violations beyond the
    // slack fail the verdict.
    let e_max = scan
        .records
        .iter()
        .map(|r| r.energy.abs())
        .fold(0.0, f64::max);
    let noise = 1e3 * config.solver.tol_fixed_point * (1.0 + e_max);
    let mut worst_e: f64 = f64::INFINITY;
    let mut worst_s: f64 = f64::NEG_INFINITY;
    for w in scan.records.windows(2) {
        worst_e = worst_e.min(w[1].energy - w[0].energy);
        worst_s = worst_s.max(w[1].entropy - w[0].entropy);
    }
    verdicts.push(VerdictRow {
        name: "energy_nondecreasing".into(),
        pass: worst_e > -noise,
        detail: format!("min secant {} against slack -{}", fmt(worst_e), fmt(noise)),
    });
    verdicts.push(VerdictRow {
        name: "entropy_nonincreasing".into(),
        pass: worst_s < noise,
        detail: format!("max secant {} against slack {}", fmt(worst_s), fmt(noise)),
    });

    let relation = check_energy_entropy_relation(&scan)
        .map_err(|e| config_err(anyhow!(e.to_string())))?;
    let rows: Vec<Vec<f64>> = relation
        .pairs
        .iter()
        .map(|p| vec![p.t1, p.t2, p.lhs, p.rhs, p.defect])
        .collect();
    write_table(
        dir,
        "relation",
        config.output.format,
        &["T1", "T2", "lhs", "rhs", "defect"],
        &rows,
    )
    .map_err(config_err)?;
    const RELATION_LIMIT: f64 = 5e-3;
    verdicts.push(VerdictRow {
        name: "energy_entropy_relation".into(),
        pass: relation.max_normalized_defect <= RELATION_LIMIT,
        detail: format!(
            "max normalized defect {} over {} pairs ({} excluded below floor {})",
            fmt(relation.max_normalized_defect),
            relation.included_pairs,
            relation.excluded_pairs,
            fmt(relation.floor)
        ),
    });

    // Randomized inequality suite at K and 2K.
    let k = grid.k_max();
    let at_k = inequality_suite(k, config.lab.seed, config.lab.trials);
    let at_2k = inequality_suite(2 * k, config.lab.seed, config.lab.trials);
    let mut ineq_rows = Vec::new();
    for (r1, r2) in at_k.rows.iter().zip(&at_2k.rows) {
        let ratio = r1.max_ratio / r2.max_ratio;
        let pass = (0.5..=2.0).contains(&ratio);
        ineq_rows.push((r1.name.clone(), r1.max_ratio, r2.max_ratio, pass));
        verdicts.push(VerdictRow {
            name: format!("inequality_{}", r1.name),
            pass,
            detail: format!(
                "max ratio {} at K={k}, {} at K={}; stability {}",
                fmt(r1.max_ratio),
                fmt(r2.max_ratio),
                2 * k,
                fmt(ratio)
            ),
        });
    }
    verdicts.push(VerdictRow {
        name: "inequality_hard_violations".into(),
        pass: at_k.violations == 0 && at_2k.violations == 0,
        detail: format!("{} at K={k}, {} at K={}", at_k.violations, at_2k.violations, 2 * k),
    });
    verdicts.push(VerdictRow {
        name: "negz_nonpositive".into(),
        pass: at_k.negz_max_normalized <= 1e-12 && at_2k.negz_max_normalized <= 1e-12,
        detail: format!(
            "max normalized form {} / {}",
            fmt(at_k.negz_max_normalized),
            fmt(at_2k.negz_max_normalized)
        ),
    });
    let sums = varsigma_sum_across_cutoffs(&[k, 2 * k, 4 * k], 1.0);
    let g1 = sums[1].1 / sums[0].1;
    let g2 = sums[2].1 / sums[1].1;
    verdicts.push(VerdictRow {
        name: "varsigma_sum_sublinear".into(),
        pass: g1 < 2.0 && g2 < 2.0,
        detail: format!("growth {} then {} under cutoff doubling", fmt(g1), fmt(g2)),
    });

    write_inequalities(dir, config, &ineq_rows).map_err(config_err)?;
    let failures: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{}: {}", v.name, v.detail))
        .collect();
    write_meta(dir, "verify", config, &grid, Some(verdicts))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CommandError::Verification(failures))
    }
}

fn write_inequalities(
    dir: &Path,
    config: &RunConfig,
    rows: &[(String, f64, f64, bool)],
) -> anyhow::Result<()> {
    match config.output.format {
        OutputFormat::Csv => {
            use std::io::Write;
            let path = dir.join("inequalities.csv");
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(w, "name,max_ratio_K,max_ratio_2K,verdict")?;
            for (name, a, b, pass) in rows {
                writeln!(
                    w,
                    "{name},{},{},{}",
                    fmt(*a),
                    fmt(*b),
                    if *pass { "pass" } else { "fail" }
                )?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let objects: Vec<serde_json::Value> = rows
                .iter()
                .map(|(name, a, b, pass)| {
                    serde_json::json!({
                        "name": name,
                        "max_ratio_K": a,
                        "max_ratio_2K": b,
                        "verdict": if *pass { "pass" } else { "fail" },
                    })
                })
                .collect();
            write_json(dir, "inequalities.json", &objects)?;
        }
    }
    Ok(())
}
