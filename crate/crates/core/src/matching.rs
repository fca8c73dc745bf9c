//! Two-moment minimizers via the gauge transform, the zero-temperature
//! energy floor `m0`, and global-energy matching by temperature bisection.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::density::{gauge_phase, DensityOperator, OperatorError};
use crate::grid::{FieldSample, GridError, SpectralGrid};
use crate::penalized::{continuation_solve, PenalizedSolveOptions, SolveError, SolveReport};
use crate::tolerances;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(
        "energy target e0 = {e0:.12e} is below the reachable floor m0 = {m0:.12e}; \
         no admissible state has less energy than m0"
    )]
    Infeasible { e0: f64, m0: f64 },
    #[error("density must be strictly positive to define m0; min n0 = {0:.3e}")]
    NonPositiveDensity(f64),
    #[error("bracket expansion failed after {expansions} steps: E({t:.6e}) = {e:.6e} never crossed e0 = {e0:.6e}")]
    BracketExpansion {
        expansions: usize,
        t: f64,
        e: f64,
        e0: f64,
    },
    #[error("bisection failed to reach |E - e0| <= {tol:.3e} within {iters} iterations")]
    BisectionStalled { tol: f64, iters: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Target moments: a positive density, a real velocity with quantized
/// circulation, and either a temperature or a global energy target.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub n0: FieldSample,
    pub u0: FieldSample,
    pub target: EnergyTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EnergyTarget {
    Temperature(f64),
    GlobalEnergy(f64),
}

impl ConstraintSet {
    /// Checks the admissibility invariants before any solve: positive
    /// density, real velocity with quantized circulation, positive
    /// temperature or a feasible energy target (`e0 >= m0` within the
    /// pure-state window).
    pub fn validate(&self, grid: &SpectralGrid) -> Result<(), MatchError> {
        let m0 = compute_m0(grid, &self.n0, &self.u0)?;
        gauge_phase(grid, &self.u0)?;
        match self.target {
            EnergyTarget::Temperature(t) if t <= 0.0 => Err(MatchError::Solve(
                crate::penalized::SolveError::NonPositiveTemperature(t),
            )),
            EnergyTarget::GlobalEnergy(e0)
                if e0 < m0 - tolerances::PURE_STATE_REL * (1.0 + m0.abs()) =>
            {
                Err(MatchError::Infeasible { e0, m0 })
            }
            _ => Ok(()),
        }
    }
}

/// Zero-temperature energy floor
/// `m0 = 1/2 (int |grad sqrt(n0)|^2 + int n0 |u0|^2)`, evaluated spectrally.
pub fn compute_m0(
    grid: &SpectralGrid,
    n0: &FieldSample,
    u0: &FieldSample,
) -> Result<f64, MatchError> {
    n0.ensure_real(tolerances::TOL_HERMITIAN)
        .map_err(OperatorError::from)?;
    u0.ensure_real(tolerances::TOL_HERMITIAN)
        .map_err(OperatorError::from)?;
    let min = n0.min_real();
    if min <= 0.0 {
        return Err(MatchError::NonPositiveDensity(min));
    }
    let sqrt_n = FieldSample::from_real_samples(
        grid,
        &n0.values().iter().map(|v| v.re.sqrt()).collect::<Vec<_>>(),
    )?;
    let grad = grid.differentiate(&sqrt_n)?;
    let kinetic_part = grid.l2_norm(&grad)?.powi(2);
    let nu2 = FieldSample::from_real_samples(
        grid,
        &n0.values()
            .iter()
            .zip(u0.values())
            .map(|(n, u)| n.re * u.re * u.re)
            .collect::<Vec<_>>(),
    )?;
    let current_part = grid.integrate(&nu2)?.re;
    Ok(0.5 * (kinetic_part + current_part))
}

/// Result of a two-moment solve: the gauged state together with the
/// ungauged one, the converged potential and the solver report.
#[derive(Debug)]
pub struct TwoMomentSolution {
    pub state: DensityOperator,
    pub ungauged: DensityOperator,
    pub potential: FieldSample,
    pub report: SolveReport,
}

/// Minimizes the free energy at temperature `t` under the density constraint,
/// then conjugates by the gauge phase of `u0`. The gauge step leaves the
/// spectrum and the density unchanged, shifts the current by `n0 * u0` and
/// the energy by `1/2 int n0 |u0|^2`.
pub fn solve_two_moment(
    grid: &Arc<SpectralGrid>,
    n0: &FieldSample,
    u0: &FieldSample,
    t: f64,
    opts: &PenalizedSolveOptions,
) -> Result<TwoMomentSolution, MatchError> {
    // Validate the circulation before paying for the solve.
    gauge_phase(grid, u0)?;
    let (ungauged, potential, report) = continuation_solve(grid, n0, t, opts)?;
    let state = ungauged.gauge_transform(u0)?;
    Ok(TwoMomentSolution {
        state,
        ungauged,
        potential,
        report,
    })
}

/// Outcome of [`match_energy`].
#[derive(Debug)]
pub struct EnergyMatch {
    /// Matched temperature; `None` when the target sits on the floor and the
    /// rank-one pure state is returned directly.
    pub temperature: Option<f64>,
    pub state: DensityOperator,
    pub report: Option<SolveReport>,
    pub pure_state: bool,
    pub m0: f64,
    /// Number of inner solves spent on bracketing and bisection.
    pub evaluations: usize,
}

/// Rank-one state onto the gauged square root of the density:
/// the unique admissible state when the energy target equals the floor.
pub fn floor_state(
    grid: &Arc<SpectralGrid>,
    n0: &FieldSample,
    u0: &FieldSample,
) -> Result<DensityOperator, MatchError> {
    let phase = gauge_phase(grid, u0)?;
    let psi: Vec<Complex64> = n0
        .values()
        .iter()
        .zip(phase.values())
        .map(|(n, p)| p * n.re.sqrt())
        .collect();
    let psi = FieldSample::from_complex_samples(grid, psi)?;
    let coeffs = grid.analyze(psi.values())?;
    Ok(DensityOperator::pure_state(grid.clone(), &coeffs)?)
}

/// Finds the temperature whose two-moment minimizer has energy `e0`
/// (bisection on a strictly increasing map, robust to inner-solve noise at
/// the `tol_e` scale). Targets within a relative window of the floor return
/// the rank-one pure state without bisection; targets below the floor are
/// infeasible.
pub fn match_energy(
    grid: &Arc<SpectralGrid>,
    n0: &FieldSample,
    u0: &FieldSample,
    e0: f64,
    bracket: Option<(f64, f64)>,
    tol_e: f64,
    opts: &PenalizedSolveOptions,
) -> Result<EnergyMatch, MatchError> {
    let m0 = compute_m0(grid, n0, u0)?;
    let floor_window = tolerances::PURE_STATE_REL * (1.0 + m0.abs());
    if e0 < m0 - floor_window {
        return Err(MatchError::Infeasible { e0, m0 });
    }
    if e0 <= m0 + floor_window {
        let state = floor_state(grid, n0, u0)?;
        return Ok(EnergyMatch {
            temperature: None,
            state,
            report: None,
            pure_state: true,
            m0,
            evaluations: 0,
        });
    }

    let mut evaluations = 0usize;
    let mut energy_at = |t: f64| -> Result<(f64, TwoMomentSolution), MatchError> {
        let sol = solve_two_moment(grid, n0, u0, t, opts)?;
        evaluations += 1;
        Ok((sol.state.energy(), sol))
    };

    let (mut t_lo, mut t_hi) = bracket.unwrap_or((0.5, 2.0));
    let (mut e_lo, mut sol_lo) = energy_at(t_lo)?;
    let (mut e_hi, mut sol_hi) = energy_at(t_hi)?;
    let mut expansions = 0usize;
    while e_hi < e0 {
        if expansions >= tolerances::MAX_BRACKET_EXPANSIONS {
            return Err(MatchError::BracketExpansion {
                expansions,
                t: t_hi,
                e: e_hi,
                e0,
            });
        }
        t_hi *= 4.0;
        let r = energy_at(t_hi)?;
        e_hi = r.0;
        sol_hi = r.1;
        expansions += 1;
    }
    expansions = 0;
    while e_lo > e0 {
        if expansions >= tolerances::MAX_BRACKET_EXPANSIONS {
            return Err(MatchError::BracketExpansion {
                expansions,
                t: t_lo,
                e: e_lo,
                e0,
            });
        }
        t_lo /= 4.0;
        let r = energy_at(t_lo)?;
        e_lo = r.0;
        sol_lo = r.1;
        expansions += 1;
    }
    if (e_lo - e0).abs() <= tol_e {
        return Ok(finish(t_lo, sol_lo, m0, evaluations));
    }
    if (e_hi - e0).abs() <= tol_e {
        return Ok(finish(t_hi, sol_hi, m0, evaluations));
    }

    const MAX_BISECTIONS: usize = 200;
    for _ in 0..MAX_BISECTIONS {
        let t_mid = 0.5 * (t_lo + t_hi);
        let (e_mid, sol_mid) = energy_at(t_mid)?;
        if (e_mid - e0).abs() <= tol_e {
            return Ok(finish(t_mid, sol_mid, m0, evaluations));
        }
        if e_mid < e0 {
            t_lo = t_mid;
        } else {
            t_hi = t_mid;
        }
    }
    Err(MatchError::BisectionStalled {
        tol: tol_e,
        iters: MAX_BISECTIONS,
    })
}

fn finish(t: f64, sol: TwoMomentSolution, m0: f64, evaluations: usize) -> EnergyMatch {
    EnergyMatch {
        temperature: Some(t),
        state: sol.state,
        report: Some(sol.report),
        pure_state: false,
        m0,
        evaluations,
    }
}
