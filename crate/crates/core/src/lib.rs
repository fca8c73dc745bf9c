//! Spectral solver for constrained quantum free-energy minimization on the
//! 1-torus.
//!
//! States are density operators (Hermitian positive-semidefinite matrices)
//! on a truncated plane-wave basis. The crate computes minimizers of
//! `E(rho) + T * S(rho)` under a local density constraint by penalized
//! self-consistent iteration, adds a local current constraint by a gauge
//! transform, matches a global energy target by temperature bisection, and
//! ships a verification lab for the monotonicity, limit, and inequality
//! diagnostics used by the acceptance suite.

pub mod density;
pub mod frechet;
pub mod grid;
pub mod lab;
pub mod matching;
pub mod penalized;
pub mod tolerances;

pub use density::{
    eigendecompose_hamiltonian, gauge_phase, hamiltonian_matrix, multiplication_matrix,
    DensityOperator, HamiltonianEig, Moments, OperatorError,
};
pub use frechet::{
    apply_z, apply_z_to_modes, free_susceptibility, varsigma_table, z_quadratic_form,
    FrechetError, VarsigmaTable,
};
pub use grid::{FieldSample, GridError, Parity, SpectralGrid};
pub use lab::{
    check_energy_entropy_relation, geometric_grid, inequality_suite, negz_suite,
    temperature_scan, varsigma_sum_across_cutoffs, zero_t_limit, InequalityReport, LabError,
    RelationReport, ScanRecord, TemperatureScan, ZeroTemperatureReport,
};
pub use matching::{
    compute_m0, floor_state, match_energy, solve_two_moment, ConstraintSet, EnergyMatch,
    EnergyTarget, MatchError, TwoMomentSolution,
};
pub use penalized::{
    chemical_potential_residual, continuation_solve, solve_penalized, PenalizedSolveOptions,
    RungRecord, SolveError, SolveReport,
};
