//! Numeric thresholds used across the crate, collected in one place so the
//! reports and tests can cite the exact values in force.

/// Relative Hermiticity tolerance: a matrix `M` is accepted as Hermitian when
/// `max |M - M*| <= TOL_HERMITIAN * max(1, max |M|)`.
pub const TOL_HERMITIAN: f64 = 1e-10;

/// Relative positive-semidefiniteness tolerance. Eigenvalues in
/// `[-tol_psd, 0)` with `tol_psd = TOL_PSD_REL * (1 + max eigenvalue)` are
/// clamped to zero; anything more negative is rejected.
pub const TOL_PSD_REL: f64 = 1e-12;

/// Eigenvalues below this floor contribute exactly zero to the entropy and to
/// the `rho log rho` density (the map `x -> x log x - x` extends continuously
/// by zero at the origin).
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Absolute tolerance on the circulation quantization `int u0 dx in 2*pi*Z`.
/// The phase `exp(i f)` with `f(x) = int_0^x u0` is single-valued on the
/// torus only for quantized circulation; anything else is rejected rather
/// than silently conjugating by a non-unitary.
pub const CIRCULATION_TOL: f64 = 1e-8;

/// Relative gap threshold below which the divided difference of
/// `lambda -> exp(-beta*lambda)` switches to the cancellation-safe midpoint
/// derivative `-beta * exp(-beta*(l1+l2)/2)`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Relative window around the energy floor `m0` inside which an energy target
/// is matched by the rank-one pure state directly instead of by temperature
/// bisection (the thermal solve degenerates as T -> 0).
pub const PURE_STATE_REL: f64 = 1e-6;

/// Pointwise lower bound demanded of the target density `n0`.
pub const MIN_DENSITY: f64 = 1e-8;

/// Default L2 tolerance on the fixed-point residual `||A - (n[rho]-n0)/eps||`.
pub const DEFAULT_TOL_FIXED_POINT: f64 = 1e-10;

/// Default L2 tolerance used when reporting the constraint residual
/// `||n[rho] - n0||`.
pub const DEFAULT_TOL_CONSTRAINT: f64 = 1e-8;

/// Default iteration budget per penalization rung.
pub const DEFAULT_MAX_ITERS: usize = 800;

/// Default absolute tolerance on `|E(T0) - e0|` for energy matching.
pub const DEFAULT_TOL_ENERGY: f64 = 1e-6;

/// Slack for the "free energy non-increasing over accepted steps" check:
/// a step is rejected when it raises the penalized free energy by more than
/// `FREE_ENERGY_SLACK * (1 + |F|)`.
pub const FREE_ENERGY_SLACK: f64 = 1e-10;

/// Energy-difference floor for the energy-entropy relation diagnostic.
/// Pairs with `|E(T2) - E(T1)| < RELATION_FLOOR_REL * (1 + max |E|)` carry no
/// signal above solver noise (the normalization degenerates to 0/0, like the
/// T1 = T2 pair) and are reported as excluded rather than folded into the max.
pub const RELATION_FLOOR_REL: f64 = 1e-6;

/// Maximum number of geometric bracket expansions during energy matching.
pub const MAX_BRACKET_EXPANSIONS: usize = 40;

/// Default ladder of penalization parameters, strictly decreasing.
pub const DEFAULT_EPSILON_LADDER: [f64; 7] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
