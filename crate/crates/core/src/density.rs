//! Density operators on the truncated plane-wave basis: Hermitian
//! positive-semidefinite matrices with a cached eigendecomposition, their
//! moments, entropy, energy, and the gauge transform.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{FieldSample, GridError, SpectralGrid};
use crate::tolerances;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("matrix is not Hermitian: max |M - M*| = {defect:.3e} exceeds {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.6e} below -{tol:.3e}")]
    NotPositive { eigenvalue: f64, tol: f64 },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("Boltzmann weight exp({exponent:.3e}) overflows; Hamiltonian is unbounded for this iterate")]
    WeightOverflow { exponent: f64 },
    #[error("Hermitian eigensolver failed to converge for a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },
    #[error(
        "circulation {circulation:.12e} is not within {tol:.1e} of 2*pi*Z; \
         exp(i*int u0) is single-valued on the torus only for quantized circulation"
    )]
    CirculationNotQuantized { circulation: f64, tol: f64 },
    #[error("matrix dimension {actual} does not match the grid basis dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Eigendecomposition of a Hamiltonian `H0 + A`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HamiltonianEig {
    pub lambdas: Vec<f64>,
    /// Orthonormal eigenvectors as columns of spectral coefficients,
    /// aligned with `lambdas`.
    pub vectors: DMatrix<Complex64>,
}

/// Galerkin matrix of multiplication by a sampled function:
/// `M[a][b] = fourier_mode(f, k_a - k_b)`, with coefficients obtained by
/// dealiased quadrature (exact for `f` band-limited up to `2K`).
pub fn multiplication_matrix(
    grid: &SpectralGrid,
    f: &FieldSample,
) -> Result<DMatrix<Complex64>, OperatorError> {
    let d = grid.dim();
    let span = 2 * grid.k_max() as i64;
    let mut coeffs = Vec::with_capacity((2 * span + 1) as usize);
    for q in -span..=span {
        coeffs.push(grid.fourier_mode(f.values(), q)?);
    }
    let at = |q: i64| coeffs[(q + span) as usize];
    let modes = grid.modes();
    Ok(DMatrix::from_fn(d, d, |a, b| at(modes[a] - modes[b])))
}

/// Matrix of `H = H0 + A` in the spectral basis (`H0` diagonal).
pub fn hamiltonian_matrix(
    grid: &SpectralGrid,
    a: &FieldSample,
) -> Result<DMatrix<Complex64>, OperatorError> {
    a.ensure_real(tolerances::TOL_HERMITIAN)?;
    let mut h = multiplication_matrix(grid, a)?;
    for (i, &g) in grid.gamma().iter().enumerate() {
        h[(i, i)] += Complex64::new(g, 0.0);
    }
    Ok(h)
}

fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// Cyclic Jacobi eigensolver for Hermitian matrices. The torus Hamiltonians
/// carry near-degenerate pairs (the `(k, -k)` splitting closes exponentially
/// in `k`), where two-sided rotations keep the backward error at machine
/// level; QL-type solvers were observed to lose five decades there.
pub(crate) fn hermitian_eigen(
    mut a: DMatrix<Complex64>,
) -> Result<(Vec<f64>, DMatrix<Complex64>), OperatorError> {
    let d = a.nrows();
    if d == 0 {
        return Ok((Vec::new(), a));
    }
    let mut v = DMatrix::<Complex64>::identity(d, d);
    let fro = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Ok((vec![0.0; d], v));
    }
    let target = d as f64 * f64::EPSILON * fro;
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off += 2.0 * a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= target {
            // Clean up roundoff asymmetry and return.
            let lambdas: Vec<f64> = (0..d).map(|i| a[(i, i)].re).collect();
            return Ok((lambdas, v));
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let beta_c = a[(p, q)];
                let beta = beta_c.norm();
                if beta <= f64::EPSILON * target.max(f64::MIN_POSITIVE) + 1e-300 {
                    continue;
                }
                let phase = beta_c / beta;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * beta);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sigma = t * c;
                let s = phase * sigma; // column-space rotation entry
                // Right-multiply columns p, q of A and V by the rotation.
                for i in 0..d {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * s.conj();
                    a[(i, q)] = aip * s + aiq * c;
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * s.conj();
                    v[(i, q)] = vip * s + viq * c;
                }
                // Left-multiply rows p, q by the adjoint rotation.
                for j in 0..d {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * s;
                    a[(q, j)] = apj * s.conj() + aqj * c;
                }
                // Enforce exact hermiticity of the worked block.
                a[(p, q)] = Complex64::ZERO;
                a[(q, p)] = Complex64::ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    Err(OperatorError::EigenFailure { dim: d })
}

fn sort_eigen(
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
    ascending: bool,
) -> (Vec<f64>, DMatrix<Complex64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    if !ascending {
        order.reverse();
    }
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vectors = vectors.clone();
    for (dst, &src) in order.iter().enumerate() {
        sorted_vectors.set_column(dst, &vectors.column(src));
    }
    (sorted_values, sorted_vectors)
}

/// Diagonalizes `H0 + A` for a real potential `A`; eigenvalues ascending.
pub fn eigendecompose_hamiltonian(
    grid: &SpectralGrid,
    a: &FieldSample,
) -> Result<HamiltonianEig, OperatorError> {
    let h = hermitize(&hamiltonian_matrix(grid, a)?);
    let (values, vectors) = hermitian_eigen(h)?;
    let (lambdas, vectors) = sort_eigen(values, vectors, true);
    Ok(HamiltonianEig { lambdas, vectors })
}

/// First three local moments of a density operator, plus the total energy
/// density `w = k - (1/8) laplacian(n)`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub density: FieldSample,
    pub current: FieldSample,
    pub kinetic: FieldSample,
    pub total_energy: FieldSample,
}

/// Hermitian PSD matrix in the spectral basis with a cached
/// eigendecomposition (eigenvalues descending, clamped at zero).
#[derive(Debug, Clone)]
pub struct DensityOperator {
    grid: Arc<SpectralGrid>,
    matrix: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl DensityOperator {
    /// Validates Hermiticity and positivity, diagonalizes once, and clamps
    /// roundoff-negative eigenvalues to zero.
    pub fn from_matrix(
        grid: Arc<SpectralGrid>,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self, OperatorError> {
        let d = grid.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(OperatorError::DimensionMismatch {
                expected: d,
                actual: matrix.nrows(),
            });
        }
        let scale = matrix.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
        let defect = (&matrix - matrix.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let herm_tol = tolerances::TOL_HERMITIAN * scale;
        if defect > herm_tol {
            return Err(OperatorError::NotHermitian {
                defect,
                tol: herm_tol,
            });
        }
        let sym = hermitize(&matrix);
        let (values, vectors) = hermitian_eigen(sym.clone())?;
        let (mut eigenvalues, eigenvectors) = sort_eigen(values, vectors, false);
        let max_eig = eigenvalues.first().cloned().unwrap_or(0.0).max(0.0);
        let psd_tol = tolerances::TOL_PSD_REL * (1.0 + max_eig);
        for v in &mut eigenvalues {
            if *v < 0.0 {
                if *v < -psd_tol {
                    return Err(OperatorError::NotPositive {
                        eigenvalue: *v,
                        tol: psd_tol,
                    });
                }
                *v = 0.0;
            }
        }
        Ok(Self {
            grid,
            matrix: sym,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Gibbs state `exp(-H/T)` from a Hamiltonian eigendecomposition; the
    /// result is PSD by construction and reuses the eigenvectors.
    pub fn gibbs(
        grid: Arc<SpectralGrid>,
        eig: &HamiltonianEig,
        temperature: f64,
    ) -> Result<Self, OperatorError> {
        if temperature <= 0.0 {
            return Err(OperatorError::NonPositiveTemperature(temperature));
        }
        let d = grid.dim();
        let mut weights = Vec::with_capacity(d);
        for &lambda in &eig.lambdas {
            let exponent = -lambda / temperature;
            let w = exponent.exp();
            if !w.is_finite() {
                return Err(OperatorError::WeightOverflow { exponent });
            }
            weights.push(w);
        }
        let mut matrix = DMatrix::<Complex64>::zeros(d, d);
        for (p, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                let col = eig.vectors.column(p);
                // matrix += w * col * col^*
                for a in 0..d {
                    let wa = col[a] * w;
                    for b in 0..d {
                        matrix[(a, b)] += wa * col[b].conj();
                    }
                }
            }
        }
        let (eigenvalues, eigenvectors) =
            sort_eigen(weights, eig.vectors.clone(), false);
        Ok(Self {
            grid,
            matrix,
            eigenvalues,
            eigenvectors,
        })
    }

    /// `exp(-(H0 + A)/T)` for a real potential sample `A`.
    pub fn from_hamiltonian(
        grid: Arc<SpectralGrid>,
        a: &FieldSample,
        temperature: f64,
    ) -> Result<Self, OperatorError> {
        if temperature <= 0.0 {
            return Err(OperatorError::NonPositiveTemperature(temperature));
        }
        let eig = eigendecompose_hamiltonian(&grid, a)?;
        Self::gibbs(grid, &eig, temperature)
    }

    /// Rank-one operator `|psi><psi|` from spectral coefficients (not
    /// normalized: the trace equals `|psi|^2`).
    pub fn pure_state(
        grid: Arc<SpectralGrid>,
        coefficients: &[Complex64],
    ) -> Result<Self, OperatorError> {
        let d = grid.dim();
        if coefficients.len() != d {
            return Err(OperatorError::DimensionMismatch {
                expected: d,
                actual: coefficients.len(),
            });
        }
        let c = DVector::from_column_slice(coefficients);
        let matrix = &c * c.adjoint();
        Self::from_matrix(grid, matrix)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Eigenvalues, descending, clamped at zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors (columns), aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<Complex64> {
        &self.eigenvectors
    }

    pub fn trace(&self) -> f64 {
        (0..self.grid.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Trace norm; equals the trace for a PSD operator.
    pub fn j1_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.abs()).sum()
    }

    /// Hilbert-Schmidt norm.
    pub fn j2_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Kinetic energy `sum_k gamma(k) * rho_kk` (the free Hamiltonian is
    /// diagonal in the spectral basis).
    pub fn energy(&self) -> f64 {
        self.grid
            .gamma()
            .iter()
            .enumerate()
            .map(|(i, &g)| g * self.matrix[(i, i)].re)
            .sum()
    }

    /// Von Neumann entropy `sum_p s(rho_p)` with `s(x) = x log x - x` and
    /// `s(0) = 0`.
    pub fn entropy(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&v| {
                if v < tolerances::ENTROPY_FLOOR {
                    0.0
                } else {
                    v * v.ln() - v
                }
            })
            .sum()
    }

    /// `Tr(rho log rho)` with the same eigenvalue floor as the entropy.
    pub fn trace_rho_log_rho(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&v| {
                if v < tolerances::ENTROPY_FLOOR {
                    0.0
                } else {
                    v * v.ln()
                }
            })
            .sum()
    }

    /// `sum_p rho_p^e` over the clamped spectrum.
    pub fn trace_power(&self, e: f64) -> f64 {
        self.eigenvalues.iter().map(|&v| v.powf(e)).sum()
    }

    /// `E(rho) + T * S(rho)`.
    pub fn free_energy(&self, temperature: f64) -> f64 {
        self.energy() + temperature * self.entropy()
    }

    /// Fourier modes `g(q) = sum_{k-m=q} weight(k, m) * rho_km` for
    /// `q = -2K..2K`, returned as samples on the nodes. Realness of the
    /// result is guaranteed when `weight(k, m) = conj(weight(m, k))`.
    fn anti_diagonal_field(&self, weight: impl Fn(i64, i64) -> f64) -> FieldSample {
        let grid = &self.grid;
        let span = 2 * grid.k_max() as i64;
        let modes = grid.modes();
        let d = grid.dim();
        let mut coeffs = vec![Complex64::ZERO; (2 * span + 1) as usize];
        for a in 0..d {
            for b in 0..d {
                let q = modes[a] - modes[b];
                coeffs[(q + span) as usize] += self.matrix[(a, b)] * weight(modes[a], modes[b]);
            }
        }
        let n = grid.n_points();
        let mut values = vec![Complex64::ZERO; n];
        for (idx, c) in coeffs.iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let q = idx as i64 - span;
            for (j, v) in values.iter_mut().enumerate() {
                *v += c * Complex64::cis(
                    2.0 * std::f64::consts::PI * q as f64 * j as f64 / n as f64,
                );
            }
        }
        FieldSample::from_complex_samples(grid, values)
            .expect("length matches by construction")
            .into_real()
    }

    /// Local density `n[rho]` straight from the matrix anti-diagonals
    /// (`n_q = sum_{k-m=q} rho_km`); identical to the eigenfunction route to
    /// roundoff but cheaper, used in solver inner loops.
    pub fn density(&self) -> FieldSample {
        self.anti_diagonal_field(|_, _| 1.0)
    }

    /// Kinetic-energy density from the matrix route
    /// (`k_q = 2 pi^2 sum_{k-m=q} k*m * rho_km`), an independent evaluation
    /// path for cross-checks against [`Self::moments`].
    pub fn kinetic_density_matrix_route(&self) -> FieldSample {
        let c = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        self.anti_diagonal_field(move |k, m| c * (k * m) as f64)
    }

    /// Total-energy density from the matrix route
    /// (`w_q = 2 pi^2 sum_{k-m=q} ((k+m)/2)^2 rho_km`).
    pub fn total_energy_density_matrix_route(&self) -> FieldSample {
        let c = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
        self.anti_diagonal_field(move |k, m| {
            let s = (k + m) as f64 / 2.0;
            c * s * s
        })
    }

    /// Density of `rho log rho`: `sum_p rho_p log(rho_p) |phi_p|^2` with the
    /// entropy floor.
    pub fn rho_log_rho_density(&self) -> FieldSample {
        let grid = &self.grid;
        let n = grid.n_points();
        let mut acc = vec![0.0; n];
        for (p, &w) in self.eigenvalues.iter().enumerate() {
            if w < tolerances::ENTROPY_FLOOR {
                continue;
            }
            let phi = grid.synthesize(self.eigenvectors.column(p).as_slice());
            let f = w * w.ln();
            for (j, v) in phi.iter().enumerate() {
                acc[j] += f * v.norm_sqr();
            }
        }
        FieldSample::from_real_samples(grid, &acc).expect("length matches")
    }

    /// Moments by eigenfunction synthesis: `n = sum rho_p |phi_p|^2`,
    /// `n u = Im sum rho_p conj(phi_p) phi_p'`, `k = 1/2 sum rho_p |phi_p'|^2`,
    /// and `w = k - (1/8) laplacian(n)` with the Laplacian taken spectrally.
    pub fn moments(&self) -> Moments {
        let grid = &self.grid;
        let n_pts = grid.n_points();
        let mut density = vec![0.0; n_pts];
        let mut current = vec![0.0; n_pts];
        let mut kinetic = vec![0.0; n_pts];
        let two_pi = 2.0 * std::f64::consts::PI;
        for (p, &w) in self.eigenvalues.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let col = self.eigenvectors.column(p);
            let phi = grid.synthesize(col.as_slice());
            let dcoeffs: Vec<Complex64> = grid
                .modes()
                .iter()
                .zip(col.iter())
                .map(|(&k, c)| c * Complex64::new(0.0, two_pi * k as f64))
                .collect();
            let dphi = grid.synthesize(&dcoeffs);
            for j in 0..n_pts {
                density[j] += w * phi[j].norm_sqr();
                current[j] += w * (phi[j].conj() * dphi[j]).im;
                kinetic[j] += 0.5 * w * dphi[j].norm_sqr();
            }
        }
        let density = FieldSample::from_real_samples(grid, &density).expect("length matches");
        let current = FieldSample::from_real_samples(grid, &current).expect("length matches");
        let kinetic = FieldSample::from_real_samples(grid, &kinetic).expect("length matches");
        let lap_n = grid.laplacian(&density).expect("same grid").into_real();
        let total_energy = kinetic.add_scaled(&lap_n, -0.125);
        Moments {
            density,
            current,
            kinetic,
            total_energy,
        }
    }

    /// Conjugates by the unitary multiplication operator `exp(i f)` with
    /// `f(x) = int_0^x u0`. Requires quantized circulation. Eigenvalues,
    /// entropy and density are invariant; the current shifts by `n * u0` and
    /// the energy by `1/2 int n |u0|^2`.
    pub fn gauge_transform(&self, u0: &FieldSample) -> Result<Self, OperatorError> {
        let grid = &self.grid;
        u0.ensure_real(tolerances::TOL_HERMITIAN)?;
        if u0.len() != grid.n_points() {
            return Err(GridError::ShapeMismatch {
                expected: grid.n_points(),
                actual: u0.len(),
            }
            .into());
        }
        let phase = gauge_phase(grid, u0)?;
        let u = multiplication_matrix(grid, &phase)?;
        let conjugated = &u * &self.matrix * u.adjoint();
        Self::from_matrix(self.grid.clone(), hermitize(&conjugated))
    }
}

/// Samples of `exp(i f)` with `f(x) = int_0^x u0`, built spectrally: the
/// linear-in-x part carries the quantized circulation, the periodic part the
/// remaining antiderivative.
pub fn gauge_phase(grid: &SpectralGrid, u0: &FieldSample) -> Result<FieldSample, OperatorError> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let circulation = grid.integrate(u0)?.re;
    let winding = (circulation / two_pi).round();
    if (circulation - two_pi * winding).abs() > tolerances::CIRCULATION_TOL {
        return Err(OperatorError::CirculationNotQuantized {
            circulation,
            tol: tolerances::CIRCULATION_TOL,
        });
    }
    let n = grid.n_points();
    let mut f = vec![0.0; n];
    for (j, x) in grid.nodes().iter().enumerate() {
        f[j] = two_pi * winding * x;
    }
    // Periodic part: each nonzero mode q of u0 contributes c_q/(2 pi i q).
    // Conjugate modes are visited separately, so no doubling is applied.
    let half = n as i64 / 2;
    for q in 1..=half {
        for &s in &[q, -q] {
            if s == -q && 2 * q == n as i64 {
                continue; // the Nyquist bin appears once
            }
            let c = grid.fourier_mode(u0.values(), s)?;
            if c.norm() == 0.0 {
                continue;
            }
            let denom = Complex64::new(0.0, two_pi * s as f64);
            for (j, x) in grid.nodes().iter().enumerate() {
                f[j] += (c / denom * Complex64::cis(two_pi * s as f64 * x)).re;
            }
        }
    }
    let values: Vec<Complex64> = f.iter().map(|&v| Complex64::cis(v)).collect();
    FieldSample::from_complex_samples(grid, values).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn arc_grid(k: usize) -> Arc<SpectralGrid> {
        Arc::new(SpectralGrid::with_default_nodes(k))
    }

    fn plane_wave_state(grid: &Arc<SpectralGrid>, mode: i64) -> DensityOperator {
        let mut c = vec![Complex64::ZERO; grid.dim()];
        c[grid.mode_index(mode).unwrap()] = Complex64::new(1.0, 0.0);
        DensityOperator::pure_state(grid.clone(), &c).unwrap()
    }

    #[test]
    fn gibbs_free_hamiltonian_k1() {
        let grid = arc_grid(1);
        let a = FieldSample::constant(&grid, 0.0);
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        let w = (-2.0 * PI * PI).exp();
        let eig = rho.eigenvalues();
        assert_relative_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], w, max_relative = 1e-10);
        assert_relative_eq!(eig[2], w, max_relative = 1e-10);
        // Diagonal matrix in the spectral basis.
        for a_idx in 0..3 {
            for b_idx in 0..3 {
                if a_idx != b_idx {
                    assert!(rho.matrix()[(a_idx, b_idx)].norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn constant_shift_scales_weights() {
        let grid = arc_grid(2);
        let zero = FieldSample::constant(&grid, 0.0);
        let shifted = FieldSample::constant(&grid, 0.7);
        let t = 1.3;
        let rho0 = DensityOperator::from_hamiltonian(grid.clone(), &zero, t).unwrap();
        let rho1 = DensityOperator::from_hamiltonian(grid.clone(), &shifted, t).unwrap();
        let scale = (-0.7 / t).exp();
        let diff = rho1.matrix() - rho0.matrix().scale(scale);
        assert!(diff.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn low_temperature_projects_on_constant_mode() {
        let grid = arc_grid(2);
        let a = FieldSample::constant(&grid, 0.0);
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1e-3).unwrap();
        assert_relative_eq!(rho.eigenvalues()[0], 1.0, epsilon = 1e-12);
        assert!(rho.eigenvalues()[1] < 1e-300);
    }

    #[test]
    fn rejects_nonpositive_temperature_and_complex_potential() {
        let grid = arc_grid(1);
        let a = FieldSample::constant(&grid, 0.0);
        assert!(matches!(
            DensityOperator::from_hamiltonian(grid.clone(), &a, 0.0),
            Err(OperatorError::NonPositiveTemperature(_))
        ));
        let bad = FieldSample::from_complex_samples(
            &grid,
            vec![Complex64::new(0.0, 1.0); grid.n_points()],
        )
        .unwrap();
        assert!(DensityOperator::from_hamiltonian(grid.clone(), &bad, 1.0).is_err());
    }

    #[test]
    fn moments_of_plane_wave() {
        let grid = arc_grid(2);
        let rho = plane_wave_state(&grid, 1);
        let m = rho.moments();
        for j in 0..grid.n_points() {
            assert_relative_eq!(m.density.values()[j].re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(m.current.values()[j].re, 2.0 * PI, epsilon = 1e-10);
            assert_relative_eq!(m.kinetic.values()[j].re, 2.0 * PI * PI, epsilon = 1e-9);
        }
    }

    #[test]
    fn moments_of_constant_mode() {
        let grid = arc_grid(2);
        let rho = plane_wave_state(&grid, 0);
        let m = rho.moments();
        for j in 0..grid.n_points() {
            assert_relative_eq!(m.density.values()[j].re, 1.0, epsilon = 1e-12);
            assert!(m.current.values()[j].norm() < 1e-12);
            assert!(m.kinetic.values()[j].norm() < 1e-12);
        }
    }

    #[test]
    fn moments_of_even_mixture() {
        let grid = arc_grid(2);
        let c0 = plane_wave_state(&grid, 0);
        let c1 = plane_wave_state(&grid, 1);
        let mixed = DensityOperator::from_matrix(
            grid.clone(),
            c0.matrix().scale(0.5) + c1.matrix().scale(0.5),
        )
        .unwrap();
        let m = mixed.moments();
        for j in 0..grid.n_points() {
            assert_relative_eq!(m.density.values()[j].re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(m.current.values()[j].re, PI, epsilon = 1e-10);
            assert_relative_eq!(m.kinetic.values()[j].re, PI * PI, epsilon = 1e-9);
        }
    }

    #[test]
    fn density_matrix_route_matches_synthesis_route() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let grid = arc_grid(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let d = grid.dim();
            let b = DMatrix::<Complex64>::from_fn(d, d, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let rho = DensityOperator::from_matrix(grid.clone(), &b * b.adjoint()).unwrap();
            let fast = rho.density();
            let m = rho.moments();
            let diff = fast.sub(&m.density);
            assert!(grid.l2_norm(&diff).unwrap() < 1e-10 * (1.0 + rho.trace()));
            let kfast = rho.kinetic_density_matrix_route();
            let kdiff = kfast.sub(&m.kinetic);
            assert!(grid.l2_norm(&kdiff).unwrap() < 1e-9 * (1.0 + rho.energy()));
        }
    }

    #[test]
    fn energy_examples() {
        let grid = arc_grid(1);
        let rho = plane_wave_state(&grid, 1);
        assert_relative_eq!(rho.energy(), 2.0 * PI * PI, max_relative = 1e-12);

        let a = FieldSample::constant(&grid, 0.0);
        let gibbs = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        assert_relative_eq!(
            gibbs.energy(),
            2.0 * 2.0 * PI * PI * (-2.0 * PI * PI).exp(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn energy_equals_integrated_kinetic_density() {
        let grid = arc_grid(3);
        let a = FieldSample::from_real_fn(&grid, |x| 0.8 * (2.0 * PI * x).cos());
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.5).unwrap();
        let m = rho.moments();
        let k_int = grid.integrate(&m.kinetic).unwrap().re;
        assert_relative_eq!(rho.energy(), k_int, max_relative = 1e-10);
        // Trace duality as well.
        let n_int = grid.integrate(&m.density).unwrap().re;
        assert_relative_eq!(rho.trace(), n_int, max_relative = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let grid = arc_grid(1);
        let rho = plane_wave_state(&grid, 0);
        assert_relative_eq!(rho.entropy(), -1.0, epsilon = 1e-12);

        let zero = DensityOperator::from_matrix(
            grid.clone(),
            DMatrix::<Complex64>::zeros(grid.dim(), grid.dim()),
        )
        .unwrap();
        assert_eq!(zero.entropy(), 0.0);

        let half = DensityOperator::from_matrix(
            grid.clone(),
            plane_wave_state(&grid, 0).matrix().scale(0.5)
                + plane_wave_state(&grid, 1).matrix().scale(0.5),
        )
        .unwrap();
        assert_relative_eq!(half.entropy(), -(2.0f64.ln()) - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn free_energy_is_linear_in_temperature() {
        let grid = arc_grid(2);
        let a = FieldSample::from_real_fn(&grid, |x| (2.0 * PI * x).cos());
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        let e = rho.energy();
        let s = rho.entropy();
        for t in [0.5, 1.0, 2.0, 3.7] {
            assert_relative_eq!(rho.free_energy(t), e + t * s, max_relative = 1e-13);
        }
        // Rank-one constant mode at T = 1: F = 0 + 1 * (-1).
        let pure = plane_wave_state(&grid, 0);
        assert_relative_eq!(pure.free_energy(1.0), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn gauge_identity_when_u0_vanishes() {
        let grid = arc_grid(2);
        let a = FieldSample::from_real_fn(&grid, |x| 0.4 * (2.0 * PI * x).cos());
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        let gauged = rho.gauge_transform(&FieldSample::constant(&grid, 0.0)).unwrap();
        let diff = gauged.matrix() - rho.matrix();
        assert!(diff.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn gauge_shifts_constant_mode_by_one() {
        let grid = arc_grid(2);
        let rho = plane_wave_state(&grid, 0);
        let u0 = FieldSample::constant(&grid, 2.0 * PI);
        let gauged = rho.gauge_transform(&u0).unwrap();
        let m = gauged.moments();
        for j in 0..grid.n_points() {
            assert_relative_eq!(m.density.values()[j].re, 1.0, epsilon = 1e-10);
            assert_relative_eq!(m.current.values()[j].re, 2.0 * PI, epsilon = 1e-9);
        }
        assert_relative_eq!(gauged.energy(), 2.0 * PI * PI, max_relative = 1e-10);
        assert_relative_eq!(gauged.entropy(), rho.entropy(), epsilon = 1e-11);
    }

    #[test]
    fn gauge_rejects_unquantized_circulation() {
        let grid = arc_grid(2);
        let rho = plane_wave_state(&grid, 0);
        let u0 = FieldSample::constant(&grid, PI);
        assert!(matches!(
            rho.gauge_transform(&u0),
            Err(OperatorError::CirculationNotQuantized { .. })
        ));
    }

    #[test]
    fn gauge_with_periodic_part_shifts_current_pointwise() {
        let grid = arc_grid(8);
        let a = FieldSample::from_real_fn(&grid, |x| 0.5 * (2.0 * PI * x).cos());
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        let u0 = FieldSample::from_real_fn(&grid, |x| 2.0 * PI + 0.4 * (2.0 * PI * x).cos());
        let gauged = rho.gauge_transform(&u0).unwrap();
        let m0 = rho.moments();
        let m1 = gauged.moments();
        // Eigenvalues invariant.
        for (x, y) in rho.eigenvalues().iter().zip(gauged.eigenvalues()) {
            assert!((x - y).abs() < 1e-10);
        }
        // Density invariant, current shifted by n * u0 pointwise.
        for j in 0..grid.n_points() {
            assert!((m1.density.values()[j] - m0.density.values()[j]).norm() < 1e-9);
            let expect = m0.current.values()[j].re
                + m0.density.values()[j].re * u0.values()[j].re;
            assert_relative_eq!(m1.current.values()[j].re, expect, epsilon = 1e-8);
        }
        // Energy shift = 1/2 int n |u0|^2.
        let nu2 = FieldSample::from_real_samples(
            &grid,
            &m0.density
                .values()
                .iter()
                .zip(u0.values())
                .map(|(n, u)| n.re * u.re * u.re)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let shift = 0.5 * grid.integrate(&nu2).unwrap().re;
        assert_relative_eq!(gauged.energy() - rho.energy(), shift, max_relative = 1e-9);
    }

    #[test]
    fn zero_current_for_real_potential() {
        let grid = arc_grid(6);
        let a = FieldSample::from_real_fn(&grid, |x| {
            0.7 * (2.0 * PI * x).cos() + 0.2 * (4.0 * PI * x).sin()
        });
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 0.8).unwrap();
        let m = rho.moments();
        assert!(grid.l2_norm(&m.current).unwrap() < 1e-11 * (1.0 + rho.trace()));
    }

    #[test]
    fn total_energy_density_consistency() {
        let grid = arc_grid(4);
        let a = FieldSample::from_real_fn(&grid, |x| 0.6 * (2.0 * PI * x).cos());
        let rho = DensityOperator::from_hamiltonian(grid.clone(), &a, 1.0).unwrap();
        let m = rho.moments();
        let w_matrix = rho.total_energy_density_matrix_route();
        let diff = w_matrix.sub(&m.total_energy);
        assert!(grid.l2_norm(&diff).unwrap() < 1e-9 * (1.0 + rho.energy()));
    }

    #[test]
    fn kinetic_lower_bound_and_log_trace_estimate() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let grid = arc_grid(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let d = grid.dim();
            let b = DMatrix::<Complex64>::from_fn(d, d, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let raw = DensityOperator::from_matrix(grid.clone(), &b * b.adjoint()).unwrap();
            // Scale so the trace norm is at least one (the log estimate needs it).
            let target = 1.0 + (trial % 5) as f64;
            let scale = target / raw.trace();
            let rho =
                DensityOperator::from_matrix(grid.clone(), raw.matrix().scale(scale)).unwrap();

            // 1/2 ||grad sqrt(n)||^2 <= E(rho).
            let n = rho.moments().density;
            let sqrt_n = FieldSample::from_real_samples(
                &grid,
                &n.values().iter().map(|v| v.re.max(0.0).sqrt()).collect::<Vec<_>>(),
            )
            .unwrap();
            let grad = grid.differentiate(&sqrt_n).unwrap();
            let lhs = 0.5 * grid.l2_norm(&grad).unwrap().powi(2);
            assert!(
                lhs <= rho.energy() + 1e-9 * (1.0 + rho.energy()),
                "lower bound violated: {lhs} > {}",
                rho.energy()
            );

            // Tr(rho log rho) <= |rho|_J1 log |rho|_J1 when the norm is >= 1.
            let j1 = rho.j1_norm();
            assert!(rho.trace_rho_log_rho() <= j1 * j1.ln() + 1e-10 * (1.0 + j1));
        }
    }

    #[test]
    fn eigensolver_stays_accurate_on_clustered_spectra() {
        // Hamiltonians of single-mode potentials have eigenvalue pairs whose
        // splitting closes exponentially with the mode number; the solver
        // must keep the residual at machine level there.
        let grid = arc_grid(6);
        for amp in [0.4, 1.1, 2.3] {
            let a = FieldSample::from_real_fn(&grid, |x| amp * (2.0 * PI * x + 0.7).cos());
            let h = hamiltonian_matrix(&grid, &a).unwrap();
            let eig = eigendecompose_hamiltonian(&grid, &a).unwrap();
            let d = grid.dim();
            let hnorm = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let lam = DMatrix::<Complex64>::from_fn(d, d, |r, c| {
                if r == c {
                    Complex64::new(eig.lambdas[r], 0.0)
                } else {
                    Complex64::ZERO
                }
            });
            let resid = (&h * &eig.vectors - &eig.vectors * &lam)
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            let ortho = (eig.vectors.adjoint() * &eig.vectors
                - DMatrix::<Complex64>::identity(d, d))
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
            assert!(resid / hnorm < 1e-13, "residual {:.3e}", resid / hnorm);
            assert!(ortho < 1e-13, "orthonormality defect {ortho:.3e}");
            // Eigenvalues ascending.
            assert!(eig.lambdas.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn from_matrix_rejects_bad_inputs() {
        let grid = arc_grid(1);
        let d = grid.dim();
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        m[(0, 1)] = Complex64::new(1.0, 0.0); // not Hermitian
        assert!(matches!(
            DensityOperator::from_matrix(grid.clone(), m),
            Err(OperatorError::NotHermitian { .. })
        ));
        let mut neg = DMatrix::<Complex64>::zeros(d, d);
        neg[(0, 0)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(
            DensityOperator::from_matrix(grid.clone(), neg),
            Err(OperatorError::NotPositive { .. })
        ));
        // Tiny negative eigenvalues are clamped, not rejected.
        let mut tiny = DMatrix::<Complex64>::zeros(d, d);
        tiny[(0, 0)] = Complex64::new(-1e-14, 0.0);
        tiny[(1, 1)] = Complex64::new(1.0, 0.0);
        let rho = DensityOperator::from_matrix(grid.clone(), tiny).unwrap();
        assert_eq!(rho.eigenvalues().last().cloned().unwrap(), 0.0);
    }
}
