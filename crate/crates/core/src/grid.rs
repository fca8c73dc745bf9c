//! Plane-wave discretization of the 1-torus `[0, 1]`.
//!
//! The basis is the complex exponentials `e_k(x) = exp(2*pi*i*k*x)` for
//! `|k| <= K`, listed in the fixed order `(0, +1, -1, +2, -2, ...)`. The free
//! Hamiltonian `-1/2 d^2/dx^2` is diagonal in this basis with eigenvalues
//! `gamma(k) = 2*pi^2*k^2`. Fields live on the uniform collocation grid
//! `x_j = j/N`; quadrature is the N-point periodic trapezoid rule, which is
//! exact for modes `|q| < N`.
//!
//! `N >= 2*(2K+1)` is enforced so that pointwise products of two fields with
//! modes up to `K` (and hence all densities built from basis pairs) are
//! captured without aliasing.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("collocation count {n} is below the dealiasing minimum 2*(2K+1) = {min} for K = {k}")]
    TooFewNodes { k: usize, n: usize, min: usize },
    #[error("field has {actual} samples but the grid has {expected} nodes")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("operation requires a real-valued field; imaginary magnitude {imag:.3e} exceeds {tol:.3e}")]
    NotReal { imag: f64, tol: f64 },
}

/// Truncated plane-wave basis with its collocation grid and quadrature.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    k_max: usize,
    n_points: usize,
    modes: Vec<i64>,
    gamma: Vec<f64>,
    nodes: Vec<f64>,
    /// N-th roots of unity, `unity[m] = exp(2*pi*i*m/N)`.
    unity: Vec<Complex64>,
}

impl SpectralGrid {
    /// Builds the grid for mode cutoff `K >= 0` and `N` collocation points.
    pub fn new(k_max: usize, n_points: usize) -> Result<Self, GridError> {
        let dim = 2 * k_max + 1;
        if n_points < 2 * dim {
            return Err(GridError::TooFewNodes {
                k: k_max,
                n: n_points,
                min: 2 * dim,
            });
        }
        let mut modes = Vec::with_capacity(dim);
        modes.push(0i64);
        for j in 1..=k_max as i64 {
            modes.push(j);
            modes.push(-j);
        }
        let gamma = modes
            .iter()
            .map(|&k| 2.0 * std::f64::consts::PI.powi(2) * (k * k) as f64)
            .collect();
        let nodes = (0..n_points).map(|j| j as f64 / n_points as f64).collect();
        let unity = (0..n_points)
            .map(|m| Complex64::cis(2.0 * std::f64::consts::PI * m as f64 / n_points as f64))
            .collect();
        Ok(Self {
            k_max,
            n_points,
            modes,
            gamma,
            nodes,
            unity,
        })
    }

    /// Builds the grid with the default collocation count: the smallest
    /// 5-smooth integer at least `3*(2K+1)`. The factor 3 leaves headroom over
    /// the dealiasing minimum `2D` for products with the potential.
    pub fn with_default_nodes(k_max: usize) -> Self {
        let dim = 2 * k_max + 1;
        let mut n = 3 * dim;
        while !five_smooth(n) {
            n += 1;
        }
        Self::new(k_max, n).expect("3D >= 2D")
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Basis dimension `D = 2K + 1`.
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Modes in the fixed order `(0, +1, -1, +2, -2, ...)`.
    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    /// Free-Hamiltonian eigenvalues `gamma(k) = 2*pi^2*k^2`, aligned with
    /// [`Self::modes`].
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Position of mode `k` in the basis ordering, if `|k| <= K`.
    pub fn mode_index(&self, k: i64) -> Option<usize> {
        if k == 0 {
            Some(0)
        } else if k.unsigned_abs() as usize <= self.k_max {
            let j = k.unsigned_abs() as usize;
            Some(if k > 0 { 2 * j - 1 } else { 2 * j })
        } else {
            None
        }
    }

    /// `exp(2*pi*i*e/N)` from the cached root table.
    #[inline]
    fn root(&self, e: i64) -> Complex64 {
        self.unity[e.rem_euclid(self.n_points as i64) as usize]
    }

    fn check_len(&self, len: usize) -> Result<(), GridError> {
        if len != self.n_points {
            return Err(GridError::ShapeMismatch {
                expected: self.n_points,
                actual: len,
            });
        }
        Ok(())
    }

    /// Quadrature Fourier coefficient `(1/N) sum_j f(x_j) exp(-2*pi*i*q*x_j)`;
    /// exact for fields band-limited below `N - |q|`.
    pub fn fourier_mode(&self, values: &[Complex64], q: i64) -> Result<Complex64, GridError> {
        self.check_len(values.len())?;
        let mut acc = Complex64::ZERO;
        for (j, v) in values.iter().enumerate() {
            acc += v * self.root(-q * j as i64);
        }
        Ok(acc / self.n_points as f64)
    }

    /// Coefficients of the `D` retained basis modes, in grid order.
    pub fn analyze(&self, values: &[Complex64]) -> Result<Vec<Complex64>, GridError> {
        self.check_len(values.len())?;
        self.modes
            .iter()
            .map(|&k| self.fourier_mode(values, k))
            .collect()
    }

    /// Evaluates a coefficient vector (grid order) on the collocation nodes.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.dim(), "coefficient vector has wrong length");
        (0..self.n_points)
            .map(|j| {
                let mut acc = Complex64::ZERO;
                for (idx, &k) in self.modes.iter().enumerate() {
                    acc += coeffs[idx] * self.root(k * j as i64);
                }
                acc
            })
            .collect()
    }

    /// Full-bin forward DFT (coefficients indexed by bin `m = 0..N-1`).
    fn dft(&self, values: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_points;
        (0..n)
            .map(|m| {
                let mut acc = Complex64::ZERO;
                for (j, v) in values.iter().enumerate() {
                    acc += v * self.root(-(m as i64) * j as i64);
                }
                acc / n as f64
            })
            .collect()
    }

    fn idft(&self, bins: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_points;
        (0..n)
            .map(|j| {
                let mut acc = Complex64::ZERO;
                for (m, c) in bins.iter().enumerate() {
                    acc += c * self.root(m as i64 * j as i64);
                }
                acc
            })
            .collect()
    }

    /// Signed mode of DFT bin `m`.
    fn bin_mode(&self, m: usize) -> i64 {
        let n = self.n_points as i64;
        let m = m as i64;
        if 2 * m <= n {
            m
        } else {
            m - n
        }
    }

    fn apply_symbol(&self, f: &FieldSample, symbol: impl Fn(i64) -> Complex64) -> FieldSample {
        let mut bins = self.dft(&f.values);
        for (m, b) in bins.iter_mut().enumerate() {
            *b *= symbol(self.bin_mode(m));
        }
        FieldSample {
            values: self.idft(&bins),
            parity: f.parity,
        }
    }

    /// Spectral derivative: multiply mode `q` by `2*pi*i*q`. Exact for fields
    /// band-limited below `N/2`; the unpaired Nyquist bin (even `N`) gets the
    /// zero symbol of its real representative.
    pub fn differentiate(&self, f: &FieldSample) -> Result<FieldSample, GridError> {
        self.check_len(f.len())?;
        let n = self.n_points as i64;
        Ok(self.apply_symbol(f, |q| {
            if 2 * q == n {
                Complex64::ZERO
            } else {
                Complex64::new(0.0, 2.0 * std::f64::consts::PI * q as f64)
            }
        }))
    }

    /// Spectral Laplacian: multiply mode `q` by `-(2*pi*q)^2`.
    pub fn laplacian(&self, f: &FieldSample) -> Result<FieldSample, GridError> {
        self.check_len(f.len())?;
        Ok(self.apply_symbol(f, |q| {
            let w = 2.0 * std::f64::consts::PI * q as f64;
            Complex64::new(-w * w, 0.0)
        }))
    }

    /// Periodic trapezoid quadrature `(1/N) sum_j f(x_j)`.
    pub fn integrate(&self, f: &FieldSample) -> Result<Complex64, GridError> {
        self.check_len(f.len())?;
        Ok(f.values.iter().sum::<Complex64>() / self.n_points as f64)
    }

    /// `sqrt((1/N) sum_j |f(x_j)|^2)`, the quadrature L2 norm.
    pub fn l2_norm(&self, f: &FieldSample) -> Result<f64, GridError> {
        self.check_len(f.len())?;
        let s: f64 = f.values.iter().map(|v| v.norm_sqr()).sum();
        Ok((s / self.n_points as f64).sqrt())
    }
}

fn five_smooth(mut n: usize) -> bool {
    if n == 0 {
        return false;
    }
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Parity tag of a [`FieldSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Real,
    Complex,
}

/// A periodic function sampled on the collocation nodes.
#[derive(Debug, Clone)]
pub struct FieldSample {
    values: Vec<Complex64>,
    parity: Parity,
}

impl FieldSample {
    pub fn constant(grid: &SpectralGrid, value: f64) -> Self {
        Self {
            values: vec![Complex64::new(value, 0.0); grid.n_points()],
            parity: Parity::Real,
        }
    }

    /// `mean + sum_j amplitudes[j] * cos(2*pi*(j+1)*x)` sampled on the nodes.
    pub fn cosine_series(grid: &SpectralGrid, mean: f64, amplitudes: &[f64]) -> Self {
        Self::from_real_fn(grid, |x| {
            let mut v = mean;
            for (j, &a) in amplitudes.iter().enumerate() {
                v += a * (2.0 * std::f64::consts::PI * (j + 1) as f64 * x).cos();
            }
            v
        })
    }

    /// Samples a real-valued function of `x` on the grid nodes.
    pub fn from_real_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid
                .nodes()
                .iter()
                .map(|&x| Complex64::new(f(x), 0.0))
                .collect(),
            parity: Parity::Real,
        }
    }

    pub fn from_real_samples(grid: &SpectralGrid, samples: &[f64]) -> Result<Self, GridError> {
        grid.check_len(samples.len())?;
        Ok(Self {
            values: samples.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            parity: Parity::Real,
        })
    }

    pub fn from_complex_samples(grid: &SpectralGrid, values: Vec<Complex64>) -> Result<Self, GridError> {
        grid.check_len(values.len())?;
        Ok(Self {
            values,
            parity: Parity::Complex,
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn is_real_tagged(&self) -> bool {
        self.parity == Parity::Real
    }

    /// Largest imaginary magnitude over the nodes.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    /// Real parts of the samples.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    /// Verifies the real tag numerically: imaginary parts must stay below
    /// `tol * max(1, max |f|)`.
    pub fn ensure_real(&self, tol: f64) -> Result<(), GridError> {
        let bound = tol * 1.0f64.max(self.max_abs());
        let imag = self.max_imag();
        if self.parity != Parity::Real || imag > bound {
            return Err(GridError::NotReal { imag, tol: bound });
        }
        Ok(())
    }

    /// Discards roundoff-size imaginary parts, keeping the real tag honest.
    pub fn into_real(mut self) -> Self {
        for v in &mut self.values {
            v.im = 0.0;
        }
        self.parity = Parity::Real;
        self
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, other: &FieldSample, scale: f64) -> FieldSample {
        assert_eq!(self.len(), other.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b * scale)
            .collect();
        let parity = if self.parity == Parity::Real && other.parity == Parity::Real {
            Parity::Real
        } else {
            Parity::Complex
        };
        FieldSample { values, parity }
    }

    pub fn sub(&self, other: &FieldSample) -> FieldSample {
        self.add_scaled(other, -1.0)
    }

    pub fn scale(&self, s: f64) -> FieldSample {
        FieldSample {
            values: self.values.iter().map(|v| v * s).collect(),
            parity: self.parity,
        }
    }
}
