//! Lattice bookkeeping, spectral fields and Fourier-space operators on the
//! periodic box `[0, 2π]³`.
//!
//! Coefficients use the normalised convention
//!
//! ```text
//! f(x) = Σ_k f̂(k) e^{ik·x},      Σ_k |f̂(k)|² = (2π)⁻³ ∫ f² dx,
//! ```
//!
//! so every "L² norm" in this crate is taken with respect to the probability
//! measure `dx / (2π)³`. Norms, energies and inner products built on top of
//! this module inherit that normalisation.

mod shells;
mod transform;

pub use shells::{dyadic_profile, ShellDecomposition};
pub use transform::{forward_transform, inverse_transform, Transform};

use num_complex::Complex64;
use thiserror::Error;

/// Integer wavevector `(k₁, k₂, k₃)`.
pub type Wavevector = [i64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {size} on axis {axis} must be even and at least 8")]
    InvalidGridSize { axis: usize, size: usize },
    #[error("sample array has {found} values, lattice expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lattice mismatch: {0:?} vs {1:?}")]
    LatticeMismatch([usize; 3], [usize; 3]),
    #[error("Sobolev exponent must be non-negative, got {0}")]
    NegativeExponent(f64),
    #[error("Lebesgue exponent {name} = {value} is outside [1, inf]")]
    InvalidLebesgueExponent { name: &'static str, value: f64 },
    #[error("wavevector {0:?} is outside the lattice")]
    OutOfRange(Wavevector),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// The `N₁ × N₂ × N₃` Fourier lattice on the 2π-periodic box.
///
/// Storage is row-major with axis 3 fastest; index `i` along an axis holds
/// wavenumber `i` for `i ≤ N/2` and `i − N` otherwise, so stored wavenumbers
/// lie in `[−N/2 + 1, N/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    dims: [usize; 3],
}

impl Lattice {
    pub fn new(dims: [usize; 3]) -> Result<Self> {
        for (axis, &size) in dims.iter().enumerate() {
            if size < 8 || size % 2 != 0 {
                return Err(SpectralError::InvalidGridSize { axis, size });
            }
        }
        Ok(Self { dims })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new([n, n, n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of stored modes (equal to the number of grid points).
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let i3 = flat % self.dims[2];
        let rest = flat / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], i3]
    }

    #[inline]
    pub fn wavenumber(&self, axis: usize, i: usize) -> i64 {
        let n = self.dims[axis];
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    #[inline]
    pub fn wavevector(&self, flat: usize) -> Wavevector {
        let idx = self.unflatten(flat);
        [
            self.wavenumber(0, idx[0]),
            self.wavenumber(1, idx[1]),
            self.wavenumber(2, idx[2]),
        ]
    }

    /// Whether `k` lies in the stored range `[−N/2 + 1, N/2]` on every axis.
    pub fn contains(&self, k: Wavevector) -> bool {
        k.iter().zip(self.dims).all(|(&ki, n)| {
            let half = (n / 2) as i64;
            ki > -half && ki <= half
        })
    }

    pub fn index_of(&self, k: Wavevector) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let n = self.dims[axis] as i64;
            idx[axis] = k[axis].rem_euclid(n) as usize;
        }
        Some(self.flat_index(idx))
    }

    /// Storage index of `−k` (taken modulo the lattice, so Nyquist planes map
    /// onto themselves).
    #[inline]
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let idx = self.unflatten(flat);
        let mut neg = [0usize; 3];
        for axis in 0..3 {
            let n = self.dims[axis];
            neg[axis] = (n - idx[axis]) % n;
        }
        self.flat_index(neg)
    }

    #[inline]
    pub fn is_nyquist(&self, axis: usize, i: usize) -> bool {
        i == self.dims[axis] / 2
    }

    /// Iterates `(storage index, wavevector)` over every stored mode.
    pub fn modes(&self) -> impl Iterator<Item = (usize, Wavevector)> + '_ {
        (0..self.len()).map(move |flat| (flat, self.wavevector(flat)))
    }

    /// Smallest grid spacing `2π / N` over the three axes.
    pub fn grid_spacing(&self) -> f64 {
        let n = *self.dims.iter().max().unwrap() as f64;
        2.0 * std::f64::consts::PI / n
    }

    /// Largest `|k|²` retained by the 2/3 rule.
    pub fn dealiased_kmax_sq(&self) -> f64 {
        self.dims
            .iter()
            .map(|&n| {
                let kc = (n / 3) as f64;
                kc * kc
            })
            .sum()
    }

    /// Physical grid coordinates of a storage index.
    pub fn grid_point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; 3];
        for axis in 0..3 {
            x[axis] = 2.0 * std::f64::consts::PI * idx[axis] as f64 / self.dims[axis] as f64;
        }
        x
    }
}

#[inline]
pub fn norm_sq(k: Wavevector) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
}

/// Complex Fourier coefficients of a real scalar field on a [`Lattice`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: Lattice) -> Self {
        Self {
            lattice,
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.len()],
        }
    }

    pub fn from_coeffs(lattice: Lattice, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: lattice.len(),
                found: coeffs.len(),
            });
        }
        Ok(Self { lattice, coeffs })
    }

    /// Field with coefficient `c` at `k` and `conj(c)` at `−k`.
    pub fn mode_pair(lattice: Lattice, k: Wavevector, c: Complex64) -> Result<Self> {
        let mut field = Self::zeros(lattice);
        field.add_mode_pair(k, c)?;
        Ok(field)
    }

    /// Adds `c` at `k` and `conj(c)` at `−k`. A self-conjugate mode receives
    /// `Re c`.
    pub fn add_mode_pair(&mut self, k: Wavevector, c: Complex64) -> Result<()> {
        let idx = self
            .lattice
            .index_of(k)
            .ok_or(SpectralError::OutOfRange(k))?;
        let conj_idx = self.lattice.conjugate_index(idx);
        if conj_idx == idx {
            self.coeffs[idx] += Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[idx] += c;
            self.coeffs[conj_idx] += c.conj();
        }
        Ok(())
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at `k`; zero for wavevectors outside the lattice.
    pub fn get(&self, k: Wavevector) -> Complex64 {
        self.lattice
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn set(&mut self, k: Wavevector, c: Complex64) -> Result<()> {
        let idx = self
            .lattice
            .index_of(k)
            .ok_or(SpectralError::OutOfRange(k))?;
        self.coeffs[idx] = c;
        Ok(())
    }

    pub fn check_same_lattice(&self, other: &Self) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(SpectralError::LatticeMismatch(
                self.lattice.dims(),
                other.lattice.dims(),
            ));
        }
        Ok(())
    }

    /// `max_k |f̂(−k) − conj f̂(k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| {
                let j = self.lattice.conjugate_index(i);
                (self.coeffs[j] - self.coeffs[i].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Replaces the field by its Hermitian part `(f̂(k) + conj f̂(−k)) / 2`.
    pub fn symmetrize(&mut self) {
        let [n1, n2, n3] = self.lattice.dims();
        let neg = |i: usize, n: usize| if i == 0 { 0 } else { n - i };
        for i1 in 0..n1 {
            let j1 = neg(i1, n1);
            for i2 in 0..n2 {
                let j2 = neg(i2, n2);
                let (row, conj_row) = ((i1 * n2 + i2) * n3, (j1 * n2 + j2) * n3);
                for i3 in 0..n3 {
                    let (i, j) = (row + i3, conj_row + neg(i3, n3));
                    if j < i {
                        continue;
                    }
                    let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
                    self.coeffs[i] = avg;
                    self.coeffs[j] = avg.conj();
                }
            }
        }
    }

    /// Largest coefficient magnitude on the `k₃ = 0` plane.
    pub fn gauge_violation(&self) -> f64 {
        let n3 = self.lattice.dims()[2];
        self.coeffs
            .iter()
            .step_by(n3)
            .map(|c| c.norm_sqr())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max).sqrt()
    }

    /// Normalised L² norm `(Σ_k |f̂(k)|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Normalised inner product `(2π)⁻³ ∫ f g dx = Re Σ_k f̂(k) conj ĝ(k)`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.lattice, other.lattice);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// 2/3-rule truncation: zeroes every mode with some `|k_i| > N_i / 3`.
    pub fn dealias(&self) -> Self {
        let mut out = self.clone();
        out.dealias_in_place();
        out
    }

    pub fn dealias_in_place(&mut self) {
        let lattice = self.lattice;
        let dims = lattice.dims();
        for (flat, c) in self.coeffs.iter_mut().enumerate() {
            let k = lattice.wavevector(flat);
            if (0..3).any(|a| 3 * k[a].unsigned_abs() as usize > dims[a]) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Zeroes the `k₃ = 0` plane (zero mean in `x₃`).
    pub fn project_mg_gauge(&self) -> Self {
        let mut out = self.clone();
        out.project_mg_gauge_in_place();
        out
    }

    pub fn project_mg_gauge_in_place(&mut self) {
        let n3 = self.lattice.dims()[2];
        for c in self.coeffs.iter_mut().step_by(n3) {
            *c = Complex64::new(0.0, 0.0);
        }
    }

    /// Spectral gradient `(i k_j f̂(k))_j`. Nyquist wavenumbers differentiate
    /// to zero so that each component stays Hermitian.
    pub fn gradient(&self) -> [Self; 3] {
        let lattice = self.lattice;
        let mut out = [self.clone(), self.clone(), self.clone()];
        for (flat, &c) in self.coeffs.iter().enumerate() {
            let idx = lattice.unflatten(flat);
            for axis in 0..3 {
                let kj = if lattice.is_nyquist(axis, idx[axis]) {
                    0.0
                } else {
                    lattice.wavenumber(axis, idx[axis]) as f64
                };
                out[axis].coeffs[flat] = Complex64::new(0.0, kj) * c;
            }
        }
        out
    }

    /// `κ`-free Dirichlet energy `‖∇f‖² = Σ_k |k|² |f̂(k)|²` (Nyquist
    /// components excluded, consistent with [`Self::gradient`]).
    pub fn gradient_norm_sq(&self) -> f64 {
        let lattice = self.lattice;
        let [n1, n2, n3] = lattice.dims();
        let sq = |axis: usize, i: usize| {
            if lattice.is_nyquist(axis, i) {
                0.0
            } else {
                (lattice.wavenumber(axis, i) as f64).powi(2)
            }
        };
        let k3sq: Vec<f64> = (0..n3).map(|i| sq(2, i)).collect();
        let mut total = 0.0;
        for i1 in 0..n1 {
            let a = sq(0, i1);
            for i2 in 0..n2 {
                let ab = a + sq(1, i2);
                let row = &self.coeffs[(i1 * n2 + i2) * n3..(i1 * n2 + i2 + 1) * n3];
                for (c, k3) in row.iter().zip(&k3sq) {
                    total += (ab + k3) * c.norm_sqr();
                }
            }
        }
        total
    }

    /// Homogeneous Sobolev norm `(Σ_{k≠0} |k|^{2s} |f̂(k)|²)^{1/2}` for `s ≥ 0`.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(SpectralError::NegativeExponent(s));
        }
        Ok(self.homogeneous_norm(s))
    }

    /// Homogeneous norm of any real order; negative orders give the dual
    /// norms such as `H⁻¹`.
    pub fn homogeneous_norm(&self, s: f64) -> f64 {
        let lattice = self.lattice;
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(flat, c)| {
                let k2 = norm_sq(lattice.wavevector(flat));
                k2.powf(s) * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.lattice, other.lattice);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same_lattice(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}
