use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Lattice, Result, SpectralError, SpectralField};

/// Reusable 3-D FFT plan with its own scratch space.
///
/// A plan is not shared across threads; each worker builds its own.
pub struct Transform {
    lattice: Lattice,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("lattice", &self.lattice)
            .finish()
    }
}

impl Clone for Transform {
    fn clone(&self) -> Self {
        Self::new(self.lattice)
    }
}

impl Transform {
    pub fn new(lattice: Lattice) -> Self {
        let mut planner = FftPlanner::new();
        let dims = lattice.dims();
        let forward = dims.map(|n| planner.plan_fft_forward(n));
        let inverse = dims.map(|n| planner.plan_fft_inverse(n));
        let scratch_len = forward
            .iter()
            .chain(inverse.iter())
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            lattice,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            lines: vec![Complex64::default(); lattice.len()],
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    /// Grid samples to normalised Fourier coefficients,
    /// `f̂(k) = N⁻³ Σ_x f(x) e^{−ik·x}`.
    pub fn forward(&mut self, samples: &[f64]) -> Result<SpectralField> {
        self.check_len(samples.len())?;
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        let norm = 1.0 / self.lattice.len() as f64;
        for c in &mut buf {
            *c *= norm;
        }
        SpectralField::from_coeffs(self.lattice, buf)
    }

    /// Forward transform of two real fields packed as `a + i b`.
    pub fn forward_pair(&mut self, a: &[f64], b: &[f64]) -> Result<(SpectralField, SpectralField)> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward_in_place(&mut buf);
        let norm = 0.5 / self.lattice.len() as f64;
        let mut fa = vec![Complex64::default(); buf.len()];
        let mut fb = vec![Complex64::default(); buf.len()];
        for i in 0..buf.len() {
            let j = self.lattice.conjugate_index(i);
            let z = buf[i];
            let zc = buf[j].conj();
            fa[i] = (z + zc) * norm;
            fb[i] = (z - zc) * Complex64::new(0.0, -norm);
        }
        Ok((
            SpectralField::from_coeffs(self.lattice, fa)?,
            SpectralField::from_coeffs(self.lattice, fb)?,
        ))
    }

    /// Real grid samples of a (Hermitian) field.
    pub fn inverse(&mut self, field: &SpectralField) -> Result<Vec<f64>> {
        Ok(self.inverse_complex(field)?.into_iter().map(|z| z.re).collect())
    }

    /// Complex grid samples; the imaginary part measures the departure from
    /// Hermitian symmetry.
    pub fn inverse_complex(&mut self, field: &SpectralField) -> Result<Vec<Complex64>> {
        self.check_lattice(field)?;
        let mut buf = field.coeffs().to_vec();
        self.inverse_in_place(&mut buf);
        Ok(buf)
    }

    /// Inverse transform of two Hermitian fields with a single complex FFT.
    pub fn inverse_pair(&mut self, a: &SpectralField, b: &SpectralField) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_lattice(a)?;
        self.check_lattice(b)?;
        let mut buf: Vec<Complex64> = a
            .coeffs()
            .iter()
            .zip(b.coeffs())
            .map(|(x, y)| x + Complex64::new(0.0, 1.0) * y)
            .collect();
        self.inverse_in_place(&mut buf);
        Ok(buf.into_iter().map(|z| (z.re, z.im)).unzip())
    }

    /// Unnormalised in-place forward DFT over all three axes.
    pub fn forward_in_place(&mut self, buf: &mut [Complex64]) {
        for axis in (0..3).rev() {
            let plan = Arc::clone(&self.forward[axis]);
            self.along_axis(buf, axis, plan.as_ref());
        }
    }

    /// Unnormalised in-place inverse DFT over all three axes.
    pub fn inverse_in_place(&mut self, buf: &mut [Complex64]) {
        for axis in (0..3).rev() {
            let plan = Arc::clone(&self.inverse[axis]);
            self.along_axis(buf, axis, plan.as_ref());
        }
    }

    fn along_axis(&mut self, buf: &mut [Complex64], axis: usize, plan: &dyn Fft<f64>) {
        let [n1, n2, n3] = self.lattice.dims();
        let lines = &mut self.lines;
        match axis {
            2 => plan.process_with_scratch(buf, &mut self.scratch),
            1 => {
                let plane = n2 * n3;
                for src in buf.chunks_exact_mut(plane) {
                    transpose::transpose(src, &mut lines[..plane], n3, n2);
                    plan.process_with_scratch(&mut lines[..plane], &mut self.scratch);
                    transpose::transpose(&lines[..plane], src, n2, n3);
                }
            }
            _ => {
                let plane = n2 * n3;
                transpose::transpose(buf, lines, plane, n1);
                plan.process_with_scratch(lines, &mut self.scratch);
                transpose::transpose(lines, buf, n1, plane);
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.lattice.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.lattice.len(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_lattice(&self, field: &SpectralField) -> Result<()> {
        if field.lattice() != self.lattice {
            return Err(SpectralError::LatticeMismatch(
                self.lattice.dims(),
                field.lattice().dims(),
            ));
        }
        Ok(())
    }
}

/// One-shot forward transform; builds a throwaway plan.
pub fn forward_transform(lattice: Lattice, samples: &[f64]) -> Result<SpectralField> {
    Transform::new(lattice).forward(samples)
}

/// One-shot inverse transform; builds a throwaway plan.
pub fn inverse_transform(field: &SpectralField) -> Result<Vec<f64>> {
    Transform::new(field.lattice()).inverse(field)
}
