//! Periodic dyadic blocks `Δ_j f = (φ(2^{−j}k) f̂(k))^∨` and Besov norms.

use super::{norm_sq, Lattice, Result, SpectralError, SpectralField, Transform};

fn mollifier(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 1 on `[0, 1]`, 0 on `[2, ∞)`.
fn low_pass(r: f64) -> f64 {
    let a = mollifier(2.0 - r);
    let b = mollifier(r - 1.0);
    a / (a + b)
}

/// Radial profile `ψ(r) = χ(r) − χ(2r)` of the dyadic cutoff, supported in
/// `[1/2, 2]` and valued in `[0, 1]`.
///
/// The blocks telescope, so `Σ_j ψ(2^{−j} r) = 1` for every `r > 0` and at
/// most two consecutive blocks overlap.
pub fn dyadic_profile(r: f64) -> f64 {
    if r <= 0.5 || r >= 2.0 {
        return 0.0;
    }
    (low_pass(r) - low_pass(2.0 * r)).clamp(0.0, 1.0)
}

/// Dyadic shell decomposition of a lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellDecomposition {
    lattice: Lattice,
    j_min: i32,
    j_max: i32,
}

impl ShellDecomposition {
    pub fn new(lattice: Lattice) -> Self {
        let kmax = lattice
            .dims()
            .iter()
            .map(|&n| ((n / 2) * (n / 2)) as f64)
            .sum::<f64>()
            .sqrt();
        // |k| ≥ 1 on nonzero modes, so blocks j < 0 are empty.
        let j_max = (2.0 * kmax).log2().ceil() as i32;
        Self {
            lattice,
            j_min: 0,
            j_max,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn block_range(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    #[inline]
    pub fn weight(&self, j: i32, k_norm: f64) -> f64 {
        dyadic_profile(k_norm * 2f64.powi(-j))
    }

    /// `Δ_j f`.
    pub fn shell_project(&self, f: &SpectralField, j: i32) -> Result<SpectralField> {
        self.check(f)?;
        let mut out = f.clone();
        for (flat, c) in out.coeffs_mut().iter_mut().enumerate() {
            let k = self.lattice.wavevector(flat);
            *c *= self.weight(j, norm_sq(k).sqrt());
        }
        Ok(out)
    }

    /// `max_{k≠0} |Σ_j φ(2^{−j}k) − 1|` over the lattice.
    pub fn partition_defect(&self) -> f64 {
        self.lattice
            .modes()
            .skip(1)
            .map(|(_, k)| {
                let r = norm_sq(k).sqrt();
                let total: f64 = self.block_range().map(|j| self.weight(j, r)).sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `‖Δ_j f‖_{L^p}` for each block, in block order.
    pub fn block_norms(&self, f: &SpectralField, p: f64) -> Result<Vec<f64>> {
        check_exponent("p", p)?;
        self.check(f)?;
        let mut transform = (p != 2.0).then(|| Transform::new(self.lattice));
        self.block_range()
            .map(|j| {
                let block = self.shell_project(f, j)?;
                match transform.as_mut() {
                    None => Ok(block.l2_norm()),
                    Some(t) => {
                        let samples = t.inverse(&block)?;
                        Ok(lebesgue_norm(&samples, p))
                    }
                }
            })
            .collect()
    }

    /// `‖ 2^{js} ‖Δ_j f‖_{L^p} ‖_{ℓ^q}`. Use `f64::INFINITY` for `p` or `q = ∞`.
    pub fn besov_norm(&self, f: &SpectralField, s: f64, p: f64, q: f64) -> Result<f64> {
        check_exponent("q", q)?;
        let norms = self.block_norms(f, p)?;
        let weighted = self
            .block_range()
            .zip(norms)
            .map(|(j, n)| 2f64.powf(j as f64 * s) * n);
        Ok(sequence_norm(weighted, q))
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if f.lattice() != self.lattice {
            return Err(SpectralError::LatticeMismatch(
                self.lattice.dims(),
                f.lattice().dims(),
            ));
        }
        Ok(())
    }
}

fn check_exponent(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() || value < 1.0 {
        return Err(SpectralError::InvalidLebesgueExponent { name, value });
    }
    Ok(())
}

/// Grid-quadrature `L^p` norm with respect to the normalised measure.
pub(crate) fn lebesgue_norm(samples: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
    }
    let mean = samples.iter().map(|v| v.abs().powf(p)).sum::<f64>() / samples.len() as f64;
    mean.powf(1.0 / p)
}

fn sequence_norm(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}
