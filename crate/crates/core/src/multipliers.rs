//! The constitutive law `u = M^ν[θ]` of the magneto-geostrophic equation,
//! the associated family `T^ν_ij = −∂_i(−Δ)⁻¹ M^ν_j`, and lattice audits of the
//! structural conditions the symbols must satisfy.
//!
//! ```text
//! M̂₁ = [k₂k₃|k|² − k₁k₃(k₂² + ν|k|⁴)] / D(k)
//! M̂₂ = [−k₁k₃|k|² − k₂k₃(k₂² + ν|k|⁴)] / D(k)
//! M̂₃ = [(k₁² + k₂²)(k₂² + ν|k|⁴)] / D(k)
//! D(k) = |k|²k₃² + (k₂² + ν|k|⁴)²
//! ```
//!
//! Modes with `k₃ = 0` are outside the MG gauge; their symbol is taken to be 0.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::spectral::{norm_sq, SpectralField, Wavevector};

/// Denominator floor for relative residuals.
pub const EPS_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiplierError {
    #[error("gauge violation: wavevector {0:?} has k3 = 0")]
    GaugeViolation(Wavevector),
    #[error("field violates the MG gauge (k3 = 0 plane carries {0:e})")]
    FieldGaugeViolation(f64),
    #[error("the zero wavevector has no multiplier")]
    ZeroMode,
    #[error("viscosity {0} is outside the admissible range")]
    InvalidViscosity(f64),
    #[error("axis index {0} is not in 1..=3")]
    InvalidAxis(usize),
}

pub type Result<T> = std::result::Result<T, MultiplierError>;

/// The MG symbol at a fixed viscosity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgSymbol {
    nu: f64,
}

impl MgSymbol {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(MultiplierError::InvalidViscosity(nu));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `D(k) = |k|²k₃² + (k₂² + ν|k|⁴)²`.
    pub fn denominator(&self, k: Wavevector) -> f64 {
        let k2 = norm_sq(k);
        let k3 = k[2] as f64;
        let a = (k[1] * k[1]) as f64 + self.nu * k2 * k2;
        k2 * k3 * k3 + a * a
    }

    /// `(M̂₁, M̂₂, M̂₃)(k)`; rejects `k₃ = 0`.
    pub fn eval(&self, k: Wavevector) -> Result<[f64; 3]> {
        if k == [0, 0, 0] {
            return Err(MultiplierError::ZeroMode);
        }
        if k[2] == 0 {
            return Err(MultiplierError::GaugeViolation(k));
        }
        Ok(self.eval_unchecked(k))
    }

    /// Symbol with the gauge convention applied: 0 whenever `k₃ = 0`.
    #[inline]
    pub fn value(&self, k: Wavevector) -> [f64; 3] {
        if k[2] == 0 {
            [0.0; 3]
        } else {
            self.eval_unchecked(k)
        }
    }

    #[inline]
    fn eval_unchecked(&self, k: Wavevector) -> [f64; 3] {
        let [k1, k2, k3] = k.map(|c| c as f64);
        let ksq = k1 * k1 + k2 * k2 + k3 * k3;
        let a = k2 * k2 + self.nu * ksq * ksq;
        let d = ksq * k3 * k3 + a * a;
        [
            (k2 * k3 * ksq - k1 * k3 * a) / d,
            (-k1 * k3 * ksq - k2 * k3 * a) / d,
            ((k1 * k1 + k2 * k2) * a) / d,
        ]
    }

    /// `T̂_ij(k) = −i k_i M̂_j(k) / |k|²`, axes numbered 1..=3.
    pub fn t_symbol(&self, k: Wavevector, i: usize, j: usize) -> Result<Complex64> {
        if !(1..=3).contains(&i) {
            return Err(MultiplierError::InvalidAxis(i));
        }
        if !(1..=3).contains(&j) {
            return Err(MultiplierError::InvalidAxis(j));
        }
        let m = self.eval(k)?;
        let ki = k[i - 1] as f64;
        Ok(Complex64::new(0.0, -ki * m[j - 1] / norm_sq(k)))
    }
}

/// A viscosity-indexed family of velocity symbols.
pub trait MultiplierFamily: Send + Sync {
    fn name(&self) -> &'static str;

    /// Real, even velocity symbol at `k`, zero on gauge modes.
    fn velocity_symbol(&self, k: Wavevector, nu: f64) -> [f64; 3];

    /// `T̂_ij(k) = −i k_i M̂_j(k) / |k|²`.
    fn t_symbol(&self, k: Wavevector, nu: f64, i: usize, j: usize) -> Result<Complex64> {
        if k == [0, 0, 0] {
            return Err(MultiplierError::ZeroMode);
        }
        if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
            return Err(MultiplierError::InvalidAxis(i.max(j)));
        }
        let m = self.velocity_symbol(k, nu);
        Ok(Complex64::new(0.0, -(k[i - 1] as f64) * m[j - 1] / norm_sq(k)))
    }
}

/// The magneto-geostrophic family `ν ↦ M̂^ν`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MgFamily;

impl MultiplierFamily for MgFamily {
    fn name(&self) -> &'static str {
        "mg"
    }

    fn velocity_symbol(&self, k: Wavevector, nu: f64) -> [f64; 3] {
        MgSymbol { nu }.value(k)
    }
}

/// Passive (zero-velocity) family; turns the solver into a forced heat
/// equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFamily;

impl MultiplierFamily for ZeroFamily {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn velocity_symbol(&self, _k: Wavevector, _nu: f64) -> [f64; 3] {
        [0.0; 3]
    }
}

/// Checks the MG gauge on a field, allowing round-off relative to its size.
pub fn check_gauge(theta: &SpectralField) -> Result<()> {
    let violation = theta.gauge_violation();
    if violation > 1e-12 * theta.max_abs().max(f64::MIN_POSITIVE) {
        return Err(MultiplierError::FieldGaugeViolation(violation));
    }
    Ok(())
}

/// `û_j(k) = M̂^ν_j(k) θ̂(k)`.
pub fn apply_velocity(theta: &SpectralField, nu: f64) -> Result<[SpectralField; 3]> {
    let symbol = MgSymbol::new(nu)?;
    check_gauge(theta)?;
    Ok(apply_symbol(theta, |k| symbol.value(k)))
}

pub(crate) fn apply_symbol(
    theta: &SpectralField,
    symbol: impl Fn(Wavevector) -> [f64; 3],
) -> [SpectralField; 3] {
    let lattice = theta.lattice();
    let mut out = [theta.clone(), theta.clone(), theta.clone()];
    for (flat, &c) in theta.coeffs().iter().enumerate() {
        let m = symbol(lattice.wavevector(flat));
        for axis in 0..3 {
            out[axis].coeffs_mut()[flat] = c * m[axis];
        }
    }
    out
}

/// Wavevectors with `0 < |k|∞ ≤ K` and `k₃ ≠ 0`, grouped by `k₁` for
/// parallel reduction.
fn scan_window<T, F, R>(window: i64, init: T, per_k: F, reduce: R) -> T
where
    T: Send + Sync + Clone,
    F: Fn(&mut T, Wavevector) + Send + Sync,
    R: Fn(T, T) -> T + Send + Sync,
{
    (-window..=window)
        .into_par_iter()
        .map(|k1| {
            let mut acc = init.clone();
            for k2 in -window..=window {
                for k3 in -window..=window {
                    if k3 != 0 {
                        per_k(&mut acc, [k1, k2, k3]);
                    }
                }
            }
            acc
        })
        .reduce(|| init.clone(), reduce)
}

/// Largest relative divergence `|k·M̂(k)| / (|k| max_j |M̂_j(k)| + ε)` over
/// `0 < |k|∞ ≤ K`, `k₃ ≠ 0`.
pub fn audit_divergence_free(nu: f64, window: i64) -> Result<f64> {
    let symbol = MgSymbol::new(nu)?;
    Ok(scan_window(
        window,
        0.0f64,
        |acc, k| {
            let m = symbol.value(k);
            let div = k[0] as f64 * m[0] + k[1] as f64 * m[1] + k[2] as f64 * m[2];
            let scale = norm_sq(k).sqrt() * m.iter().map(|v| v.abs()).fold(0.0, f64::max);
            *acc = acc.max(div.abs() / (scale + EPS_FLOOR));
        },
        f64::max,
    ))
}

/// Per-component `max |M̂^ν_j(k)| / |k|` over the window, at one viscosity.
pub fn symbol_sup(nu: f64, window: i64) -> Result<[f64; 3]> {
    let symbol = MgSymbol::new(nu)?;
    Ok(scan_window(
        window,
        [0.0f64; 3],
        |acc, k| {
            let m = symbol.value(k);
            let inv = 1.0 / norm_sq(k).sqrt();
            for j in 0..3 {
                acc[j] = acc[j].max(m[j].abs() * inv);
            }
        },
        |a, b| [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])],
    ))
}

/// Analytic bound on `|M̂^ν₁(k)| / |k|`, uniform in `ν ∈ (0, 1]`.
pub const COMPONENT1_UNIFORM_BOUND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UniformBoundAudit {
    pub nu_grid: Vec<f64>,
    pub window: i64,
    /// Per-component maxima of `|M̂^ν_j(k)| / |k|` over the window and grid.
    pub per_component: [f64; 3],
}

impl UniformBoundAudit {
    pub fn component1_passes(&self) -> bool {
        self.per_component[0] <= COMPONENT1_UNIFORM_BOUND
    }
}

/// Uniform-in-ν bound audit for `ν ∈ (0, 1]`.
pub fn audit_uniform_bound(nu_grid: &[f64], window: i64) -> Result<UniformBoundAudit> {
    let mut per_component = [0.0f64; 3];
    for &nu in nu_grid {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(MultiplierError::InvalidViscosity(nu));
        }
        let sup = symbol_sup(nu, window)?;
        for j in 0..3 {
            per_component[j] = per_component[j].max(sup[j]);
        }
    }
    Ok(UniformBoundAudit {
        nu_grid: nu_grid.to_vec(),
        window,
        per_component,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolConvergenceAudit {
    pub nu: f64,
    pub radius: i64,
    /// `sup |M̂^ν₁ − M̂⁰₁| / |k|` over `0 < |k| ≤ L`.
    pub empirical_component1: f64,
    /// Same, maximised over components.
    pub empirical_max: f64,
    /// `4νL¹⁰ + 2ν²L¹²`.
    pub analytic_bound: f64,
}

impl SymbolConvergenceAudit {
    pub fn passes(&self) -> bool {
        self.empirical_component1 <= self.analytic_bound
    }
}

/// `4νL¹⁰ + 2ν²L¹²`, the polynomial bound on the first component of
/// `|M̂^ν − M̂⁰| / |k|` over the Euclidean ball of radius `L`.
pub fn symbol_convergence_bound(nu: f64, radius: i64) -> f64 {
    let l = radius as f64;
    4.0 * nu * l.powi(10) + 2.0 * nu * nu * l.powi(12)
}

/// Lattice scan of `|M̂^ν − M̂⁰| / |k|` over `{0 < |k| ≤ L, k₃ ≠ 0}`.
pub fn audit_symbol_convergence(nu: f64, radius: i64) -> Result<SymbolConvergenceAudit> {
    let viscous = MgSymbol::new(nu)?;
    let critical = MgSymbol::new(0.0)?;
    let r2 = (radius * radius) as f64;
    let [c1, cmax] = scan_window(
        radius,
        [0.0f64; 2],
        |acc, k| {
            let ksq = norm_sq(k);
            if ksq > r2 {
                return;
            }
            let a = viscous.value(k);
            let b = critical.value(k);
            let inv = 1.0 / ksq.sqrt();
            let d1 = (a[0] - b[0]).abs() * inv;
            let dmax = (0..3).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max) * inv;
            acc[0] = acc[0].max(d1);
            acc[1] = acc[1].max(dmax);
        },
        |a, b| [a[0].max(b[0]), a[1].max(b[1])],
    );
    Ok(SymbolConvergenceAudit {
        nu,
        radius,
        empirical_component1: c1,
        empirical_max: cmax,
        analytic_bound: symbol_convergence_bound(nu, radius),
    })
}

/// `Σ_{k≠0} |M̂^ν(k) − M̂⁰(k)|² |∇ĝ(k)|² / |k|²`, summed over components.
pub fn audit_l2_convergence(nu: f64, g: &SpectralField) -> Result<f64> {
    let viscous = MgSymbol::new(nu)?;
    let critical = MgSymbol::new(0.0)?;
    check_gauge(g)?;
    let lattice = g.lattice();
    Ok(g.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(flat, c)| {
            let k = lattice.wavevector(flat);
            let a = viscous.value(k);
            let b = critical.value(k);
            let diff_sq: f64 = (0..3).map(|j| (a[j] - b[j]).powi(2)).sum();
            let ksq = norm_sq(k);
            // |∇ĝ(k)|² = |k|² |ĝ(k)|²
            diff_sq * ksq * c.norm_sqr() / ksq
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{inverse_transform, test_util::random_field, Lattice, Transform};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * (1.0 + b.abs())
    }

    #[test]
    fn symbol_examples() {
        for nu in [0.0, 0.3, 1.0] {
            assert_eq!(MgSymbol::new(nu).unwrap().eval([0, 0, 1]).unwrap(), [0.0; 3]);
        }
        let m0 = MgSymbol::new(0.0).unwrap();
        assert_eq!(m0.denominator([1, 1, 1]), 4.0);
        let v = m0.eval([1, 1, 1]).unwrap();
        assert!(close(v[0], 0.5) && close(v[1], -1.0) && close(v[2], 0.5));
        let m1 = MgSymbol::new(1.0).unwrap();
        assert_eq!(m1.denominator([1, 1, 1]), 103.0);
        let v = m1.eval([1, 1, 1]).unwrap();
        assert!(close(v[0], -7.0 / 103.0));
        assert!(close(v[1], -13.0 / 103.0));
        assert!(close(v[2], 20.0 / 103.0));
    }

    #[test]
    fn gauge_and_domain_errors() {
        let m = MgSymbol::new(0.1).unwrap();
        assert_eq!(
            m.eval([1, 2, 0]),
            Err(MultiplierError::GaugeViolation([1, 2, 0]))
        );
        assert_eq!(m.eval([0, 0, 0]), Err(MultiplierError::ZeroMode));
        assert!(MgSymbol::new(-1.0).is_err());
        assert!(m.t_symbol([0, 0, 0], 1, 1).is_err());
        assert!(m.t_symbol([1, 1, 1], 0, 1).is_err());
        assert_eq!(m.value([3, 1, 0]), [0.0; 3]);
    }

    #[test]
    fn t_symbol_examples() {
        let m = MgSymbol::new(0.0).unwrap();
        for i in 1..=3 {
            for j in 1..=3 {
                assert_eq!(m.t_symbol([0, 0, 1], i, j).unwrap().norm(), 0.0);
            }
        }
        let t = m.t_symbol([1, 1, 1], 1, 2).unwrap();
        assert!((t - Complex64::new(0.0, 1.0 / 3.0)).norm() < 1e-15);
        assert_eq!(MgFamily.t_symbol([1, 1, 1], 0.0, 1, 2).unwrap(), t);
    }

    #[test]
    fn t_symbol_reconstructs_velocity_and_is_bounded() {
        for nu in [0.0, 1e-2, 1.0] {
            let m = MgSymbol::new(nu).unwrap();
            for k1 in -4i64..=4 {
                for k2 in -4i64..=4 {
                    for k3 in [-3i64, -1, 1, 2, 4] {
                        let k = [k1, k2, k3];
                        let sym = m.eval(k).unwrap();
                        for j in 1..=3 {
                            let mut sum = Complex64::default();
                            for i in 1..=3 {
                                let t = m.t_symbol(k, i, j).unwrap();
                                assert!(t.norm() <= sym[j - 1].abs() / norm_sq(k).sqrt() + 1e-15);
                                sum += Complex64::new(0.0, k[i - 1] as f64) * t;
                            }
                            assert!((sum - Complex64::new(sym[j - 1], 0.0)).norm() <= 1e-12 * (1.0 + sym[j - 1].abs()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn symbol_is_even_and_real() {
        let m = MgSymbol::new(0.05).unwrap();
        for k1 in -5i64..=5 {
            for k2 in -5i64..=5 {
                for k3 in 1i64..=5 {
                    assert_eq!(m.eval([k1, k2, k3]).unwrap(), m.eval([-k1, -k2, -k3]).unwrap());
                }
            }
        }
    }

    #[test]
    fn divergence_audit() {
        assert!(audit_divergence_free(0.0, 16).unwrap() <= 1e-12);
        assert!(audit_divergence_free(1.0, 16).unwrap() <= 1e-12);
        assert!(audit_divergence_free(0.3, 1).unwrap() <= 1e-15);
    }

    #[test]
    fn uniform_bound_and_stability() {
        let audit = audit_uniform_bound(&[1e-4, 1e-2, 1.0], 32).unwrap();
        assert!(audit.component1_passes());
        let wider = audit_uniform_bound(&[1e-4, 1e-2, 1.0], 64).unwrap();
        assert!(wider.component1_passes());
        for j in 0..3 {
            let rel = (wider.per_component[j] - audit.per_component[j]).abs() / wider.per_component[j];
            assert!(rel <= 0.01, "component {j}: {rel}");
        }
        let c2 = symbol_sup(0.0, 16).unwrap();
        assert!(c2.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(audit_uniform_bound(&[0.0], 4).is_err());
        assert!(audit_uniform_bound(&[1.5], 4).is_err());
    }

    #[test]
    fn convergence_audit_examples() {
        let a = audit_symbol_convergence(0.1, 2).unwrap();
        assert!((a.analytic_bound - 491.52).abs() < 1e-9);
        assert!(a.passes());
        let zero = audit_symbol_convergence(0.0, 4).unwrap();
        assert_eq!(zero.empirical_max, 0.0);
        let mut prev = f64::INFINITY;
        for m in 1..=12 {
            let audit = audit_symbol_convergence(2f64.powi(-m), 3).unwrap();
            assert!(audit.empirical_max < prev);
            prev = audit.empirical_max;
        }
    }

    #[test]
    fn l2_convergence_examples() {
        let l = Lattice::cubic(8).unwrap();
        let g = SpectralField::mode_pair(l, [1, 1, 1], Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(audit_l2_convergence(0.0, &g).unwrap(), 0.0);
        let d = [-7.0 / 103.0 - 0.5, -13.0 / 103.0 + 1.0, 20.0 / 103.0 - 0.5];
        let expected = 2.0 * d.iter().map(|v| v * v).sum::<f64>();
        assert!((audit_l2_convergence(1.0, &g).unwrap() - expected).abs() < 1e-14);

        let g = random_field(Lattice::cubic(16).unwrap(), 5, 4).project_mg_gauge();
        let values: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&nu| audit_l2_convergence(nu, &g).unwrap())
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2]);
    }

    #[test]
    fn viscous_symbol_decays() {
        let nu = 0.1;
        let m = MgSymbol::new(nu).unwrap();
        let shell_max = |k_inf: i64| {
            let mut best = 0.0f64;
            for k1 in -k_inf..=k_inf {
                for k2 in -k_inf..=k_inf {
                    for k3 in -k_inf..=k_inf {
                        let k = [k1, k2, k3];
                        if k.iter().map(|c| c.abs()).max() == Some(k_inf) && k3 != 0 {
                            let v = m.value(k);
                            best = best.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
                        }
                    }
                }
            }
            best
        };
        for k_inf in [8, 16, 32] {
            assert!(shell_max(k_inf) <= shell_max(k_inf / 2));
        }
    }

    #[test]
    fn velocity_application() {
        let l = Lattice::cubic(8).unwrap();
        let zero = apply_velocity(&SpectralField::zeros(l), 0.0).unwrap();
        assert!(zero.iter().all(|u| u.max_abs() == 0.0));

        let theta = SpectralField::mode_pair(l, [1, 1, 1], Complex64::new(1.0, 0.0)).unwrap();
        let u = apply_velocity(&theta, 0.0).unwrap();
        for k in [[1, 1, 1], [-1, -1, -1]] {
            assert!((u[0].get(k).re - 0.5).abs() < 1e-15);
            assert!((u[1].get(k).re + 1.0).abs() < 1e-15);
            assert!((u[2].get(k).re - 0.5).abs() < 1e-15);
        }

        let bad = SpectralField::mode_pair(l, [1, 1, 0], Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            apply_velocity(&bad, 0.0),
            Err(MultiplierError::FieldGaugeViolation(_))
        ));

        let lat = Lattice::cubic(16).unwrap();
        let theta = random_field(lat, 7, 8).project_mg_gauge();
        let u = apply_velocity(&theta, 0.01).unwrap();
        let mut t = Transform::new(lat);
        for comp in &u {
            assert!(comp.hermitian_defect() < 1e-14);
            let samples = t.inverse_complex(comp).unwrap();
            assert!(samples.iter().all(|z| z.im.abs() <= 1e-12));
        }
        for (flat, k) in lat.modes() {
            let div: Complex64 = (0..3).map(|j| k[j] as f64 * u[j].coeffs()[flat]).sum();
            let scale: f64 = (0..3).map(|j| u[j].coeffs()[flat].norm()).sum::<f64>() * norm_sq(k).sqrt();
            assert!(div.norm() <= 1e-12 * scale + 1e-300);
        }
        let _ = inverse_transform(&u[0]).unwrap();
    }
}
