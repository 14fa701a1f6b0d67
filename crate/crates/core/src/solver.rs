//! Time integration of `∂_t θ + u·∇θ = κΔθ + S`, `u = M^ν[θ]`, under the MG
//! gauge.
//!
//! Diffusion is integrated exactly through the factor `e^{−κ|k|²dt}`. The
//! advective and forcing terms are advanced by exponential time differencing
//! (Cox–Matthews ETD-RK2) or, optionally, by IMEX Euler.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::EnergyLedger;
use crate::multipliers::{self, MgFamily, MultiplierError, MultiplierFamily, ZeroFamily, EPS_FLOOR};
use crate::spectral::{norm_sq, Lattice, SpectralError, SpectralField, Transform, Wavevector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid forcing: {0}")]
    InvalidForcing(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("negative time step {0}")]
    NegativeStep(f64),
    #[error("unstable step at t = {t}: mode {mode:?} reached {value:e}")]
    Unstable { t: f64, mode: Wavevector, value: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Coefficients beyond this magnitude are treated as a blow-up.
const BLOWUP_THRESHOLD: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    EtdRk2,
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `dt = c_cfl Δx / (‖u‖_∞ + ε)`, never above `dt_max`.
    Cfl { c_cfl: f64, dt_max: f64 },
}

/// Which velocity law closes the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityLaw {
    #[default]
    Mg,
    /// `u ≡ 0`: the forced heat equation, used as a linear oracle.
    Zero,
}

impl VelocityLaw {
    fn family(self) -> Box<dyn MultiplierFamily> {
        match self {
            Self::Mg => Box::new(MgFamily),
            Self::Zero => Box::new(ZeroFamily),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lattice: Lattice,
    pub kappa: f64,
    pub nu: f64,
    pub integrator: Integrator,
    pub dt_policy: DtPolicy,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub velocity: VelocityLaw,
}

impl SolverConfig {
    /// Desk-scale defaults: ETD-RK2, CFL-adaptive with `c_cfl = 0.5`.
    pub fn new(lattice: Lattice, kappa: f64, nu: f64) -> Self {
        Self {
            lattice,
            kappa,
            nu,
            integrator: Integrator::EtdRk2,
            dt_policy: DtPolicy::Cfl {
                c_cfl: 0.5,
                dt_max: 1e-2,
            },
            t_end: 1.0,
            snapshot_every: 0.1,
            velocity: VelocityLaw::Mg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return bad(format!("nu must be non-negative, got {}", self.nu));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.snapshot_every > 0.0) {
            return bad(format!("snapshot cadence must be positive, got {}", self.snapshot_every));
        }
        match self.dt_policy {
            DtPolicy::Fixed(dt) if !(dt > 0.0) => bad(format!("fixed dt must be positive, got {dt}")),
            DtPolicy::Cfl { c_cfl, .. } if !(c_cfl > 0.0 && c_cfl <= 1.0) => {
                bad(format!("c_cfl must lie in (0, 1], got {c_cfl}"))
            }
            DtPolicy::Cfl { dt_max, .. } if !(dt_max > 0.0) => {
                bad(format!("dt_max must be positive, got {dt_max}"))
            }
            _ => Ok(()),
        }
    }
}

/// Forcing `S` as a finite list of Fourier modes, closed under `k ↦ −k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForcingSpec {
    modes: Vec<(Wavevector, Complex64)>,
}

impl ForcingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Validates the mode list and adds missing conjugate partners.
    pub fn new(modes: impl IntoIterator<Item = (Wavevector, Complex64)>) -> Result<Self> {
        let mut closed: Vec<(Wavevector, Complex64)> = Vec::new();
        for (k, c) in modes {
            if k == [0, 0, 0] {
                return Err(SolverError::InvalidForcing("mean mode k = 0 is not allowed".into()));
            }
            if k[2] == 0 {
                return Err(SolverError::InvalidForcing(format!("gauge violation: k3=0 at {k:?}")));
            }
            if let Some(existing) = closed.iter().find(|(q, _)| *q == k) {
                if (existing.1 - c).norm() > 1e-12 * (1.0 + c.norm()) {
                    return Err(SolverError::InvalidForcing(format!(
                        "mode {k:?} given twice with different amplitudes"
                    )));
                }
                continue;
            }
            let neg = [-k[0], -k[1], -k[2]];
            closed.push((k, c));
            closed.push((neg, c.conj()));
        }
        Ok(Self { modes: closed })
    }

    /// Seeded forcing on `0 < |k|∞ ≤ band`, `k₃ ≠ 0`, scaled to the given
    /// normalised L² norm.
    pub fn random_band(seed: u64, band: i64, l2_norm: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::new();
        for k1 in -band..=band {
            for k2 in -band..=band {
                for k3 in 1..=band {
                    let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    modes.push(([k1, k2, k3], amp));
                }
            }
        }
        let norm = (2.0 * modes.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>()).sqrt();
        let scale = if norm > 0.0 { l2_norm / norm } else { 0.0 };
        Self::new(modes.into_iter().map(|(k, c)| (k, c * scale)))
    }

    pub fn modes(&self) -> &[(Wavevector, Complex64)] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|(_, c)| c.norm() == 0.0)
    }

    pub fn to_field(&self, lattice: Lattice) -> Result<SpectralField> {
        let mut field = SpectralField::zeros(lattice);
        for &(k, c) in &self.modes {
            if !lattice.contains(k) {
                return Err(SolverError::InvalidForcing(format!("mode {k:?} is outside the lattice")));
            }
            field.set(k, c)?;
        }
        if field.hermitian_defect() > 0.0 {
            // only reachable through a Nyquist-plane mode whose partner aliases onto it
            return Err(SolverError::InvalidForcing("forcing is not Hermitian on this lattice".into()));
        }
        Ok(field)
    }

    /// Rebuilds a forcing spec from a field's nonzero coefficients.
    pub fn from_field(field: &SpectralField) -> Result<Self> {
        let lattice = field.lattice();
        Self::new(
            field
                .coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() != 0.0)
                .map(|(flat, &c)| (lattice.wavevector(flat), c)),
        )
    }
}

/// Seeded random initial data: `|θ̂(k)| ∝ |k|⁻²` with uniform random phases on
/// `0 < |k|∞ ≤ band`, gauge-projected and scaled to the requested
/// normalised L² norm.
pub fn random_initial_data(lattice: Lattice, seed: u64, band: i64, l2_norm: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = SpectralField::zeros(lattice);
    for flat in 0..lattice.len() {
        let k = lattice.wavevector(flat);
        let conj = lattice.conjugate_index(flat);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        if conj < flat || k[2] == 0 || k.iter().any(|c| c.abs() > band) {
            continue;
        }
        let amp = 1.0 / norm_sq(k);
        let c = if conj == flat {
            Complex64::new(amp * phase.cos().signum(), 0.0)
        } else {
            Complex64::from_polar(amp, phase)
        };
        field.coeffs_mut()[flat] = c;
        field.coeffs_mut()[conj] = c.conj();
    }
    let norm = field.l2_norm();
    if norm > 0.0 {
        field.scale(l2_norm / norm);
    }
    field
}

/// Solution state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub theta: SpectralField,
    pub velocity: [SpectralField; 3],
}

/// Result of one evaluation of the advection term.
#[derive(Debug, Clone)]
pub struct NonlinearEval {
    /// Dealiased, gauge-projected coefficients of `u·∇θ`.
    pub term: SpectralField,
    /// `max_x |u(x)|` on the collocation grid.
    pub max_speed: f64,
    /// `|⟨u·∇θ, θ⟩| / (‖u‖ ‖∇θ‖ ‖θ‖)`, zero for vanishing fields.
    pub skew_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub theta: SpectralField,
}

/// Output of [`Solver::integrate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub lattice: Lattice,
    pub kappa: f64,
    pub nu: f64,
    pub snapshots: Vec<Snapshot>,
    pub ledger: EnergyLedger,
    pub dt_history: Vec<f64>,
    /// Largest skew-symmetry defect of the advection term over all stages.
    pub max_skew_defect: f64,
    /// Largest spectral tail fraction over the snapshots.
    pub max_tail_fraction: f64,
}

impl Trajectory {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    /// Snapshot whose time is within `tol` of `t`.
    pub fn snapshot_at(&self, t: f64, tol: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= tol)
    }

    pub fn is_resolved(&self) -> bool {
        self.max_tail_fraction <= 1e-6
    }
}

/// Instability during [`Solver::integrate`], carrying everything computed
/// up to the failing step.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct IntegrationError {
    #[source]
    pub source: SolverError,
    pub partial: Option<Box<Trajectory>>,
}

impl From<SolverError> for IntegrationError {
    fn from(source: SolverError) -> Self {
        Self { source, partial: None }
    }
}

/// `Σ_{|k|∞ > 0.9 N/3} |θ̂|² / ‖θ‖²`.
pub fn tail_fraction(theta: &SpectralField) -> f64 {
    let lattice = theta.lattice();
    let dims = lattice.dims();
    let total = theta.l2_norm().powi(2);
    if total == 0.0 {
        return 0.0;
    }
    let tail: f64 = theta
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(flat, _)| {
            let k = lattice.wavevector(*flat);
            (0..3).any(|a| k[a].abs() as f64 > 0.9 * dims[a] as f64 / 3.0)
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    tail / total
}

/// `φ₁(z) = (e^z − 1)/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `φ₂(z) = (e^z − 1 − z)/z²`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        1.0 / 2.0 + z / 6.0 + z * z / 24.0 + z.powi(3) / 120.0 + z.powi(4) / 720.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Pseudo-spectral integrator for one `(κ, ν, N)` configuration.
pub struct Solver {
    config: SolverConfig,
    family: Box<dyn MultiplierFamily>,
    forcing: SpectralField,
    /// Velocity symbol per stored mode.
    symbols: Vec<[f64; 3]>,
    /// Derivative wavenumbers (Nyquist differentiated to zero).
    wavenumbers: Vec<[f64; 3]>,
    /// `κ|k|²` per mode.
    decay: Vec<f64>,
    /// Retained modes: inside the 2/3 band and off the `k₃ = 0` plane.
    retained: Vec<bool>,
    transform: Transform,
    work: [Vec<Complex64>; 3],
    /// ETD weights `(e^z, φ₁(z), φ₂(z))`, `z = −κ|k|²dt`, for the last `dt`.
    etd_cache: Option<(f64, Vec<(f64, f64, f64)>)>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("config", &self.config)
            .field("family", &self.family.name())
            .finish()
    }
}

impl Solver {
    pub fn new(config: SolverConfig, forcing: &ForcingSpec) -> Result<Self> {
        config.validate()?;
        let lattice = config.lattice;
        let forcing = forcing.to_field(lattice)?;
        let family = config.velocity.family();
        let dims = lattice.dims();
        let mut symbols = Vec::with_capacity(lattice.len());
        let mut wavenumbers = Vec::with_capacity(lattice.len());
        let mut decay = Vec::with_capacity(lattice.len());
        let mut retained = Vec::with_capacity(lattice.len());
        for flat in 0..lattice.len() {
            let idx = lattice.unflatten(flat);
            let k = lattice.wavevector(flat);
            let keep = k[2] != 0 && (0..3).all(|a| 3 * k[a].unsigned_abs() as usize <= dims[a]);
            symbols.push(if keep { family.velocity_symbol(k, config.nu) } else { [0.0; 3] });
            let mut kk = [0.0; 3];
            for a in 0..3 {
                if !lattice.is_nyquist(a, idx[a]) {
                    kk[a] = k[a] as f64;
                }
            }
            wavenumbers.push(kk);
            decay.push(config.kappa * norm_sq(k));
            retained.push(keep);
        }
        let outside = forcing
            .coeffs()
            .iter()
            .zip(&retained)
            .any(|(c, &keep)| !keep && c.norm() != 0.0);
        if outside {
            return Err(SolverError::InvalidForcing(
                "forcing has modes outside the dealiased band".into(),
            ));
        }
        Ok(Self {
            transform: Transform::new(lattice),
            work: std::array::from_fn(|_| vec![Complex64::default(); lattice.len()]),
            etd_cache: None,
            config,
            family,
            forcing,
            symbols,
            wavenumbers,
            decay,
            retained,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn forcing(&self) -> &SpectralField {
        &self.forcing
    }

    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    fn velocity_of(&self, theta: &SpectralField) -> [SpectralField; 3] {
        let mut out = [theta.clone(), theta.clone(), theta.clone()];
        for (flat, &c) in theta.coeffs().iter().enumerate() {
            let m = self.symbols[flat];
            for a in 0..3 {
                out[a].coeffs_mut()[flat] = c * m[a];
            }
        }
        out
    }

    fn project(&self, field: &mut SpectralField) {
        for (c, &keep) in field.coeffs_mut().iter_mut().zip(&self.retained) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Validates `θ₀` and builds the initial state.
    pub fn initial_state(&self, theta0: SpectralField) -> Result<SimState> {
        if theta0.lattice() != self.config.lattice {
            return Err(SolverError::InvalidState("initial data lattice mismatch".into()));
        }
        multipliers::check_gauge(&theta0)?;
        let scale = theta0.max_abs().max(f64::MIN_POSITIVE);
        if theta0.hermitian_defect() > 1e-12 * scale {
            return Err(SolverError::InvalidState("initial data is not Hermitian".into()));
        }
        let mut theta = theta0;
        theta.project_mg_gauge_in_place();
        let velocity = self.velocity_of(&theta);
        Ok(SimState { t: 0.0, theta, velocity })
    }

    /// Pseudo-spectral `u·∇θ`: product on the grid, 2/3-rule dealiasing and
    /// gauge projection of the result.
    pub fn nonlinear_term(&mut self, theta: &SpectralField) -> Result<NonlinearEval> {
        multipliers::check_gauge(theta)?;
        if theta.lattice() != self.config.lattice {
            return Err(SolverError::InvalidState("field lattice mismatch".into()));
        }
        let i = Complex64::new(0.0, 1.0);
        let [a, b, c] = &mut self.work;
        let (mut u_sq, mut g_sq, mut th_sq) = (0.0, 0.0, 0.0);
        // packed spectra: (û₁ + iû₂), (û₃ + i∂₁θ), (∂₂θ + i∂₃θ)
        for (flat, &coef) in theta.coeffs().iter().enumerate() {
            if !self.retained[flat] {
                a[flat] = Complex64::default();
                b[flat] = Complex64::default();
                c[flat] = Complex64::default();
                continue;
            }
            let m = self.symbols[flat];
            let kk = self.wavenumbers[flat];
            let g = [i * kk[0] * coef, i * kk[1] * coef, i * kk[2] * coef];
            a[flat] = coef * m[0] + i * (coef * m[1]);
            b[flat] = coef * m[2] + i * g[0];
            c[flat] = g[1] + i * g[2];
            let n = coef.norm_sqr();
            th_sq += n;
            u_sq += n * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]);
            g_sq += n * (kk[0] * kk[0] + kk[1] * kk[1] + kk[2] * kk[2]);
        }
        self.transform.inverse_in_place(a);
        self.transform.inverse_in_place(b);
        self.transform.inverse_in_place(c);
        let mut max_speed_sq = 0.0f64;
        for flat in 0..a.len() {
            let (u1, u2, u3) = (a[flat].re, a[flat].im, b[flat].re);
            let (g1, g2, g3) = (b[flat].im, c[flat].re, c[flat].im);
            a[flat] = Complex64::new(u1 * g1 + u2 * g2 + u3 * g3, 0.0);
            max_speed_sq = max_speed_sq.max(u1 * u1 + u2 * u2 + u3 * u3);
        }
        self.transform.forward_in_place(a);
        let norm = 1.0 / a.len() as f64;
        let coeffs = a
            .iter()
            .zip(&self.retained)
            .map(|(&v, &keep)| if keep { v * norm } else { Complex64::default() })
            .collect();
        let mut term = SpectralField::from_coeffs(self.config.lattice, coeffs).expect("lattice-sized buffer");
        // exact Hermitian symmetry keeps θ exactly real-valued step after step
        term.symmetrize();
        let inner: f64 = term
            .coeffs()
            .iter()
            .zip(theta.coeffs())
            .map(|(t, c)| (t.conj() * c).re)
            .sum();
        let scale = (u_sq * g_sq * th_sq).sqrt();
        let skew_defect = if scale > 0.0 { inner.abs() / scale } else { 0.0 };
        Ok(NonlinearEval {
            term,
            max_speed: max_speed_sq.sqrt(),
            skew_defect,
        })
    }

    /// `−P(u·∇θ) + Ŝ`.
    /// Returns the right-hand side, the maximum speed and the skew defect.
    fn rhs(&mut self, theta: &SpectralField) -> Result<(SpectralField, f64, f64)> {
        let NonlinearEval {
            term: mut rhs,
            max_speed,
            skew_defect,
        } = self.nonlinear_term(theta)?;
        for (r, s) in rhs.coeffs_mut().iter_mut().zip(self.forcing.coeffs()) {
            *r = s - *r;
        }
        Ok((rhs, max_speed, skew_defect))
    }

    /// Time step allowed by the policy for a given maximum speed.
    pub fn dt_for_speed(&self, max_speed: f64) -> f64 {
        match self.config.dt_policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl { c_cfl, dt_max } => {
                let mut cap = dt_max;
                if self.config.integrator == Integrator::ImexEuler {
                    cap = cap.min(c_cfl / (self.config.kappa * self.config.lattice.dealiased_kmax_sq()));
                }
                let advective = c_cfl * self.config.lattice.grid_spacing() / (max_speed + EPS_FLOOR);
                advective.min(cap)
            }
        }
    }

    /// CFL time step from the cached velocity of `state`.
    pub fn cfl_dt(&mut self, state: &SimState) -> Result<f64> {
        let (u1, u2) = self.transform.inverse_pair(&state.velocity[0], &state.velocity[1])?;
        let u3 = self.transform.inverse(&state.velocity[2])?;
        let speed = u1
            .iter()
            .zip(&u2)
            .zip(&u3)
            .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
            .fold(0.0, f64::max);
        Ok(self.dt_for_speed(speed))
    }

    /// Advances `state` by `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<SimState> {
        let (rhs0, ..) = self.rhs(&state.theta)?;
        let (theta, _) = self.finish_step(state.t, &state.theta, rhs0, dt)?;
        let velocity = self.velocity_of(&theta);
        Ok(SimState {
            t: state.t + dt,
            theta,
            velocity,
        })
    }

    fn finish_step(&mut self, t: f64, theta: &SpectralField, rhs0: SpectralField, dt: f64) -> Result<(SpectralField, f64)> {
        if dt < 0.0 || dt.is_nan() {
            return Err(SolverError::NegativeStep(dt));
        }
        if dt == 0.0 {
            return Ok((theta.clone(), 0.0));
        }
        let mut skew = 0.0f64;
        let theta = match self.config.integrator {
            Integrator::ImexEuler => {
                let mut next = theta.clone();
                for (flat, c) in next.coeffs_mut().iter_mut().enumerate() {
                    *c = (*c + dt * rhs0.coeffs()[flat]) / (1.0 + dt * self.decay[flat]);
                }
                next
            }
            Integrator::EtdRk2 => {
                let factors = match self.etd_cache.take() {
                    Some((cached, f)) if cached == dt => f,
                    _ => self
                        .decay
                        .iter()
                        .map(|d| {
                            let z = -d * dt;
                            (z.exp(), phi1(z), phi2(z))
                        })
                        .collect(),
                };
                let mut stage = theta.clone();
                for (flat, c) in stage.coeffs_mut().iter_mut().enumerate() {
                    let (e, p1, _) = factors[flat];
                    *c = e * *c + dt * p1 * rhs0.coeffs()[flat];
                }
                self.project(&mut stage);
                let (rhs1, _, stage_skew) = self.rhs(&stage)?;
                skew = stage_skew;
                let mut next = stage;
                for (flat, c) in next.coeffs_mut().iter_mut().enumerate() {
                    let p2 = factors[flat].2;
                    *c += dt * p2 * (rhs1.coeffs()[flat] - rhs0.coeffs()[flat]);
                }
                self.etd_cache = Some((dt, factors));
                next
            }
        };
        let mut theta = theta;
        self.project(&mut theta);
        self.check_finite(&theta, t + dt)?;
        Ok((theta, skew))
    }

    fn check_finite(&self, theta: &SpectralField, t: f64) -> Result<()> {
        let limit = BLOWUP_THRESHOLD * BLOWUP_THRESHOLD;
        let bad = theta
            .coeffs()
            .iter()
            .position(|c| !(c.norm_sqr() <= limit));
        match bad {
            None => Ok(()),
            Some(flat) => Err(SolverError::Unstable {
                t,
                mode: theta.lattice().wavevector(flat),
                value: theta.coeffs()[flat].norm(),
            }),
        }
    }

    /// Runs from `θ₀` to `t_end`, recording snapshots at the configured
    /// cadence and an energy ledger row after every accepted step.
    pub fn integrate(&mut self, theta0: SpectralField) -> std::result::Result<Trajectory, IntegrationError> {
        let state = self.initial_state(theta0)?;
        let mut traj = Trajectory {
            lattice: self.config.lattice,
            kappa: self.config.kappa,
            nu: self.config.nu,
            snapshots: vec![Snapshot {
                t: 0.0,
                theta: state.theta.clone(),
            }],
            ledger: EnergyLedger::new(self.config.kappa),
            dt_history: Vec::new(),
            max_skew_defect: 0.0,
            max_tail_fraction: tail_fraction(&state.theta),
        };
        traj.ledger.update(&state, &self.forcing);
        let SimState { mut t, mut theta, .. } = state;
        let t_end = self.config.t_end;
        let cadence = self.config.snapshot_every;
        let tol = 1e-12 * t_end.max(1.0);
        let mut next_snapshot = cadence.min(t_end);
        while t < t_end - tol {
            let outcome = self.rhs(&theta).and_then(|(rhs0, max_speed, skew0)| {
                traj.max_skew_defect = traj.max_skew_defect.max(skew0);
                let mut dt = self.dt_for_speed(max_speed);
                let mut hits_snapshot = false;
                if t + dt >= next_snapshot - tol {
                    dt = next_snapshot - t;
                    hits_snapshot = true;
                }
                self.finish_step(t, &theta, rhs0, dt).map(|(s, skew)| (s, skew, dt, hits_snapshot))
            });
            let (next, skew, dt, hits_snapshot) = match outcome {
                Ok(v) => v,
                Err(source) => {
                    return Err(IntegrationError {
                        source,
                        partial: Some(Box::new(traj)),
                    })
                }
            };
            theta = next;
            t = if hits_snapshot { next_snapshot } else { t + dt };
            traj.max_skew_defect = traj.max_skew_defect.max(skew);
            traj.dt_history.push(dt);
            traj.ledger.push(t, &theta, &self.forcing);
            if hits_snapshot {
                traj.max_tail_fraction = traj.max_tail_fraction.max(tail_fraction(&theta));
                traj.snapshots.push(Snapshot {
                    t,
                    theta: theta.clone(),
                });
                next_snapshot = (next_snapshot + cadence).min(t_end);
            }
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::test_util::random_field;

    fn lattice(n: usize) -> Lattice {
        Lattice::cubic(n).unwrap()
    }

    fn one(k: Wavevector, l: Lattice) -> SpectralField {
        SpectralField::mode_pair(l, k, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn phi_functions_continuous_across_branch() {
        for z in [-1e-5, -1e-2, -0.5, -3.0] {
            let lo = z * (1.0 - 1e-9);
            let hi = z * (1.0 + 1e-9);
            assert!((phi1(lo) - phi1(hi)).abs() < 1e-8);
            assert!((phi2(lo) - phi2(hi)).abs() < 1e-8);
        }
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(phi2(0.0), 0.5);
    }

    #[test]
    fn forcing_validation() {
        let ok = ForcingSpec::new([([1, 1, 1], Complex64::new(0.5, 0.25))]).unwrap();
        assert_eq!(ok.modes().len(), 2);
        assert_eq!(ok.modes()[1], ([-1, -1, -1], Complex64::new(0.5, -0.25)));
        assert!(ForcingSpec::new([([1, 1, 0], Complex64::new(1.0, 0.0))]).is_err());
        assert!(ForcingSpec::new([([0, 0, 0], Complex64::new(1.0, 0.0))]).is_err());
        assert!(ForcingSpec::new([
            ([1, 1, 1], Complex64::new(1.0, 0.0)),
            ([-1, -1, -1], Complex64::new(2.0, 0.0)),
        ])
        .is_err());
        // a consistent explicit partner is accepted
        let both = ForcingSpec::new([
            ([1, 0, 1], Complex64::new(1.0, 1.0)),
            ([-1, 0, -1], Complex64::new(1.0, -1.0)),
        ])
        .unwrap();
        assert_eq!(both.modes().len(), 2);
        let f = ForcingSpec::random_band(7, 2, 0.8).unwrap().to_field(lattice(16)).unwrap();
        assert!((f.l2_norm() - 0.8).abs() < 1e-12);
        assert_eq!(f.gauge_violation(), 0.0);
        assert_eq!(f.hermitian_defect(), 0.0);
    }

    #[test]
    fn random_initial_data_properties() {
        let l = lattice(16);
        let a = random_initial_data(l, 42, 4, 2.0);
        let b = random_initial_data(l, 42, 4, 2.0);
        assert_eq!(a, b);
        assert!((a.l2_norm() - 2.0).abs() < 1e-12);
        assert_eq!(a.gauge_violation(), 0.0);
        assert_eq!(a.hermitian_defect(), 0.0);
        assert_eq!(a.mean().norm(), 0.0);
        for (flat, k) in l.modes() {
            if k.iter().any(|c| c.abs() > 4) {
                assert_eq!(a.coeffs()[flat].norm(), 0.0);
            }
        }
        // |k|^{-2} spectrum: ratio between |k|² = 1 and |k|² = 3 modes
        let r = a.get([0, 0, 1]).norm() / a.get([1, 1, 1]).norm();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_term_examples() {
        let l = lattice(16);
        let cfg = SolverConfig::new(l, 1.0, 0.0);
        let mut solver = Solver::new(cfg, &ForcingSpec::none()).unwrap();
        assert_eq!(solver.nonlinear_term(&SpectralField::zeros(l)).unwrap().term.max_abs(), 0.0);
        for nu in [0.0, 0.1] {
            let mut s = Solver::new(SolverConfig::new(l, 1.0, nu), &ForcingSpec::none()).unwrap();
            let out = s.nonlinear_term(&one([1, 2, 1], l)).unwrap();
            assert!(out.term.max_abs() < 1e-15, "{}", out.term.max_abs());
        }
        let theta = random_initial_data(l, 3, 4, 1.0);
        let out = solver.nonlinear_term(&theta).unwrap();
        assert!(out.skew_defect <= 1e-10);
        assert!(out.term.max_abs() > 1e-6);
        assert_eq!(out.term.gauge_violation(), 0.0);
        assert_eq!(out.term.hermitian_defect(), 0.0);
        let bad = one([1, 1, 0], l);
        assert!(solver.nonlinear_term(&bad).is_err());
    }

    #[test]
    fn single_mode_heat_decay_is_exact() {
        let l = lattice(16);
        let k0 = [1, 2, 1];
        let kappa = 0.7;
        let mut cfg = SolverConfig::new(l, kappa, 0.0);
        cfg.dt_policy = DtPolicy::Fixed(0.013);
        let mut solver = Solver::new(cfg, &ForcingSpec::none()).unwrap();
        let mut state = solver.initial_state(one(k0, l)).unwrap();
        for n in 1..=50 {
            state = solver.step(&state, 0.013).unwrap();
            let expected = (-kappa * 6.0 * 0.013 * n as f64).exp();
            let got = state.theta.get(k0);
            assert!((got.re - expected).abs() <= 1e-12 * expected, "step {n}");
        }
    }

    #[test]
    fn zero_step_is_identity_and_negative_rejected() {
        let l = lattice(8);
        let mut solver = Solver::new(SolverConfig::new(l, 1.0, 0.0), &ForcingSpec::none()).unwrap();
        let state = solver.initial_state(random_initial_data(l, 1, 2, 1.0)).unwrap();
        assert_eq!(solver.step(&state, 0.0).unwrap(), state);
        assert!(matches!(solver.step(&state, -1.0), Err(SolverError::NegativeStep(_))));
    }

    #[test]
    fn forced_linear_fixed_point() {
        let l = lattice(16);
        let k0 = [1, 1, 1];
        let s_hat = Complex64::new(0.3, -0.2);
        let forcing = ForcingSpec::new([(k0, s_hat)]).unwrap();
        let kappa = 1.0;
        for nu in [0.0, 0.1] {
            let mut cfg = SolverConfig::new(l, kappa, nu);
            cfg.t_end = 10.0 / (kappa * 3.0);
            cfg.snapshot_every = cfg.t_end;
            cfg.dt_policy = DtPolicy::Cfl { c_cfl: 0.5, dt_max: 0.05 };
            let mut solver = Solver::new(cfg, &forcing).unwrap();
            let traj = solver.integrate(SpectralField::zeros(l)).unwrap();
            let got = traj.final_snapshot().theta.get(k0);
            let target = s_hat / (kappa * 3.0);
            // exact linear response: target (1 − e^{−κ|k|² t})
            let exact = target * (1.0 - (-10.0f64).exp());
            assert!((got - exact).norm() <= 1e-12);
            // the remaining distance to the fixed point is the e^{-10} transient
            assert!(((got - target).norm() / target.norm() - (-10.0f64).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_family_matches_forced_heat_solution() {
        let l = lattice(16);
        let forcing = ForcingSpec::new([
            ([1, 0, 1], Complex64::new(0.4, 0.1)),
            ([0, 2, -1], Complex64::new(-0.2, 0.3)),
        ])
        .unwrap();
        let theta0 = random_initial_data(l, 9, 3, 1.0);
        let mut cfg = SolverConfig::new(l, 0.5, 0.0);
        cfg.velocity = VelocityLaw::Zero;
        cfg.t_end = 1.0;
        cfg.snapshot_every = 0.25;
        cfg.dt_policy = DtPolicy::Fixed(0.03);
        let mut solver = Solver::new(cfg, &forcing).unwrap();
        let traj = solver.integrate(theta0.clone()).unwrap();
        let s = forcing.to_field(l).unwrap();
        for snap in &traj.snapshots {
            for (flat, k) in l.modes() {
                let lam = 0.5 * norm_sq(k);
                let c0 = theta0.coeffs()[flat];
                let sk = s.coeffs()[flat];
                let exact = if lam == 0.0 {
                    c0
                } else {
                    c0 * (-lam * snap.t).exp() + sk * (1.0 - (-lam * snap.t).exp()) / lam
                };
                assert!((snap.theta.coeffs()[flat] - exact).norm() <= 1e-8);
            }
        }
        assert_eq!(traj.snapshots.len(), 5);
    }

    #[test]
    fn zero_horizon_returns_initial_data() {
        let l = lattice(8);
        let mut cfg = SolverConfig::new(l, 1.0, 0.0);
        cfg.t_end = 0.0;
        let theta0 = random_initial_data(l, 2, 2, 1.0);
        let traj = Solver::new(cfg, &ForcingSpec::none()).unwrap().integrate(theta0.clone()).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].theta, theta0);
        assert!(traj.dt_history.is_empty());
    }

    #[test]
    fn cfl_formula() {
        let l = lattice(16);
        let mut cfg = SolverConfig::new(l, 1.0, 0.0);
        cfg.dt_policy = DtPolicy::Cfl { c_cfl: 0.4, dt_max: 0.1 };
        let mut solver = Solver::new(cfg.clone(), &ForcingSpec::none()).unwrap();
        let zero = solver.initial_state(SpectralField::zeros(l)).unwrap();
        assert_eq!(solver.cfl_dt(&zero).unwrap(), 0.1);

        let theta = random_initial_data(l, 5, 4, 3.0);
        let state = solver.initial_state(theta.clone()).unwrap();
        let dt = solver.cfl_dt(&state).unwrap();
        // hand evaluation from grid velocity samples
        let mut t = Transform::new(l);
        let u: Vec<Vec<f64>> = state.velocity.iter().map(|c| t.inverse(c).unwrap()).collect();
        let speed = (0..l.len())
            .map(|i| (u[0][i].powi(2) + u[1][i].powi(2) + u[2][i].powi(2)).sqrt())
            .fold(0.0, f64::max);
        let expected = (0.4 * l.grid_spacing() / (speed + EPS_FLOOR)).min(0.1);
        assert!((dt - expected).abs() <= 1e-14 * expected);
        assert!(dt < 0.1);
        // doubling the amplitude doubles the speed and halves dt
        let doubled = solver.initial_state(theta.scaled(2.0)).unwrap();
        let dt2 = solver.cfl_dt(&doubled).unwrap();
        assert!((dt2 - dt / 2.0).abs() <= 1e-12 * dt);

        cfg.integrator = Integrator::ImexEuler;
        let mut imex = Solver::new(cfg, &ForcingSpec::none()).unwrap();
        let cap = 0.4 / l.dealiased_kmax_sq();
        assert!((imex.cfl_dt(&zero).unwrap() - cap).abs() < 1e-15);
    }

    #[test]
    fn invariants_hold_along_run() {
        let l = lattice(16);
        let mut cfg = SolverConfig::new(l, 1.0, 0.01);
        cfg.t_end = 0.2;
        cfg.snapshot_every = 0.05;
        let forcing = ForcingSpec::random_band(1, 2, 1.0).unwrap();
        let traj = Solver::new(cfg, &forcing)
            .unwrap()
            .integrate(random_initial_data(l, 4, 4, 1.0))
            .unwrap();
        for snap in &traj.snapshots {
            assert_eq!(snap.theta.gauge_violation(), 0.0);
            assert_eq!(snap.theta.mean().norm(), 0.0);
            assert_eq!(snap.theta.hermitian_defect(), 0.0);
        }
        assert!(traj.max_skew_defect <= 1e-10);
        assert_eq!(traj.snapshots.len(), 5);
    }

    #[test]
    fn imex_euler_runs_and_is_first_order_on_heat() {
        let l = lattice(8);
        let mut cfg = SolverConfig::new(l, 1.0, 0.0);
        cfg.integrator = Integrator::ImexEuler;
        let mut solver = Solver::new(cfg, &ForcingSpec::none()).unwrap();
        let state = solver.initial_state(one([1, 0, 1], l)).unwrap();
        let next = solver.step(&state, 0.01).unwrap();
        assert!((next.theta.get([1, 0, 1]).re - 1.0 / 1.02).abs() < 1e-15);
    }

    #[test]
    fn non_hermitian_or_gauge_invalid_initial_data_rejected() {
        let l = lattice(8);
        let solver = Solver::new(SolverConfig::new(l, 1.0, 0.0), &ForcingSpec::none()).unwrap();
        let mut f = random_field(l, 2, 1).project_mg_gauge();
        f.coeffs_mut()[l.index_of([1, 1, 1]).unwrap()] += Complex64::new(0.5, 0.0);
        assert!(solver.initial_state(f).is_err());
        assert!(solver.initial_state(one([1, 0, 0], l)).is_err());
    }

    #[test]
    fn config_validation() {
        let l = lattice(8);
        let mut cfg = SolverConfig::new(l, 0.0, 0.0);
        assert!(cfg.validate().is_err());
        cfg.kappa = 1.0;
        cfg.dt_policy = DtPolicy::Cfl { c_cfl: 1.5, dt_max: 1.0 };
        assert!(cfg.validate().is_err());
        cfg.dt_policy = DtPolicy::Fixed(0.0);
        assert!(cfg.validate().is_err());
        cfg.dt_policy = DtPolicy::Fixed(0.1);
        cfg.nu = -0.1;
        assert!(cfg.validate().is_err());
    }
}
