//! Desk-scale studies built on the solver: vanishing viscosity, continuity
//! in `ν`, the absorbing ball, trajectory distances and an empirical proxy
//! for upper semicontinuity of the attractors.
//!
//! Member runs are independent and execute on the rayon pool; reports are
//! assembled after every worker has finished.

use rayon::prelude::*;
use thiserror::Error;

use crate::solver::{DtPolicy, ForcingSpec, IntegrationError, Solver, SolverConfig, SolverError, Trajectory};
use crate::spectral::{norm_sq, SpectralError, SpectralField};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid study: {0}")]
    InvalidStudy(String),
    #[error("burn-in not reached: {0}")]
    BurnInNotReached(String),
    #[error("member run failed: {0}")]
    Run(#[from] SolverError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Errors at or below this level count as ties in monotonicity checks.
pub const ERROR_FLOOR: f64 = 1e-10;

/// One member run of a study.
#[derive(Debug)]
pub struct MemberRun {
    pub nu: f64,
    pub seed: u64,
    pub outcome: std::result::Result<Trajectory, IntegrationError>,
}

fn run_member(template: &SolverConfig, nu: f64, forcing: &ForcingSpec, theta0: SpectralField) -> std::result::Result<Trajectory, IntegrationError> {
    let mut cfg = template.clone();
    cfg.nu = nu;
    Solver::new(cfg, forcing)?.integrate(theta0)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub nu: f64,
    pub t: f64,
    pub s: f64,
    /// `‖θ^ν(t) − θ⁰(t)‖_{H^s}`.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneViolation {
    pub t: f64,
    pub s: f64,
    pub nu_larger: f64,
    pub nu_smaller: f64,
    pub error_larger_nu: f64,
    pub error_smaller_nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuSweepReport {
    pub nu_list: Vec<f64>,
    pub s_list: Vec<f64>,
    pub tau: f64,
    pub rows: Vec<SweepRow>,
    /// Members that failed, with the failure message; rows cover the
    /// completed part only.
    pub failures: Vec<(f64, String)>,
}

impl NuSweepReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn error(&self, nu: f64, t: f64, s: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.nu == nu && r.s == s && (r.t - t).abs() <= 1e-9)
            .map(|r| r.error)
    }

    pub fn times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !times.iter().any(|t| (t - r.t).abs() <= 1e-9) {
                times.push(r.t);
            }
        }
        times
    }

    /// Places where the error fails to decrease strictly from one `ν` to the
    /// next smaller one, ignoring pairs with both errors below `floor`.
    pub fn monotone_violations(&self, floor: f64) -> Vec<MonotoneViolation> {
        let mut out = Vec::new();
        for t in self.times() {
            for &s in &self.s_list {
                for w in self.nu_list.windows(2) {
                    let (Some(a), Some(b)) = (self.error(w[0], t, s), self.error(w[1], t, s)) else {
                        continue;
                    };
                    if a <= floor && b <= floor {
                        continue;
                    }
                    if b >= a {
                        out.push(MonotoneViolation {
                            t,
                            s,
                            nu_larger: w[0],
                            nu_smaller: w[1],
                            error_larger_nu: a,
                            error_smaller_nu: b,
                        });
                    }
                }
            }
        }
        out
    }

    /// `(ν, ‖θ^ν − θ⁰‖²_{L²})` at the sampled time closest to `t`.
    pub fn squared_l2_errors(&self, t: f64) -> Vec<(f64, f64)> {
        let Some(t_near) = self
            .times()
            .into_iter()
            .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
        else {
            return Vec::new();
        };
        self.nu_list
            .iter()
            .filter_map(|&nu| self.error(nu, t_near, 0.0).map(|e| (nu, e * e)))
            .collect()
    }
}

/// Runs `θ^ν` for every `ν` in `nu_list` plus the `ν = 0` reference from
/// the same `θ₀`, `S` and fixed time step, and tabulates
/// `‖θ^ν(t) − θ⁰(t)‖_{H^s}` at every snapshot `t ≥ τ`.
pub fn vanishing_viscosity_study(
    nu_list: &[f64],
    theta0: &SpectralField,
    forcing: &ForcingSpec,
    tau: f64,
    s_list: &[f64],
    template: &SolverConfig,
) -> Result<NuSweepReport> {
    if nu_list.is_empty() {
        return Err(ExperimentError::InvalidStudy("empty viscosity list".into()));
    }
    if nu_list.iter().any(|nu| !(*nu >= 0.0)) || nu_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ExperimentError::InvalidStudy(
            "viscosities must be nonnegative and strictly decreasing".into(),
        ));
    }
    if s_list.iter().any(|s| !(*s >= 0.0)) {
        return Err(ExperimentError::InvalidStudy("Sobolev orders must be nonnegative".into()));
    }
    if !matches!(template.dt_policy, DtPolicy::Fixed(_)) {
        return Err(ExperimentError::InvalidStudy(
            "viscosity sweeps need a fixed time step shared by all members".into(),
        ));
    }
    template.validate()?;

    let mut nus = vec![0.0];
    nus.extend(nu_list.iter().copied().filter(|nu| *nu > 0.0));
    let runs: Vec<MemberRun> = nus
        .par_iter()
        .map(|&nu| MemberRun {
            nu,
            seed: 0,
            outcome: run_member(template, nu, forcing, theta0.clone()),
        })
        .collect();

    let mut report = NuSweepReport {
        nu_list: nu_list.to_vec(),
        s_list: s_list.to_vec(),
        tau,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    let trajectory = |run: &MemberRun| -> Option<Trajectory> {
        match &run.outcome {
            Ok(t) => Some(t.clone()),
            Err(e) => e.partial.as_deref().cloned(),
        }
    };
    for run in &runs {
        if let Err(e) = &run.outcome {
            report.failures.push((run.nu, e.to_string()));
        }
    }
    let Some(reference) = trajectory(&runs[0]) else {
        return Ok(report);
    };
    for &nu in nu_list {
        let member = if nu == 0.0 {
            Some(reference.clone())
        } else {
            runs.iter().find(|r| r.nu == nu).and_then(trajectory)
        };
        let Some(member) = member else { continue };
        for (a, b) in reference.snapshots.iter().zip(&member.snapshots) {
            if a.t < tau - 1e-12 {
                continue;
            }
            let diff = b.theta.difference(&a.theta)?;
            for &s in s_list {
                report.rows.push(SweepRow {
                    nu,
                    t: a.t,
                    s,
                    error: diff.sobolev_norm(s)?,
                });
            }
        }
    }
    Ok(report)
}

/// Fitted rate in `‖θ^ν − θ⁰‖² ≈ C ν^slope`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityFit {
    /// Points entering the fit; zero differences are excluded.
    pub points: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    /// All differences vanished, so there is nothing to fit.
    pub degenerate: bool,
}

/// Fits the continuity rate from `(ν, ‖θ^ν − θ⁰‖²)` pairs sharing the
/// endpoint `ν₂ = 0`.
pub fn fit_continuity(pairs: &[(f64, f64)]) -> Result<ContinuityFit> {
    if pairs.len() < 3 {
        return Err(ExperimentError::InvalidStudy(format!(
            "continuity fit needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let points: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(nu, d)| *nu > 0.0 && *d > 0.0)
        .collect();
    let degenerate = points.is_empty();
    let slope = if points.len() >= 2 { log_log_slope(&points) } else { None };
    Ok(ContinuityFit {
        points,
        slope,
        degenerate,
    })
}

/// Runs the `ν`-members and the `ν = 0` reference up to `t` and fits the
/// growth rate of the squared `L²` difference in `ν`.
pub fn viscosity_continuity_fit(
    nu_list: &[f64],
    theta0: &SpectralField,
    forcing: &ForcingSpec,
    t: f64,
    template: &SolverConfig,
) -> Result<ContinuityFit> {
    if nu_list.len() < 3 {
        return Err(ExperimentError::InvalidStudy(format!(
            "continuity fit needs at least 3 pairs, got {}",
            nu_list.len()
        )));
    }
    let mut cfg = template.clone();
    cfg.t_end = t;
    cfg.snapshot_every = t;
    let report = vanishing_viscosity_study(nu_list, theta0, forcing, t, &[0.0], &cfg)?;
    if let Some((nu, msg)) = report.failures.first() {
        return Err(ExperimentError::InvalidStudy(format!("member ν = {nu} failed: {msg}")));
    }
    fit_continuity(&report.squared_l2_errors(t))
}

/// `R = (1 + margin) κ⁻¹ ‖S‖_{H⁻¹}`.
pub fn absorbing_radius(forcing: &SpectralField, kappa: f64, margin: f64) -> f64 {
    (1.0 + margin) * forcing.homogeneous_norm(-1.0) / kappa
}

/// Initial datum of an ensemble: seeded random field of prescribed norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMember {
    pub seed: u64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallRecord {
    pub seed: u64,
    pub initial_norm: f64,
    /// First ledger time with `‖θ‖ ≤ R`.
    pub entry_time: Option<f64>,
    /// Largest `‖θ‖ / R` after entry.
    pub max_ratio_after_entry: f64,
    /// Smallest average decay rate `−log(‖θ(t)‖/‖θ₀‖)/t` along the run.
    pub min_decay_rate: f64,
    pub failure: Option<String>,
}

impl BallRecord {
    pub fn stays_inside(&self) -> bool {
        self.entry_time.is_some() && self.max_ratio_after_entry <= 1.0 && self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub strong: Vec<f64>,
    pub weak: Vec<f64>,
    /// Upper bound on the omitted part of the weak-distance series.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorProbe {
    pub radius: f64,
    pub forcing_h_minus1: f64,
    pub kappa: f64,
    pub members: Vec<BallRecord>,
    /// Distances between consecutive ensemble members.
    pub distances: Vec<((u64, u64), DistanceSeries)>,
}

impl AttractorProbe {
    pub fn all_inside(&self) -> bool {
        self.members.iter().all(BallRecord::stays_inside)
    }
}

fn ball_record(traj: &Trajectory, member: EnsembleMember, radius: f64) -> BallRecord {
    let norms: Vec<(f64, f64)> = traj
        .ledger
        .rows()
        .iter()
        .map(|r| (r.t, (2.0 * r.energy).sqrt()))
        .collect();
    let n0 = norms.first().map(|p| p.1).unwrap_or(0.0);
    let entry = norms.iter().position(|&(_, n)| n <= radius);
    let max_ratio_after_entry = match entry {
        Some(i) if radius > 0.0 => norms[i..].iter().map(|&(_, n)| n / radius).fold(0.0, f64::max),
        Some(i) => {
            if norms[i..].iter().all(|&(_, n)| n == 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    };
    let min_decay_rate = norms
        .iter()
        .filter(|(t, n)| *t > 0.0 && *n > 0.0 && n0 > 0.0)
        .map(|(t, n)| -(n / n0).ln() / t)
        .fold(f64::INFINITY, f64::min);
    BallRecord {
        seed: member.seed,
        initial_norm: n0,
        entry_time: entry.map(|i| norms[i].0),
        max_ratio_after_entry,
        min_decay_rate,
        failure: None,
    }
}

/// Runs the ensemble and checks entry into, and permanence in, the ball of
/// radius `(1 + margin) κ⁻¹ ‖S‖_{H⁻¹}`.
pub fn absorbing_ball_study(
    ensemble: &[EnsembleMember],
    forcing: &ForcingSpec,
    margin: f64,
    band: i64,
    template: &SolverConfig,
    weak_window: i64,
) -> Result<AttractorProbe> {
    if !(margin > 0.0) {
        return Err(ExperimentError::InvalidStudy(format!("margin must be positive, got {margin}")));
    }
    template.validate()?;
    let lattice = template.lattice;
    let s_field = forcing.to_field(lattice)?;
    let h_minus1 = s_field.homogeneous_norm(-1.0);
    let radius = absorbing_radius(&s_field, template.kappa, margin);
    let runs: Vec<(EnsembleMember, std::result::Result<Trajectory, IntegrationError>)> = ensemble
        .par_iter()
        .map(|&m| {
            let theta0 = crate::solver::random_initial_data(lattice, m.seed, band, m.l2_norm);
            (m, run_member(template, template.nu, forcing, theta0))
        })
        .collect();
    let mut members = Vec::new();
    let mut trajectories = Vec::new();
    for (m, outcome) in runs {
        match outcome {
            Ok(traj) => {
                members.push(ball_record(&traj, m, radius));
                trajectories.push((m.seed, traj));
            }
            Err(e) => {
                let mut rec = e
                    .partial
                    .as_deref()
                    .map(|t| ball_record(t, m, radius))
                    .unwrap_or(BallRecord {
                        seed: m.seed,
                        initial_norm: m.l2_norm,
                        entry_time: None,
                        max_ratio_after_entry: f64::INFINITY,
                        min_decay_rate: 0.0,
                        failure: None,
                    });
                rec.failure = Some(e.to_string());
                members.push(rec);
            }
        }
    }
    let mut distances = Vec::new();
    for w in trajectories.windows(2) {
        let series = trajectory_distance(&w[0].1, &w[1].1, weak_window)?;
        distances.push(((w[0].0, w[1].0), series));
    }
    Ok(AttractorProbe {
        radius,
        forcing_h_minus1: h_minus1,
        kappa: template.kappa,
        members,
        distances,
    })
}

/// `d_s(φ, ψ) = ‖φ − ψ‖_{L²}`.
pub fn strong_distance(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    Ok(a.difference(b)?.l2_norm())
}

/// `Σ_{|k|∞ ≤ K_w} 2^{−|k|} |φ̂_k − ψ̂_k| / (1 + |φ̂_k − ψ̂_k|)` over stored
/// modes, with Euclidean `|k|`.
pub fn weak_distance(a: &SpectralField, b: &SpectralField, window: i64) -> Result<f64> {
    a.check_same_lattice(b)?;
    let lattice = a.lattice();
    Ok(lattice
        .modes()
        .filter(|(_, k)| k.iter().all(|c| c.abs() <= window))
        .map(|(flat, k)| {
            let d = (a.coeffs()[flat] - b.coeffs()[flat]).norm();
            2f64.powf(-norm_sq(k).sqrt()) * d / (1.0 + d)
        })
        .sum())
}

/// `Σ_{k ∈ ℤ³, |k|∞ > K_w} 2^{−|k|}`, the largest possible contribution of the
/// modes left out of [`weak_distance`].
pub fn weak_tail_bound(window: i64) -> f64 {
    // Shells beyond |k|∞ = window + 64 contribute below 2^{-64} times a
    // polynomial count and are dropped.
    let outer = window + 64;
    let mut total = 0.0;
    for k1 in -outer..=outer {
        for k2 in -outer..=outer {
            for k3 in -outer..=outer {
                let m = k1.abs().max(k2.abs()).max(k3.abs());
                if m > window {
                    total += 2f64.powf(-norm_sq([k1, k2, k3]).sqrt());
                }
            }
        }
    }
    total
}

/// Strong and weak distances between two trajectories at their common
/// snapshot times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, window: i64) -> Result<DistanceSeries> {
    if a.lattice != b.lattice {
        return Err(SpectralError::LatticeMismatch(a.lattice.dims(), b.lattice.dims()).into());
    }
    let mut out = DistanceSeries {
        times: Vec::new(),
        strong: Vec::new(),
        weak: Vec::new(),
        tail_bound: weak_tail_bound(window),
    };
    for sa in &a.snapshots {
        if let Some(sb) = b.snapshots.iter().find(|s| (s.t - sa.t).abs() <= 1e-9) {
            out.times.push(sa.t);
            out.strong.push(strong_distance(&sa.theta, &sb.theta)?);
            out.weak.push(weak_distance(&sa.theta, &sb.theta, window)?);
        }
    }
    Ok(out)
}

/// One-sided Hausdorff distance `max_{φ∈A} min_{ψ∈B} ‖φ − ψ‖_{L²}`.
pub fn hausdorff_excess(cloud: &[SpectralField], reference: &[SpectralField]) -> Result<f64> {
    let mut worst = 0.0f64;
    for phi in cloud {
        let mut best = f64::INFINITY;
        for psi in reference {
            best = best.min(strong_distance(phi, psi)?);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemicontinuityReport {
    pub nu_list: Vec<f64>,
    /// `h(ν)` in the order of `nu_list`.
    pub excess: Vec<f64>,
    pub burn_in: f64,
    /// Largest absorbing-ball entry time among the members.
    pub max_entry_time: f64,
    pub cloud_sizes: Vec<usize>,
    pub label: &'static str,
}

impl SemicontinuityReport {
    /// `h` nonincreasing along `nu_list` up to a relative `tolerance`.
    pub fn is_nonincreasing(&self, tolerance: f64) -> bool {
        self.excess.windows(2).all(|w| w[1] <= w[0] * (1.0 + tolerance) + ERROR_FLOOR)
    }
}

pub const SEMICONTINUITY_LABEL: &str = "empirical proxy";

/// Burn-in must cover this many absorbing-ball entry times.
pub const BURN_IN_MULTIPLIER: f64 = 20.0;

/// Long-time point clouds for each `ν` (and the `ν = 0` reference) from the
/// seeded ensemble, compared through `h(ν)`.
pub fn semicontinuity_probe(
    nu_list: &[f64],
    ensemble: &[EnsembleMember],
    forcing: &ForcingSpec,
    band: i64,
    burn_in: f64,
    template: &SolverConfig,
) -> Result<SemicontinuityReport> {
    if nu_list.is_empty() || ensemble.is_empty() {
        return Err(ExperimentError::InvalidStudy("empty viscosity list or ensemble".into()));
    }
    if !(burn_in >= 0.0) || burn_in >= template.t_end {
        return Err(ExperimentError::BurnInNotReached(format!(
            "burn-in {burn_in} must lie in [0, T = {})",
            template.t_end
        )));
    }
    template.validate()?;
    let lattice = template.lattice;
    let s_field = forcing.to_field(lattice)?;
    let radius = absorbing_radius(&s_field, template.kappa, 0.1);

    let mut nus = vec![0.0];
    nus.extend(nu_list.iter().copied().filter(|nu| *nu > 0.0));
    let jobs: Vec<(f64, EnsembleMember)> = nus
        .iter()
        .flat_map(|&nu| ensemble.iter().map(move |&m| (nu, m)))
        .collect();
    let runs: Vec<(f64, EnsembleMember, std::result::Result<Trajectory, IntegrationError>)> = jobs
        .par_iter()
        .map(|&(nu, m)| {
            let theta0 = crate::solver::random_initial_data(lattice, m.seed, band, m.l2_norm);
            (nu, m, run_member(template, nu, forcing, theta0))
        })
        .collect();

    let mut max_entry = 0.0f64;
    let mut clouds: Vec<(f64, Vec<SpectralField>)> = nus.iter().map(|&nu| (nu, Vec::new())).collect();
    for (nu, m, outcome) in runs {
        let traj = outcome.map_err(|e| e.source)?;
        let rec = ball_record(&traj, m, radius);
        let entry = rec.entry_time.ok_or_else(|| {
            ExperimentError::BurnInNotReached(format!("seed {} at ν = {nu} never entered the ball", m.seed))
        })?;
        max_entry = max_entry.max(entry);
        let cloud = &mut clouds.iter_mut().find(|c| c.0 == nu).expect("cloud per ν").1;
        cloud.extend(
            traj.snapshots
                .into_iter()
                .filter(|s| s.t >= burn_in - 1e-12)
                .map(|s| s.theta),
        );
    }
    if burn_in < BURN_IN_MULTIPLIER * max_entry {
        return Err(ExperimentError::BurnInNotReached(format!(
            "burn-in {burn_in} is shorter than {BURN_IN_MULTIPLIER} × entry time {max_entry}"
        )));
    }
    let reference = clouds[0].1.clone();
    let mut excess = Vec::new();
    let mut sizes = Vec::new();
    for &nu in nu_list {
        let cloud = &clouds.iter().find(|c| c.0 == nu).expect("cloud per ν").1;
        sizes.push(cloud.len());
        excess.push(hausdorff_excess(cloud, &reference)?);
    }
    Ok(SemicontinuityReport {
        nu_list: nu_list.to_vec(),
        excess,
        burn_in,
        max_entry_time: max_entry,
        cloud_sizes: sizes,
        label: SEMICONTINUITY_LABEL,
    })
}
