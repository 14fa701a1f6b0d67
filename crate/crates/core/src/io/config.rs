//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! n = 32
//!
//! [physics]
//! kappa = 1.0
//! nu = 0.0
//!
//! [[forcing.modes]]
//! k = [1, 1, 1]
//! re = 0.5
//! ```
//!
//! Every other key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{invalid, IoError, Result};
use crate::solver::{random_initial_data, DtPolicy, ForcingSpec, Integrator, SolverConfig, VelocityLaw};
use crate::spectral::{Lattice, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Points per axis for a cubic grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Per-axis sizes; overrides `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityKind {
    #[default]
    Mg,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub kappa: f64,
    #[serde(default)]
    pub nu: f64,
    /// Viscosities for sweeps, strictly decreasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nu_list: Vec<f64>,
    #[serde(default)]
    pub velocity: VelocityKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    #[default]
    EtdRk2,
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DtKind {
    #[default]
    Cfl,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub integrator: IntegratorKind,
    #[serde(default)]
    pub dt_policy: DtKind,
    /// Step for the fixed policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "defaults::c_cfl")]
    pub c_cfl: f64,
    #[serde(default = "defaults::dt_max")]
    pub dt_max: f64,
    #[serde(default = "defaults::t_end")]
    pub t_end: f64,
    #[serde(default = "defaults::snapshot_every")]
    pub snapshot_every: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            integrator: IntegratorKind::default(),
            dt_policy: DtKind::default(),
            dt: None,
            c_cfl: defaults::c_cfl(),
            dt_max: defaults::dt_max(),
            t_end: defaults::t_end(),
            snapshot_every: defaults::snapshot_every(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: [i64; 3],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomForcing {
    /// Falls back to the command-line seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "defaults::forcing_band")]
    pub band: i64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomForcing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Falls back to the command-line seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `|k|∞` band; defaults to `N/4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<i64>,
    #[serde(default = "defaults::l2_norm")]
    pub l2_norm: f64,
    /// Start from a stored snapshot instead of random data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            seed: None,
            band: None,
            l2_norm: defaults::l2_norm(),
            snapshot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::s_list")]
    pub s_list: Vec<f64>,
    #[serde(default = "defaults::r_margin")]
    pub r_margin: f64,
    #[serde(default = "defaults::k_w")]
    pub k_w: i64,
    /// Burn-in for attractor clouds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b: Option<f64>,
    /// Initial norms of ensemble members as multiples of the ball radius.
    #[serde(default = "defaults::ensemble_norms")]
    pub ensemble_norms: Vec<f64>,
    /// Seeds per ensemble norm.
    #[serde(default = "defaults::ensemble_seeds")]
    pub ensemble_seeds: u64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            tau: defaults::tau(),
            s_list: defaults::s_list(),
            r_margin: defaults::r_margin(),
            k_w: defaults::k_w(),
            t_b: None,
            ensemble_norms: defaults::ensemble_norms(),
            ensemble_seeds: defaults::ensemble_seeds(),
        }
    }
}

mod defaults {
    pub fn c_cfl() -> f64 {
        0.5
    }
    pub fn dt_max() -> f64 {
        1e-2
    }
    pub fn t_end() -> f64 {
        1.0
    }
    pub fn snapshot_every() -> f64 {
        0.1
    }
    pub fn forcing_band() -> i64 {
        2
    }
    pub fn l2_norm() -> f64 {
        1.0
    }
    pub fn tau() -> f64 {
        0.1
    }
    pub fn s_list() -> Vec<f64> {
        vec![0.0, 1.0]
    }
    pub fn r_margin() -> f64 {
        0.1
    }
    pub fn k_w() -> i64 {
        8
    }
    pub fn ensemble_norms() -> Vec<f64> {
        vec![0.1, 10.0]
    }
    pub fn ensemble_seeds() -> u64 {
        3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub study: StudySection,
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Missing {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(snap) = &cfg.initial.snapshot {
        if snap.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.initial.snapshot = Some(dir.join(snap));
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| IoError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serialisable")
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let dims = match (self.grid.n, self.grid.dims) {
            (_, Some(d)) => d,
            (Some(n), None) => [n; 3],
            (None, None) => return Err(invalid("grid.n", "grid size missing")),
        };
        let field = if self.grid.dims.is_some() { "grid.dims" } else { "grid.n" };
        Lattice::new(dims).map_err(|e| invalid(field, e))
    }

    /// Solver settings at the configured `ν`.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let lattice = self.lattice()?;
        let mut cfg = SolverConfig::new(lattice, self.physics.kappa, self.physics.nu);
        cfg.integrator = match self.time.integrator {
            IntegratorKind::EtdRk2 => Integrator::EtdRk2,
            IntegratorKind::ImexEuler => Integrator::ImexEuler,
        };
        cfg.dt_policy = match self.time.dt_policy {
            DtKind::Cfl => DtPolicy::Cfl {
                c_cfl: self.time.c_cfl,
                dt_max: self.time.dt_max,
            },
            DtKind::Fixed => DtPolicy::Fixed(
                self.time
                    .dt
                    .ok_or_else(|| invalid("time.dt", "required when dt_policy = \"fixed\""))?,
            ),
        };
        cfg.t_end = self.time.t_end;
        cfg.snapshot_every = self.time.snapshot_every;
        cfg.velocity = match self.physics.velocity {
            VelocityKind::Mg => VelocityLaw::Mg,
            VelocityKind::Zero => VelocityLaw::Zero,
        };
        cfg.validate().map_err(|e| {
            let field = match e.to_string() {
                m if m.contains("kappa") => "physics.kappa",
                m if m.contains("nu") => "physics.nu",
                _ => "time",
            };
            invalid(field, e)
        })?;
        Ok(cfg)
    }

    pub fn forcing(&self, fallback_seed: u64) -> Result<ForcingSpec> {
        let modes = self
            .forcing
            .modes
            .iter()
            .map(|m| (m.k, Complex64::new(m.re, m.im)));
        let explicit = ForcingSpec::new(modes).map_err(|e| invalid("forcing.modes", e))?;
        let Some(random) = &self.forcing.random else {
            return Ok(explicit);
        };
        if !explicit.is_zero() {
            return Err(invalid("forcing", "give either `modes` or `random`, not both"));
        }
        ForcingSpec::random_band(random.seed.unwrap_or(fallback_seed), random.band, random.l2_norm)
            .map_err(|e| invalid("forcing.random", e))
    }

    pub fn initial_band(&self) -> Result<i64> {
        let lattice = self.lattice()?;
        Ok(self
            .initial
            .band
            .unwrap_or((lattice.dims().iter().min().copied().unwrap_or(8) / 4) as i64))
    }

    /// `θ₀` from the snapshot path or from seeded random data.
    pub fn initial_data(&self, fallback_seed: u64) -> Result<SpectralField> {
        let lattice = self.lattice()?;
        if let Some(path) = &self.initial.snapshot {
            let snap = super::read_snapshot(path)?;
            if snap.theta.lattice() != lattice {
                return Err(invalid("initial.snapshot", "snapshot grid differs from grid section"));
            }
            return Ok(snap.theta);
        }
        Ok(random_initial_data(
            lattice,
            self.initial.seed.unwrap_or(fallback_seed),
            self.initial_band()?,
            self.initial.l2_norm,
        ))
    }

    fn validate(&self) -> Result<()> {
        let lattice = self.lattice()?;
        self.solver_config()?;
        self.forcing(0)?
            .to_field(lattice)
            .map_err(|e| invalid("forcing", e))?;
        let nus = &self.physics.nu_list;
        if nus.iter().any(|nu| !(*nu >= 0.0)) || nus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid(
                "physics.nu_list",
                "viscosities must be nonnegative and strictly decreasing",
            ));
        }
        if !(self.initial.l2_norm >= 0.0) {
            return Err(invalid("initial.l2_norm", "must be nonnegative"));
        }
        if let Some(band) = self.initial.band {
            if band < 1 {
                return Err(invalid("initial.band", "must be at least 1"));
            }
        }
        if self.study.s_list.iter().any(|s| !(*s >= 0.0)) {
            return Err(invalid("study.s_list", "Sobolev orders must be nonnegative"));
        }
        if !(self.study.r_margin > 0.0) {
            return Err(invalid("study.r_margin", "must be positive"));
        }
        if self.study.k_w < 0 {
            return Err(invalid("study.k_w", "must be nonnegative"));
        }
        if self.study.ensemble_norms.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("study.ensemble_norms", "must be nonnegative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
n = 32

[physics]
kappa = 1.0
nu = 0.0

[time]
t_end = 1.0

[[forcing.modes]]
k = [1, 1, 1]
re = 0.5
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let solver = cfg.solver_config().unwrap();
        assert_eq!(solver.lattice.dims(), [32; 3]);
        assert_eq!(solver.dt_policy, DtPolicy::Cfl { c_cfl: 0.5, dt_max: 1e-2 });
        assert_eq!(cfg.forcing(42).unwrap().modes().len(), 2);
        assert_eq!(cfg.initial_band().unwrap(), 8);
        assert_eq!(cfg.study.k_w, 8);
        // the echoed form parses back to the same configuration
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn gauge_violating_forcing_is_rejected() {
        let text = MINIMAL.replace("k = [1, 1, 1]", "k = [1, 1, 0]");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("gauge violation: k3=0"), "{err}");
        assert!(err.contains("forcing.modes"), "{err}");
    }

    #[test]
    fn odd_grid_is_rejected() {
        let err = RunConfig::from_toml(&MINIMAL.replace("n = 32", "n = 31")).unwrap_err();
        assert!(matches!(err, IoError::Invalid { ref field, .. } if field == "grid.n"), "{err}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_report_location() {
        let err = RunConfig::from_toml(&MINIMAL.replace("nu = 0.0", "nu = 0.0\nviscosity = 2")).unwrap_err();
        assert!(matches!(err, IoError::Syntax(_)));
        assert!(err.to_string().contains("viscosity"), "{err}");
        let err = RunConfig::from_toml(&MINIMAL.replace("kappa = 1.0", "kappa = ")).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = RunConfig::from_toml(&MINIMAL.replace("kappa = 1.0", "kappa = -1.0")).unwrap_err();
        assert!(matches!(err, IoError::Invalid { ref field, .. } if field == "physics.kappa"), "{err}");
        let err = RunConfig::from_toml(&MINIMAL.replace("nu = 0.0", "nu_list = [1e-3, 1e-2]")).unwrap_err();
        assert!(matches!(err, IoError::Invalid { ref field, .. } if field == "physics.nu_list"), "{err}");
        let fixed = MINIMAL.replace("t_end = 1.0", "t_end = 1.0\ndt_policy = \"fixed\"");
        let err = RunConfig::from_toml(&fixed).unwrap_err();
        assert!(matches!(err, IoError::Invalid { ref field, .. } if field == "time.dt"), "{err}");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            parse_config("/nonexistent/run.toml"),
            Err(IoError::Missing { .. })
        ));
    }
}
