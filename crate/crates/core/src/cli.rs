use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use mgsim_core::diagnostics::{self, calibrated_level, linf_norm, DeGiorgiData, EnergyLedger, DE_GIORGI_CALIBRATION};
use mgsim_core::experiments::{
    absorbing_ball_study, absorbing_radius, fit_continuity, semicontinuity_probe, vanishing_viscosity_study,
    EnsembleMember,
};
use mgsim_core::io::report::{self, CsvTable};
use mgsim_core::io::{parse_config, read_snapshot, write_csv, write_snapshot, RunConfig, SnapshotFile};
use mgsim_core::multipliers::{audit_divergence_free, audit_symbol_convergence, audit_uniform_bound, COMPONENT1_UNIFORM_BOUND};
use mgsim_core::solver::{ForcingSpec, Snapshot, Solver, SolverError, Trajectory};
use mgsim_core::spectral::{SpectralField, Transform};

/// Divergence residual accepted by `audit-symbols`.
const DIVERGENCE_TOL: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "mgsim", version, about = "Forced magneto-geostrophic active scalar on the 3-torus")]
pub struct Cli {
    /// Seed for every random draw not pinned by the config.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "mgsim-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory; writes snapshots, forcing and the energy ledger.
    Simulate { config: PathBuf },
    /// Scan the velocity symbol: divergence, uniform bound, convergence in ν.
    AuditSymbols {
        #[arg(long, num_args = 1.., default_values_t = [1.0, 1e-1, 1e-2, 1e-3])]
        nu: Vec<f64>,
        /// `|k|∞` window for the divergence and uniform-bound scans.
        #[arg(long = "K", default_value_t = 16)]
        k: i64,
        /// Euclidean radius for the convergence scan.
        #[arg(long = "L", default_value_t = 4)]
        l: i64,
    },
    /// Vanishing-viscosity sweep over `physics.nu_list`.
    NuSweep { config: PathBuf },
    /// Absorbing-ball ensemble, distances and, with `study.t_b`, the
    /// semicontinuity proxy.
    Attractor { config: PathBuf },
    /// Diagnostics on a directory written by `simulate`.
    Diagnose {
        trajectory: PathBuf,
        /// De Giorgi horizon; defaults to the last snapshot time.
        #[arg(long)]
        t0: Option<f64>,
        /// Upper bound on De Giorgi levels; lowered to what the cadence supports.
        #[arg(long, default_value_t = 6)]
        levels: usize,
    },
}

/// Marks failures caused by the dynamics rather than the inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Instability(String);

pub fn exit_code(err: &anyhow::Error) -> u8 {
    let unstable = err.chain().any(|e| {
        e.is::<Instability>() || matches!(e.downcast_ref::<SolverError>(), Some(SolverError::Unstable { .. }))
    });
    if unstable {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match cli.command {
        Command::Simulate { config } => simulate(&load(&config, &cli.out)?, cli.seed, &cli.out),
        Command::AuditSymbols { nu, k, l } => audit_symbols(&nu, k, l, &cli.out),
        Command::NuSweep { config } => nu_sweep(&load(&config, &cli.out)?, cli.seed, &cli.out),
        Command::Attractor { config } => attractor(&load(&config, &cli.out)?, cli.seed, &cli.out),
        Command::Diagnose { trajectory, t0, levels } => diagnose(&trajectory, t0, levels, &cli.out),
    }
}

/// Parses, then echoes the resolved configuration to stdout and the run log.
fn load(path: &Path, out: &Path) -> Result<RunConfig> {
    let cfg = parse_config(path).with_context(|| format!("config {}", path.display()))?;
    let resolved = cfg.to_toml();
    println!("# resolved configuration\n{resolved}");
    std::fs::write(out.join("resolved.toml"), resolved)?;
    Ok(cfg)
}

fn csv(out: &Path, name: &str, table: &CsvTable) -> Result<()> {
    let path = out.join(name);
    write_csv(&path, table).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn snapshot_name(i: usize) -> String {
    format!("theta_{i:05}.mgf")
}

fn simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let solver_cfg = cfg.solver_config()?;
    let forcing = cfg.forcing(seed)?;
    let theta0 = cfg.initial_data(seed)?;
    let lattice = solver_cfg.lattice;
    write_snapshot(
        out.join("forcing.mgf"),
        &SnapshotFile {
            t: 0.0,
            nu: solver_cfg.nu,
            kappa: solver_cfg.kappa,
            theta: forcing.to_field(lattice)?,
        },
    )?;
    let mut solver = Solver::new(solver_cfg.clone(), &forcing)?;
    let (traj, failure) = match solver.integrate(theta0) {
        Ok(traj) => (traj, None),
        Err(e) => match e.partial {
            Some(partial) => (*partial, Some(e.source)),
            None => return Err(e.source.into()),
        },
    };
    for (i, snap) in traj.snapshots.iter().enumerate() {
        write_snapshot(
            out.join(snapshot_name(i)),
            &SnapshotFile {
                t: snap.t,
                nu: traj.nu,
                kappa: traj.kappa,
                theta: snap.theta.clone(),
            },
        )?;
    }
    csv(out, "ledger.csv", &report::ledger_table(&traj.ledger))?;
    println!(
        "snapshots {}  steps {}  max ledger residual {:e}  max skew defect {:e}  max tail fraction {:e}",
        traj.snapshots.len(),
        traj.dt_history.len(),
        traj.ledger.max_residual(),
        traj.max_skew_defect,
        traj.max_tail_fraction
    );
    if !traj.is_resolved() {
        eprintln!("warning: spectral tail above 1e-6; the run is under-resolved");
    }
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn audit_symbols(nus: &[f64], window: i64, radius: i64, out: &Path) -> Result<()> {
    if window < 1 || radius < 1 {
        bail!("--K and --L must be at least 1");
    }
    let mut table = CsvTable::new(
        "symbol-audit-v1",
        &["audit", "nu", "window", "component", "empirical", "bound", "pass"],
    );
    let mut failed = Vec::new();
    let mut row = |audit: &str, nu: f64, w: i64, comp: &str, value: f64, bound: Option<f64>| {
        let pass = bound.map(|b| value <= b);
        if pass == Some(false) {
            failed.push(format!("{audit} ν = {nu} component {comp}: {value:e} > {:e}", bound.unwrap()));
        }
        table.push(vec![
            audit.into(),
            format!("{nu:?}"),
            w.to_string(),
            comp.into(),
            format!("{value:?}"),
            bound.map(|b| format!("{b:?}")).unwrap_or_default(),
            pass.map(|p| p.to_string()).unwrap_or_default(),
        ]);
    };
    for &nu in nus {
        row("divergence", nu, window, "all", audit_divergence_free(nu, window)?, Some(DIVERGENCE_TOL));
        let uniform = audit_uniform_bound(&[nu], window)?;
        for (j, v) in uniform.per_component.iter().enumerate() {
            let bound = (j == 0).then_some(COMPONENT1_UNIFORM_BOUND);
            row("uniform", nu, window, &(j + 1).to_string(), *v, bound);
        }
        let conv = audit_symbol_convergence(nu, radius)?;
        row("convergence", nu, radius, "1", conv.empirical_component1, Some(conv.analytic_bound));
        row("convergence", nu, radius, "max", conv.empirical_max, None);
    }
    csv(out, "symbol_audit.csv", &table)?;
    if !failed.is_empty() {
        bail!("symbol audit failed:\n  {}", failed.join("\n  "));
    }
    println!("all symbol audits passed");
    Ok(())
}

fn nu_sweep(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    if cfg.physics.nu_list.is_empty() {
        bail!("invalid field `physics.nu_list`: required for nu-sweep");
    }
    let template = cfg.solver_config()?;
    let forcing = cfg.forcing(seed)?;
    let theta0 = cfg.initial_data(seed)?;
    let report = vanishing_viscosity_study(
        &cfg.physics.nu_list,
        &theta0,
        &forcing,
        cfg.study.tau,
        &cfg.study.s_list,
        &template,
    )?;
    csv(out, "nu_sweep.csv", &report::sweep_table(&report))?;
    let violations = report.monotone_violations(mgsim_core::experiments::ERROR_FLOOR);
    println!("monotonicity violations: {}", violations.len());
    if let Some(&t_last) = report.times().last() {
        let pairs = report.squared_l2_errors(t_last);
        if pairs.len() >= 3 {
            let fit = fit_continuity(&pairs)?;
            match fit.slope {
                Some(slope) => println!("squared L2 error ~ nu^{slope:.4} at t = {t_last}"),
                None => println!("continuity fit degenerate at t = {t_last}"),
            }
        }
    }
    if !report.is_complete() {
        let msgs: Vec<String> = report.failures.iter().map(|(nu, m)| format!("ν = {nu}: {m}")).collect();
        return Err(Instability(format!("partial sweep; failed members:\n  {}", msgs.join("\n  "))).into());
    }
    Ok(())
}

fn attractor(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let template = cfg.solver_config()?;
    let forcing = cfg.forcing(seed)?;
    let lattice = template.lattice;
    let radius = absorbing_radius(&forcing.to_field(lattice)?, template.kappa, cfg.study.r_margin);
    let mut ensemble = Vec::new();
    for &mult in &cfg.study.ensemble_norms {
        for _ in 0..cfg.study.ensemble_seeds {
            ensemble.push(EnsembleMember {
                seed: seed + ensemble.len() as u64,
                l2_norm: mult * radius,
            });
        }
    }
    if ensemble.is_empty() {
        bail!("invalid field `study.ensemble_norms`: empty ensemble");
    }
    let band = cfg.initial_band()?;
    let probe = absorbing_ball_study(&ensemble, &forcing, cfg.study.r_margin, band, &template, cfg.study.k_w)?;
    csv(out, "absorbing_ball.csv", &report::ball_table(&probe))?;
    csv(out, "distances.csv", &report::distance_table(&probe))?;
    println!(
        "radius {:e}  members inside {}/{}",
        probe.radius,
        probe.members.iter().filter(|m| m.stays_inside()).count(),
        probe.members.len()
    );
    let failures: Vec<String> = probe
        .members
        .iter()
        .filter_map(|m| m.failure.as_ref().map(|f| format!("seed {}: {f}", m.seed)))
        .collect();
    if !failures.is_empty() {
        return Err(Instability(format!("ensemble members failed:\n  {}", failures.join("\n  "))).into());
    }
    if let (Some(t_b), false) = (cfg.study.t_b, cfg.physics.nu_list.is_empty()) {
        let semi = semicontinuity_probe(&cfg.physics.nu_list, &ensemble, &forcing, band, t_b, &template)?;
        csv(out, "semicontinuity.csv", &report::semicontinuity_table(&semi))?;
        println!("semicontinuity ({}): excess {:?}", semi.label, semi.excess);
    }
    Ok(())
}

/// Rebuilds a trajectory from the snapshot files of a `simulate` run.
fn load_trajectory(dir: &Path) -> Result<(Trajectory, SpectralField)> {
    let forcing = read_snapshot(dir.join("forcing.mgf"))
        .with_context(|| format!("{} is not a trajectory directory", dir.display()))?
        .theta;
    let mut snaps = Vec::new();
    for i in 0.. {
        let path = dir.join(snapshot_name(i));
        if !path.exists() {
            break;
        }
        snaps.push(read_snapshot(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let first = snaps.first().ok_or_else(|| anyhow!("no snapshots in {}", dir.display()))?;
    let (nu, kappa, lattice) = (first.nu, first.kappa, first.theta.lattice());
    if forcing.lattice() != lattice || snaps.iter().any(|s| s.theta.lattice() != lattice) {
        bail!("snapshots in {} use different grids", dir.display());
    }
    ForcingSpec::from_field(&forcing)?;
    let mut ledger = EnergyLedger::new(kappa);
    let mut snapshots = Vec::new();
    for s in snaps {
        ledger.push(s.t, &s.theta, &forcing);
        snapshots.push(Snapshot { t: s.t, theta: s.theta });
    }
    let max_tail_fraction = snapshots
        .iter()
        .map(|s| mgsim_core::solver::tail_fraction(&s.theta))
        .fold(0.0, f64::max);
    let traj = Trajectory {
        lattice,
        kappa,
        nu,
        snapshots,
        ledger,
        dt_history: Vec::new(),
        max_skew_defect: 0.0,
        max_tail_fraction,
    };
    Ok((traj, forcing))
}

fn diagnose(dir: &Path, t0: Option<f64>, levels: usize, out: &Path) -> Result<()> {
    let (traj, forcing) = load_trajectory(dir)?;
    let profile = diagnostics::linf_profile(&traj, &forcing)?;
    csv(out, "linf.csv", &report::linf_table(&profile))?;
    csv(out, "ledger.csv", &report::ledger_table(&traj.ledger))?;
    println!("sup L-infinity envelope ratio {:e}", profile.sup_ratio);

    let t0 = t0.unwrap_or(traj.final_snapshot().t);
    if !(t0 > 0.0) {
        println!("De Giorgi sequence skipped: trajectory has no positive times");
        return Ok(());
    }
    let gap = traj
        .snapshots
        .windows(2)
        .filter(|w| w[0].t < t0)
        .map(|w| w[1].t - w[0].t)
        .fold(0.0, f64::max);
    let supported = if gap > 0.0 { ((t0 / gap).log2().floor() as i64 - 1).max(0) as usize } else { 0 };
    let n_max = levels.min(supported);
    if n_max == 0 {
        println!("De Giorgi sequence skipped: snapshot cadence {gap} too coarse for t0 = {t0}");
        return Ok(());
    }
    let data = DeGiorgiData::new(&traj, t0, n_max)?;
    let s_linf = linf_norm(&mut Transform::new(traj.lattice), &forcing)?;
    let level = calibrated_level(data.c0(), t0, s_linf, DE_GIORGI_CALIBRATION);
    let seq = data.sequence(level, n_max);
    csv(out, "de_giorgi.csv", &report::de_giorgi_table(&seq))?;
    println!("De Giorgi levels {n_max}, H = {level:e}, nonincreasing: {}", seq.is_nonincreasing());
    Ok(())
}
