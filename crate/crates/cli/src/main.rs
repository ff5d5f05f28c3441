//! `stirling` — equilibria, bifurcation curves, limit cycles and power maps
//! of the alpha Stirling engine, written as CSV/JSON into an output directory.

mod config;

use std::f64::consts::{PI, TAU};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use stirling_core::cycle::{find_limit_cycle, power_map, CycleOptions, CycleSummary};
use stirling_core::dynamics::{integrate, State};
use stirling_core::engine::potential_per_revolution;
use stirling_core::equilibria::{find_equilibria, pitchfork_locus, Census, PitchforkPoint};
use stirling_core::global::{
    continuation, BifurcationCurve, ContinuationMode, CurveFailure, CurveKind, ShootingOptions, Target,
};
use stirling_core::io::{csv_text, fmt_f64, write_equilibria, write_pitchfork};
use stirling_core::ode::Tolerances;
use stirling_core::EngineParams;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "stirling", version, about = "Bifurcation analysis of the alpha Stirling engine")]
struct Cli {
    /// JSON run configuration (engine parameters, tolerances, grids).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct Point {
    /// Phase shift α, rad (defaults to the configured value).
    #[arg(long)]
    alpha: Option<f64>,
    /// Hot temperature T_h, K (defaults to the configured value).
    #[arg(long = "th")]
    t_h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Homoclinic,
    Heteroclinic,
    Pitchfork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Sequential, each bracket seeded from the previous α.
    Warm,
    /// Every α scanned on its own, in parallel.
    Independent,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory and write `trajectory.csv`.
    Simulate {
        #[command(flatten)]
        point: Point,
        #[arg(long, default_value_t = 0.0)]
        q0: f64,
        #[arg(long, default_value_t = 0.0)]
        w0: f64,
        #[arg(long, default_value_t = 100.0)]
        tmax: f64,
        /// Largest integrator step, s.
        #[arg(long)]
        max_step: Option<f64>,
    },
    /// Equilibria at one parameter point (`equilibria.csv`).
    Equilibria {
        #[command(flatten)]
        point: Point,
    },
    /// Equilibria along an α sweep at fixed T_h (`local_diagram.csv`).
    LocalDiagram {
        #[arg(long = "th")]
        t_h: Option<f64>,
        /// Number of α values on [0, 2π).
        #[arg(long, default_value_t = 720)]
        n_alpha: usize,
    },
    /// Continue a bifurcation curve over α (`<kind>_curve.csv`, `<kind>_failures.csv`).
    Continue {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Warm)]
        mode: ModeArg,
        /// α spacing of the default grid on [0, π), rad.
        #[arg(long, default_value_t = 0.05)]
        alpha_step: f64,
        /// T_h sampling step of the pitchfork scan, K.
        #[arg(long, default_value_t = 2.0)]
        th_step: f64,
        #[arg(long, default_value_t = 300.0)]
        th_min: f64,
        #[arg(long, default_value_t = 500.0)]
        th_max: f64,
    },
    /// Limit cycle at one parameter point (`cycle.json`, `cycle.csv`).
    Cycle {
        #[command(flatten)]
        point: Point,
    },
    /// Average power over an (α, T_h) grid (`power_map.csv`, `ridge.csv`).
    PowerMap {
        #[arg(long, default_value_t = 0.1)]
        alpha_min: f64,
        #[arg(long, default_value_t = 3.1)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha_step: f64,
        #[arg(long, default_value_t = 305.0)]
        th_min: f64,
        #[arg(long, default_value_t = 500.0)]
        th_max: f64,
        #[arg(long, default_value_t = 5.0)]
        th_step: f64,
    },
    /// Equilibrium census and cycle existence at one point (`classify.json`).
    Classify {
        #[command(flatten)]
        point: Point,
    },
    /// Write the effective configuration (`config.json`).
    DumpConfig,
}

/// `lo, lo + step, …` up to `hi` inclusive (within rounding).
fn linspace_step(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        bail!("invalid grid: [{lo}, {hi}] with step {step}");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    let mut w = create(out, name)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(text)
}

fn at_point(cfg: &RunConfig, point: Point) -> Result<EngineParams> {
    let mut p = cfg.engine;
    if let Some(a) = point.alpha {
        p = p.with_alpha(a);
    }
    if let Some(t) = point.t_h {
        p = p.with_t_h(t);
    }
    p.validate()?;
    Ok(p)
}

fn cycle_options(cfg: &RunConfig) -> CycleOptions {
    let d = CycleOptions::default();
    CycleOptions {
        transient_tol: cfg.tolerances(),
        shooting_tol: Tolerances::new(d.shooting_tol.rel.min(cfg.tol_rel), d.shooting_tol.abs.min(cfg.tol_abs)),
        ..d
    }
}

fn write_curve(out: &Path, curve: &BifurcationCurve) -> Result<()> {
    let mut w = create(out, &format!("{}_curve.csv", curve.kind.as_str()))?;
    writeln!(w, "kind,alpha,t_h")?;
    for (a, t) in &curve.points {
        writeln!(w, "{},{},{}", curve.kind.as_str(), fmt_f64(*a), fmt_f64(*t))?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures(out: &Path, kind: CurveKind, failures: &[(f64, String)]) -> Result<()> {
    let mut w = create(out, &format!("{}_failures.csv", kind.as_str()))?;
    writeln!(w, "kind,alpha,reason")?;
    for (a, reason) in failures {
        writeln!(w, "{},{},{}", kind.as_str(), fmt_f64(*a), csv_text(reason))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, point: Point, q0: f64, w0: f64, tmax: f64, max_step: Option<f64>) -> Result<()> {
    let p = at_point(cfg, point)?;
    let mut tol = cfg.tolerances();
    if let Some(h) = max_step {
        tol = tol.with_max_step(h);
    }
    let traj = integrate(State::new(q0, w0), &p, tmax, tol)?;
    let mut w = create(out, "trajectory.csv")?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    info!("{} steps written", traj.len());
    Ok(())
}

fn cmd_equilibria(cfg: &RunConfig, out: &Path, point: Point) -> Result<()> {
    let p = at_point(cfg, point)?;
    let eqs = find_equilibria(&p)?;
    let mut w = create(out, "equilibria.csv")?;
    write_equilibria(&mut w, &[(p.alpha, p.t_h, eqs)])?;
    w.flush()?;
    Ok(())
}

fn cmd_local_diagram(cfg: &RunConfig, out: &Path, t_h: Option<f64>, n_alpha: usize) -> Result<()> {
    let p = at_point(cfg, Point { alpha: None, t_h })?;
    let grid = match &cfg.alpha_grid {
        Some(g) => g.clone(),
        None => {
            if n_alpha == 0 {
                bail!("--n-alpha must be positive");
            }
            (0..n_alpha).map(|k| k as f64 * TAU / n_alpha as f64).collect()
        }
    };
    let rows = stirling_core::equilibria::local_diagram(&p, &grid)?;
    let rows: Vec<(f64, f64, _)> = rows.into_iter().map(|(a, e)| (a, p.t_h, e)).collect();
    let mut w = create(out, "local_diagram.csv")?;
    write_equilibria(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn mirror_pitchfork(points: &[PitchforkPoint]) -> Vec<PitchforkPoint> {
    let mut all = points.to_vec();
    all.extend(
        points
            .iter()
            .filter(|pt| pt.alpha > 0.0 && pt.alpha < PI)
            .map(|pt| PitchforkPoint {
                alpha: TAU - pt.alpha,
                q_star: (TAU - pt.q_star).rem_euclid(TAU),
                ..*pt
            }),
    );
    all.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.t_h.total_cmp(&b.t_h)));
    all
}

#[allow(clippy::too_many_arguments)]
fn cmd_continue(
    cfg: &RunConfig,
    out: &Path,
    kind: KindArg,
    mode: ModeArg,
    alpha_step: f64,
    th_range: (f64, f64),
    th_step: f64,
) -> Result<()> {
    let (points, failures, fraction) = match kind {
        KindArg::Pitchfork => {
            let grid = match &cfg.alpha_grid {
                Some(g) => g.clone(),
                None => linspace_step(0.0, PI, alpha_step)?,
            };
            let locus = pitchfork_locus(&cfg.engine, &grid, th_range, th_step)?;
            let mirrored = mirror_pitchfork(&locus.points);
            let mut w = create(out, "pitchfork.csv")?;
            write_pitchfork(&mut w, &mirrored)?;
            w.flush()?;
            let curve = BifurcationCurve {
                kind: CurveKind::Pitchfork,
                points: mirrored.iter().map(|pt| (pt.alpha, pt.t_h)).collect(),
            };
            let n = locus.points.len() + locus.dropped.len();
            let fraction = if n == 0 { 1.0 } else { locus.points.len() as f64 / n as f64 };
            let failures: Vec<(f64, String)> = locus
                .dropped
                .iter()
                .map(|f| (f.alpha, format!("T_h={}: {}", fmt_f64(f.t_h), f.reason)))
                .collect();
            (curve, failures, fraction)
        }
        KindArg::Homoclinic | KindArg::Heteroclinic => {
            let target = if kind == KindArg::Homoclinic { Target::Homoclinic } else { Target::Heteroclinic };
            let grid = match &cfg.alpha_grid {
                Some(g) => g.clone(),
                None => linspace_step(0.0, PI - 1e-12, alpha_step)?,
            };
            let opts = ShootingOptions {
                tol: cfg.tolerances(),
                ..ShootingOptions::default()
            };
            let mode = match mode {
                ModeArg::Warm => ContinuationMode::WarmStart,
                ModeArg::Independent => ContinuationMode::Independent,
            };
            let result = continuation(target, &grid, &cfg.engine, &opts, mode)?;
            let failures = result
                .failures
                .iter()
                .map(|f: &CurveFailure| (f.alpha, f.reason.clone()))
                .collect();
            (result.curve.with_mirror(), failures, result.success_fraction())
        }
    };
    write_curve(out, &points)?;
    write_failures(out, points.kind, &failures)?;
    info!(
        "{} curve: {} points, {} omitted or failed",
        points.kind.as_str(),
        points.points.len(),
        failures.len()
    );
    if fraction < 0.9 {
        bail!(
            "only {:.0}% of the {} grid points succeeded (see {}_failures.csv)",
            100.0 * fraction,
            points.kind.as_str(),
            points.kind.as_str()
        );
    }
    Ok(())
}

fn cmd_cycle(cfg: &RunConfig, out: &Path, point: Point) -> Result<()> {
    let p = at_point(cfg, point)?;
    let summary = match find_limit_cycle(&p, &cycle_options(cfg))? {
        Some(c) => {
            let mut w = create(out, "cycle.csv")?;
            c.write_csv(&mut w, &p)?;
            w.flush()?;
            c.summary(&p)
        }
        None => {
            // never leave a stale loop next to a negative summary
            let stale = out.join("cycle.csv");
            if stale.exists() {
                fs::remove_file(&stale)?;
            }
            CycleSummary::absent(&p)
        }
    };
    println!("{}", write_json(out, "cycle.json", &summary)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_power_map(cfg: &RunConfig, out: &Path, alpha: (f64, f64, f64), th: (f64, f64, f64)) -> Result<()> {
    let alphas = match &cfg.alpha_grid {
        Some(g) => g.clone(),
        None => linspace_step(alpha.0, alpha.1, alpha.2)?,
    };
    let temps = match &cfg.t_h_grid {
        Some(g) => g.clone(),
        None => linspace_step(th.0, th.1, th.2)?,
    };
    let map = power_map(&alphas, &temps, &cfg.engine, &cycle_options(cfg))?;
    let mut w = create(out, "power_map.csv")?;
    map.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "ridge.csv")?;
    map.write_ridge_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "power_failures.csv")?;
    writeln!(w, "alpha,t_h,reason")?;
    for f in &map.failures {
        writeln!(w, "{},{},{}", fmt_f64(f.alpha), fmt_f64(f.t_h), csv_text(&f.reason))?;
    }
    w.flush()?;
    if !map.failures.is_empty() {
        warn!("{} of {} grid points failed", map.failures.len(), alphas.len() * temps.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct Classification {
    alpha: f64,
    t_h: f64,
    equilibrium_count: usize,
    census: Census,
    u_2pi: f64,
    has_cycle: bool,
    cycle_direction: Option<i8>,
}

fn cmd_classify(cfg: &RunConfig, out: &Path, point: Point) -> Result<()> {
    let p = at_point(cfg, point)?;
    let eqs = find_equilibria(&p)?;
    let cycle = find_limit_cycle(&p, &cycle_options(cfg))?;
    let c = Classification {
        alpha: p.alpha,
        t_h: p.t_h,
        equilibrium_count: eqs.len(),
        census: Census::of(&eqs),
        u_2pi: potential_per_revolution(&p),
        has_cycle: cycle.is_some(),
        cycle_direction: cycle.map(|c| c.direction_sign),
    };
    println!("{}", write_json(out, "classify.json", &c)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(r) = cli.tol_rel {
        cfg.tol_rel = r;
    }
    if let Some(a) = cli.tol_abs {
        cfg.tol_abs = a;
    }
    cfg.validate()?;
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match cli.command {
        Command::Simulate { point, q0, w0, tmax, max_step } => cmd_simulate(&cfg, out, point, q0, w0, tmax, max_step),
        Command::Equilibria { point } => cmd_equilibria(&cfg, out, point),
        Command::LocalDiagram { t_h, n_alpha } => cmd_local_diagram(&cfg, out, t_h, n_alpha),
        Command::Continue { kind, mode, alpha_step, th_step, th_min, th_max } => {
            cmd_continue(&cfg, out, kind, mode, alpha_step, (th_min, th_max), th_step)
        }
        Command::Cycle { point } => cmd_cycle(&cfg, out, point),
        Command::PowerMap { alpha_min, alpha_max, alpha_step, th_min, th_max, th_step } => cmd_power_map(
            &cfg,
            out,
            (alpha_min, alpha_max, alpha_step),
            (th_min, th_max, th_step),
        ),
        Command::Classify { point } => cmd_classify(&cfg, out, point),
        Command::DumpConfig => {
            let text = cfg.to_json();
            fs::write(out.join("config.json"), format!("{text}\n"))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
