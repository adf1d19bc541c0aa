//! Scenario runners behind the command-line subcommands. Every runner is
//! deterministic in its configuration; sweeps fan out over a thread pool
//! and gather results in axis order.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::bloch::GellMannBasis;
use crate::error::{Error, Result};
use crate::liouvillian::{compile_parts, LiouvillianAffine, LossCase, StirapGenerator};
use crate::propagator::{evolve_bloch, random_pure_state, Trajectory};
use crate::spectral::{ep_scan, EpScan, ScanOptions};
use crate::stirap::{dark_bloch, hamiltonian, ConstantCouplings};

use super::config::{CaseName, Jump, ScenarioConfig};
use super::output::{Cell, Table};

/// Resolution in `P3` below which two values count as equal.
pub const P3_RESOLUTION: f64 = 1e-4;

/// Window over which a converged `P3` may still move.
const SETTLING_WINDOW: f64 = 10.0;

const GOLDEN_ITERATIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub a: f64,
    pub p3: f64,
    /// `|P3(t_f) - P3(t_f - 10)|`.
    pub settling: f64,
    pub min_eigenvalue: f64,
    pub max_purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub case: String,
    /// Gamma-major, `a` varying fastest.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `(a, P3)` pairs at one loss rate.
    pub fn curve(&self, gamma: f64) -> Vec<(f64, f64)> {
        self.points.iter().filter(|p| p.gamma == gamma).map(|p| (p.a, p.p3)).collect()
    }

    pub fn p3(&self, gamma: f64, a: f64) -> Option<f64> {
        self.points.iter().find(|p| p.gamma == gamma && p.a == a).map(|p| p.p3)
    }

    /// Largest drop `P3(a_k) - P3(a_{k+1})` along the curve at `gamma`.
    pub fn worst_decrease(&self, gamma: f64) -> f64 {
        self.curve(gamma).windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.points.iter().map(|p| p.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn max_purity(&self) -> f64 {
        self.points.iter().map(|p| p.max_purity).fold(f64::NEG_INFINITY, f64::max)
    }

    /// With `tau` given, appends the closed-form dephasing estimate under
    /// both readings of its time scale, `T = sigma` and `T = 2 tau`.
    pub fn to_table(&self, diagnostic: Option<(f64, f64)>) -> Table {
        let mut cols = vec!["gamma", "a", "P3", "settling", "min_eigenvalue", "max_purity"];
        if diagnostic.is_some() {
            cols.extend(["P3_formula_T_sigma", "P3_formula_T_2tau"]);
        }
        let mut t = Table::new(cols);
        for p in &self.points {
            let mut row: Vec<Cell> =
                vec![p.gamma.into(), p.a.into(), p.p3.into(), p.settling.into(), p.min_eigenvalue.into(), p.max_purity.into()];
            if let Some((tau, sigma)) = diagnostic {
                row.push(dephasing_estimate(p.gamma, p.a, sigma, tau).into());
                row.push(dephasing_estimate(p.gamma, p.a, 2.0 * tau, tau).into());
            }
            t.push(row);
        }
        t
    }
}

/// `1/3 + 2/3 exp(-3 gamma a T^2 / (4 tau))`.
pub fn dephasing_estimate(gamma: f64, a: f64, t: f64, tau: f64) -> f64 {
    1.0 / 3.0 + 2.0 / 3.0 * (-3.0 * gamma * a * t * t / (4.0 * tau)).exp()
}

fn metadata(cfg: &ScenarioConfig, command: &str) -> Vec<(String, String)> {
    let mut m = vec![
        ("command".to_string(), command.to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    m.extend(cfg.to_pairs());
    m
}

/// Pulse-driven trajectory from the dark state at `theta = 0`.
pub fn stirap_trajectory(cfg: &ScenarioConfig, loss: &LossCase, gamma: f64, a: f64) -> Result<Trajectory> {
    let schedule = cfg.schedule.with_a(a);
    schedule.validate()?;
    let gen = StirapGenerator::new(schedule, loss, gamma)?;
    let integ = cfg.integrator.for_schedule(&schedule);
    evolve_bloch(&gen, &dark_bloch(0.0), cfg.t_span, &integ)
}

/// Final target population and trajectory diagnostics at one `(gamma, a)`.
pub fn sweep_point(cfg: &ScenarioConfig, loss: &LossCase, gamma: f64, a: f64) -> Result<SweepPoint> {
    let traj = stirap_trajectory(cfg, loss, gamma, a)?;
    let check = traj.check();
    Ok(SweepPoint {
        gamma,
        a,
        p3: traj.final_observables().p3,
        settling: traj.settling(SETTLING_WINDOW),
        min_eigenvalue: check.min_eigenvalue,
        max_purity: check.max_purity,
    })
}

fn sweep(cfg: &ScenarioConfig, loss: &LossCase, gammas: &[f64], a_values: &[f64]) -> Result<SweepResult> {
    let pairs: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| a_values.iter().map(move |&a| (g, a))).collect();
    let points = pairs
        .par_iter()
        .map(|&(g, a)| sweep_point(cfg, loss, g, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { case: loss.name().to_string(), points })
}

fn a_axis(cfg: &ScenarioConfig) -> Vec<f64> {
    cfg.a.values()
}

#[derive(Debug, Clone)]
pub struct ClosedRun {
    /// Single trajectory at `traj_a`.
    pub trajectory: Trajectory,
    /// `P3(a)` at zero loss.
    pub sweep: SweepResult,
}

impl ClosedRun {
    pub fn trajectory_table(&self, cfg: &ScenarioConfig) -> Table {
        trajectory_table(&self.trajectory, cfg, "evolve")
    }

    pub fn sweep_table(&self, cfg: &ScenarioConfig) -> Table {
        self.sweep.to_table(None).with_metadata(metadata(cfg, "sweep"))
    }
}

pub fn trajectory_table(traj: &Trajectory, cfg: &ScenarioConfig, command: &str) -> Table {
    let mut t = Table::new(traj.csv_header());
    for row in traj.csv_rows() {
        t.push(row.into_iter().map(Cell::Num).collect());
    }
    t.with_metadata(metadata(cfg, command))
}

pub fn run_closed_stirap(cfg: &ScenarioConfig) -> Result<ClosedRun> {
    cfg.validate()?;
    if cfg.case != CaseName::Closed {
        return Err(Error::Config(format!("closed-system run needs case = closed, got {}", cfg.case.as_str())));
    }
    let trajectory = stirap_trajectory(cfg, &LossCase::Closed, 0.0, cfg.traj_a)?;
    let sweep = sweep(cfg, &LossCase::Closed, &[0.0], &a_axis(cfg))?;
    Ok(ClosedRun { trajectory, sweep })
}

/// Single trajectory for the configured case at the first `gamma` and
/// `traj_a`.
pub fn run_evolve(cfg: &ScenarioConfig) -> Result<Table> {
    cfg.validate()?;
    let traj = stirap_trajectory(cfg, &cfg.loss_case()?, cfg.gamma.first(), cfg.traj_a)?;
    Ok(trajectory_table(&traj, cfg, "evolve"))
}

/// Affine generator at constant couplings `(g1, g2, delta)`.
pub fn constant_generator(cfg: &ScenarioConfig, loss: &LossCase, gamma: f64) -> Result<LiouvillianAffine> {
    let basis = GellMannBasis::new(3)?;
    let h = hamiltonian(cfg.g1, cfg.g2, cfg.schedule.delta);
    Ok(compile_parts(&h, &loss.channels(gamma)?, &basis))
}

#[derive(Debug, Clone)]
pub struct SpectrumRun {
    pub scan: EpScan,
}

impl SpectrumRun {
    /// Columns `gamma, index, re_mu, im_mu, condition, physical`, with the
    /// exceptional points and warnings as notes.
    pub fn to_table(&self, cfg: &ScenarioConfig) -> Table {
        let mut t = Table::new(["gamma", "index", "re_mu", "im_mu", "condition", "physical"]);
        for p in &self.scan.points {
            for (i, mu) in p.eigenvalues.iter().enumerate() {
                t.push(vec![p.gamma.into(), i.into(), mu.re.into(), mu.im.into(), p.condition[i].into(), p.physical[i].into()]);
            }
        }
        let mut t = t.with_metadata(metadata(cfg, "spectrum"));
        t.notes.push(("exceptional_points".into(), json!(self.scan.records)));
        t.notes.push(("warnings".into(), json!(self.scan.warnings)));
        t
    }
}

pub fn run_spectrum_scan(cfg: &ScenarioConfig) -> Result<SpectrumRun> {
    cfg.validate()?;
    let loss = cfg.loss_case()?;
    let grid = cfg.gamma.values();
    if grid.len() < 3 {
        return Err(Error::Config("spectrum scan needs a gamma grid of at least three points".into()));
    }
    let scan = ep_scan(|g| constant_generator(cfg, &loss, g), &grid, ScanOptions::default())?;
    Ok(SpectrumRun { scan })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceMap {
    pub times: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `z[k][i]` is `Z(times[i])` at `gammas[k]`.
    pub z: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub max_purity: f64,
}

impl ImbalanceMap {
    pub fn row(&self, gamma: f64) -> Option<&[f64]> {
        self.gammas.iter().position(|&g| g == gamma).map(|k| self.z[k].as_slice())
    }

    /// Long format `t, gamma, Z`.
    pub fn to_table(&self, cfg: &ScenarioConfig) -> Table {
        let mut t = Table::new(["t", "gamma", "Z"]);
        for (k, &g) in self.gammas.iter().enumerate() {
            for (i, &time) in self.times.iter().enumerate() {
                t.push(vec![time.into(), g.into(), self.z[k][i].into()]);
            }
        }
        t.with_metadata(metadata(cfg, "imbalance"))
    }
}

/// `Z(t)` at constant couplings from a seeded random pure state, one row
/// per loss rate.
pub fn run_imbalance_map(cfg: &ScenarioConfig) -> Result<ImbalanceMap> {
    cfg.validate()?;
    let loss = cfg.loss_case()?;
    let r0 = random_pure_state(cfg.seed);
    let gammas = cfg.gamma.values();
    let pulses = ConstantCouplings { g1: cfg.g1, g2: cfg.g2, delta: cfg.schedule.delta };
    let trajs = gammas
        .par_iter()
        .map(|&g| {
            let gen = StirapGenerator::new(pulses, &loss, g)?;
            evolve_bloch(&gen, &r0, cfg.t_span, &cfg.integrator)
        })
        .collect::<Result<Vec<_>>>()?;
    let checks: Vec<_> = trajs.iter().map(Trajectory::check).collect();
    Ok(ImbalanceMap {
        times: trajs[0].times.clone(),
        z: trajs.iter().map(|t| t.observables.iter().map(|o| o.z).collect()).collect(),
        gammas,
        min_eigenvalue: checks.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min),
        max_purity: checks.iter().map(|c| c.max_purity).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `P3(a)` for every configured loss rate.
pub fn run_open_sweep(cfg: &ScenarioConfig) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.case == CaseName::Closed {
        return Err(Error::Config("open sweep needs a lossy case".into()));
    }
    sweep(cfg, &cfg.loss_case()?, &cfg.gamma.values(), &a_axis(cfg))
}

pub fn sweep_table(result: &SweepResult, cfg: &ScenarioConfig) -> Table {
    let diagnostic = (cfg.case == CaseName::Dephasing).then_some((cfg.schedule.tau, cfg.schedule.sigma));
    result.to_table(diagnostic).with_metadata(metadata(cfg, "sweep"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AOpt {
    pub gamma: f64,
    pub a_opt: f64,
    pub p3_max: f64,
    /// `P3` at the two ends of the search window.
    pub p3_lower: f64,
    pub p3_upper: f64,
    /// False when the best value is not an interior maximum exceeding
    /// both ends by [`P3_RESOLUTION`].
    pub clear_maximum: bool,
}

/// Maximizes `P3(a)` at fixed `gamma`: coarse scan over the `a` axis, then
/// golden-section search in `log a` around the best grid point.
pub fn find_a_opt(cfg: &ScenarioConfig, gamma: f64) -> Result<AOpt> {
    cfg.validate()?;
    let loss = cfg.loss_case()?;
    let grid = a_axis(cfg);
    let coarse = sweep(cfg, &loss, &[gamma], &grid)?.curve(gamma);
    let (best, _) = coarse
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &(_, p))| if p > acc.1 { (i, p) } else { acc });
    let p3_lower = coarse[0].1;
    let p3_upper = coarse[coarse.len() - 1].1;
    let (mut a_opt, mut p3_max) = coarse[best];
    if best > 0 && best + 1 < coarse.len() {
        let f = |log_a: f64| sweep_point(cfg, &loss, gamma, log_a.exp()).map(|p| p.p3);
        let (mut lo, mut hi) = (coarse[best - 1].0.ln(), coarse[best + 1].0.ln());
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1)?, f(x2)?);
        for _ in 0..GOLDEN_ITERATIONS {
            if (hi - lo) < 1e-6 {
                break;
            }
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2)?;
            }
        }
        let (x, fx) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if fx > p3_max {
            a_opt = x.exp();
            p3_max = fx;
        }
    }
    let clear_maximum = best > 0
        && best + 1 < coarse.len()
        && p3_max > p3_lower + P3_RESOLUTION
        && p3_max > p3_upper + P3_RESOLUTION;
    Ok(AOpt { gamma, a_opt, p3_max, p3_lower, p3_upper, clear_maximum })
}

pub fn run_a_opt(cfg: &ScenarioConfig) -> Result<Vec<AOpt>> {
    cfg.gamma.values().iter().map(|&g| find_a_opt(cfg, g)).collect()
}

pub fn a_opt_table(results: &[AOpt], cfg: &ScenarioConfig) -> Table {
    let mut t = Table::new(["gamma", "a_opt", "P3_max", "P3_lower", "P3_upper", "clear_maximum"]);
    for r in results {
        t.push(vec![r.gamma.into(), r.a_opt.into(), r.p3_max.into(), r.p3_lower.into(), r.p3_upper.into(), r.clear_maximum.into()]);
    }
    t.with_metadata(metadata(cfg, "aopt"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssistRun {
    pub sweep: SweepResult,
    /// `P3(a)` without loss, on the same `a` axis.
    pub reference: Vec<(f64, f64)>,
}

impl AssistRun {
    /// `P3(gamma, a) - P3(0, a)`.
    pub fn gain(&self, gamma: f64, a: f64) -> Option<f64> {
        let base = self.reference.iter().find(|(x, _)| *x == a)?.1;
        Some(self.sweep.p3(gamma, a)? - base)
    }

    pub fn to_table(&self, cfg: &ScenarioConfig) -> Table {
        let mut t = Table::new(["gamma", "a", "P3", "P3_closed", "gain"]);
        for p in &self.sweep.points {
            let base = self.reference.iter().find(|(x, _)| *x == p.a).map_or(f64::NAN, |r| r.1);
            t.push(vec![p.gamma.into(), p.a.into(), p.p3.into(), base.into(), (p.p3 - base).into()]);
        }
        t.with_metadata(metadata(cfg, "assist"))
    }
}

/// Emission sweep alongside the lossless reference.
pub fn run_emission_assist(cfg: &ScenarioConfig) -> Result<AssistRun> {
    cfg.validate()?;
    if !matches!(cfg.case, CaseName::Emission | CaseName::Custom) {
        return Err(Error::Config(format!("assist run needs case = emission, got {}", cfg.case.as_str())));
    }
    let a_values = a_axis(cfg);
    let sweep = sweep(cfg, &cfg.loss_case()?, &cfg.gamma.values(), &a_values)?;
    let reference = self::sweep(cfg, &LossCase::Closed, &[0.0], &a_values)?.curve(0.0);
    Ok(AssistRun { sweep, reference })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariantPoint {
    pub gamma: f64,
    pub a: f64,
    pub p3_jump: f64,
    pub p3_incoherent: f64,
    pub p3_closed: f64,
}

impl VariantPoint {
    /// Environment effect of the configured jump and of the separate
    /// channels have the same sign (or both vanish within resolution).
    pub fn same_sign(&self) -> bool {
        let s = |x: f64| if x.abs() <= P3_RESOLUTION { 0 } else { x.signum() as i32 };
        s(self.p3_jump - self.p3_closed) == s(self.p3_incoherent - self.p3_closed)
    }
}

/// Configured jump operator (coherent by default) against the incoherent
/// emission pair and the closed system.
pub fn run_coherent_decay_variant(cfg: &ScenarioConfig) -> Result<Vec<VariantPoint>> {
    cfg.validate()?;
    let jump = match (&cfg.case, &cfg.jump) {
        (CaseName::Custom, j) | (CaseName::Emission, j @ Jump::Matrix(_)) => j.loss_case()?,
        _ => LossCase::coherent_emission(),
    };
    let a_values = a_axis(cfg);
    let gammas = cfg.gamma.values();
    let with_jump = sweep(cfg, &jump, &gammas, &a_values)?;
    let incoherent = sweep(cfg, &LossCase::Emission, &gammas, &a_values)?;
    let closed = sweep(cfg, &LossCase::Closed, &[0.0], &a_values)?.curve(0.0);
    Ok(with_jump
        .points
        .iter()
        .zip(&incoherent.points)
        .map(|(j, i)| VariantPoint {
            gamma: j.gamma,
            a: j.a,
            p3_jump: j.p3,
            p3_incoherent: i.p3,
            p3_closed: closed.iter().find(|(x, _)| *x == j.a).map_or(f64::NAN, |c| c.1),
        })
        .collect())
}

pub fn variant_table(points: &[VariantPoint], cfg: &ScenarioConfig) -> Table {
    let mut t = Table::new(["gamma", "a", "P3_jump", "P3_incoherent", "P3_closed", "same_sign"]);
    for p in points {
        t.push(vec![p.gamma.into(), p.a.into(), p.p3_jump.into(), p.p3_incoherent.into(), p.p3_closed.into(), p.same_sign().into()]);
    }
    t.with_metadata(metadata(cfg, "variant"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.set("samples", "201").unwrap();
        cfg
    }

    #[test]
    fn estimate_limits() {
        assert_eq!(dephasing_estimate(0.0, 1.0, 10.0, 10.0), 1.0);
        assert!((dephasing_estimate(1e3, 1.0, 10.0, 10.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_run_requires_closed_case() {
        assert!(run_closed_stirap(&quick()).is_err());
    }

    #[test]
    fn closed_sweep_is_ordered_and_reproducible() {
        let mut cfg = quick();
        cfg.set("case", "closed").unwrap();
        cfg.set("a", "0.1,0.5,2").unwrap();
        let run = run_closed_stirap(&cfg).unwrap();
        let again = run_closed_stirap(&cfg).unwrap();
        assert_eq!(run.sweep, again.sweep);
        let a: Vec<f64> = run.sweep.points.iter().map(|p| p.a).collect();
        assert_eq!(a, vec![0.1, 0.5, 2.0]);
        assert!(run.sweep.worst_decrease(0.0) < P3_RESOLUTION);
        assert!(run.sweep.p3(0.0, 2.0).unwrap() > 0.99);
        let table = run.sweep_table(&cfg);
        assert_eq!(table.rows.len(), 3);
        assert!(table.metadata.iter().any(|(k, v)| k == "case" && v == "closed"));
    }

    #[test]
    fn imbalance_starts_at_initial_state() {
        let mut cfg = quick();
        cfg.set("gamma", "0.5,2").unwrap();
        cfg.set("tspan", "0,5").unwrap();
        cfg.set("seed", "3").unwrap();
        let map = run_imbalance_map(&cfg).unwrap();
        let z0 = crate::propagator::observables(&random_pure_state(3)).z;
        for row in &map.z {
            assert_eq!(row[0], z0);
        }
        assert_eq!(map.to_table(&cfg).rows.len(), 2 * 201);
    }

    #[test]
    fn spectrum_needs_grid() {
        assert!(run_spectrum_scan(&quick()).is_err());
    }
}
