//! Scenario configuration: defaults, named presets, a flat `key = value`
//! file format and command-line overrides, applied in that order.
//!
//! Recognized keys:
//!
//! ```text
//! case       closed | dephasing | emission | coherent | custom
//! jump       coherent | incoherent | nine comma-separated reals (row-major)
//! gamma, a   value | v1,v2,... | lin:lo:hi:n | log:lo:hi:n
//! g0 tau sigma delta g1 g2
//! tspan      t0,t1
//! rel_tol abs_tol max_step samples
//! seed
//! traj_a     adiabaticity of the single trajectory in closed runs
//! out        output path (stdout when absent)
//! format     csv | json
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::bloch::CMatrix;
use crate::error::{Error, Result};
use crate::liouvillian::LossCase;
use crate::propagator::IntegratorConfig;
use crate::stirap::PulseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    Closed,
    Dephasing,
    Emission,
    /// Emission with the user-selected `jump`.
    Custom,
}

impl CaseName {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "closed" | "none" => Ok(CaseName::Closed),
            "dephasing" | "a" => Ok(CaseName::Dephasing),
            "emission" | "b" => Ok(CaseName::Emission),
            "custom" | "coherent" | "variant" => Ok(CaseName::Custom),
            other => Err(Error::Config(format!("unknown case '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CaseName::Closed => "closed",
            CaseName::Dephasing => "dephasing",
            CaseName::Emission => "emission",
            CaseName::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Jump {
    /// `|1><2| + |3><2|`.
    Coherent,
    /// The two separate channels `|1><2|`, `|3><2|`.
    Incoherent,
    Matrix(CMatrix),
}

impl Jump {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coherent" => return Ok(Jump::Coherent),
            "incoherent" => return Ok(Jump::Incoherent),
            _ => {}
        }
        let v = parse_list(s)?;
        if v.len() != 9 {
            return Err(Error::Validation(format!(
                "jump operator must be 3x3 (nine entries), got {} entries",
                v.len()
            )));
        }
        Ok(Jump::Matrix(CMatrix::from_fn(3, 3, |i, j| Complex64::new(v[3 * i + j], 0.0))))
    }

    pub fn loss_case(&self) -> Result<LossCase> {
        match self {
            Jump::Coherent => Ok(LossCase::coherent_emission()),
            Jump::Incoherent => Ok(LossCase::Emission),
            Jump::Matrix(m) => LossCase::custom(m.clone()),
        }
    }
}

impl fmt::Display for Jump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Jump::Coherent => write!(f, "coherent"),
            Jump::Incoherent => write!(f, "incoherent"),
            Jump::Matrix(m) => {
                let v: Vec<String> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| fmt_num(m[(i, j)].re)).collect();
                write!(f, "{}", v.join(","))
            }
        }
    }
}

/// A single value or a sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Axis {
    Value(f64),
    Grid(Vec<f64>),
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("lin:").or_else(|| s.strip_prefix("log:")) {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("grid '{s}' must read kind:lo:hi:n")));
            }
            let lo = parse_num(parts[0])?;
            let hi = parse_num(parts[1])?;
            let n: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad point count in '{s}'")))?;
            let grid = if s.starts_with("lin:") { lin_grid(lo, hi, n)? } else { log_grid(lo, hi, n)? };
            return Ok(Axis::Grid(grid));
        }
        let v = parse_list(s)?;
        match v.len() {
            0 => Err(Error::Config("empty axis".into())),
            1 => Ok(Axis::Value(v[0])),
            _ => {
                if v.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Config(format!("grid '{s}' is not sorted")));
                }
                Ok(Axis::Grid(v))
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Value(x) => vec![*x],
            Axis::Grid(v) => v.clone(),
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, Axis::Grid(_))
    }

    pub fn first(&self) -> f64 {
        match self {
            Axis::Value(x) => *x,
            Axis::Grid(v) => v[0],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Value(x) => write!(f, "{}", fmt_num(*x)),
            Axis::Grid(v) => {
                let s: Vec<String> = v.iter().map(|x| fmt_num(*x)).collect();
                write!(f, "{}", s.join(","))
            }
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn lin_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) {
        return Err(Error::Config(format!("linear grid needs lo < hi and n >= 2, got {lo}, {hi}, {n}")));
    }
    Ok((0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect())
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo > 0.0 && lo < hi) {
        return Err(Error::Config(format!("log grid needs 0 < lo < hi and n >= 2, got {lo}, {hi}, {n}")));
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

/// 40 log-spaced points in `[0.05, 2]`.
pub fn default_a_grid() -> Vec<f64> {
    log_grid(0.05, 2.0, 40).expect("valid grid")
}

fn parse_num(s: &str) -> Result<f64> {
    let x: f64 = s.trim().parse().map_err(|_| Error::Config(format!("'{}' is not a number", s.trim())))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("'{}' is not finite", s.trim())));
    }
    Ok(x)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_num).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub case: CaseName,
    pub jump: Jump,
    /// `a` in the schedule is overridden per point when `a` is a grid.
    pub schedule: PulseSchedule,
    /// Constant couplings for spectrum and imbalance runs.
    pub g1: f64,
    pub g2: f64,
    pub gamma: Axis,
    pub a: Axis,
    pub traj_a: f64,
    pub t_span: (f64, f64),
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            case: CaseName::Dephasing,
            jump: Jump::Coherent,
            schedule: PulseSchedule::default(),
            g1: 1.0,
            g2: 1.0,
            gamma: Axis::Value(0.0),
            a: Axis::Grid(default_a_grid()),
            traj_a: 1.0,
            t_span: (-100.0, 100.0),
            integrator: IntegratorConfig::default(),
            seed: 0,
            output: None,
            format: Format::Csv,
        }
    }
}

pub const PRESETS: [&str; 6] = ["fig2", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Key-value pairs of a named preset.
pub fn preset(name: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let common = [("g0", "1"), ("tau", "10"), ("sigma", "10"), ("delta", "0")];
    let mut kv: Vec<(&str, &str)> = common.to_vec();
    kv.extend(match name {
        "fig2" => vec![("case", "closed"), ("gamma", "0"), ("a", "log:0.05:2:40"), ("traj_a", "1"), ("tspan", "-100,100")],
        "fig4" => vec![("case", "dephasing"), ("gamma", "lin:0:20:401"), ("g1", "1"), ("g2", "1")],
        "fig5" => vec![("case", "emission"), ("gamma", "lin:0:20:401"), ("g1", "1"), ("g2", "1")],
        "fig6" => vec![
            ("case", "dephasing"),
            ("gamma", "log:0.01:10:31"),
            ("g1", "1"),
            ("g2", "1"),
            ("tspan", "0,20"),
            ("samples", "401"),
            ("seed", "1"),
        ],
        "fig7" => vec![("case", "dephasing"), ("gamma", "0,0.25,0.5,1,2"), ("a", "log:0.05:2:40"), ("tspan", "-100,100")],
        "fig8" => vec![("case", "emission"), ("gamma", "0,0.25,0.5,1,2"), ("a", "log:0.05:2:40"), ("tspan", "-100,100")],
        other => {
            return Err(Error::Config(format!("unknown preset '{other}', expected one of {}", PRESETS.join(", "))))
        }
    });
    Ok(kv)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ScenarioConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in preset(name)? {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (k, v) in parse_kv(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "case" => self.case = CaseName::parse(value)?,
            "jump" => self.jump = Jump::parse(value)?,
            "gamma" => self.gamma = Axis::parse(value)?,
            "a" => self.a = Axis::parse(value)?,
            "traj_a" => self.traj_a = parse_num(value)?,
            "g0" => self.schedule.g0 = parse_num(value)?,
            "tau" => self.schedule.tau = parse_num(value)?,
            "sigma" => self.schedule.sigma = parse_num(value)?,
            "delta" => self.schedule.delta = parse_num(value)?,
            "g1" => self.g1 = parse_num(value)?,
            "g2" => self.g2 = parse_num(value)?,
            "tspan" => {
                let v = parse_list(value)?;
                if v.len() != 2 {
                    return Err(Error::Config(format!("tspan needs two values, got '{value}'")));
                }
                self.t_span = (v[0], v[1]);
            }
            "rel_tol" => self.integrator.rel_tol = parse_num(value)?,
            "abs_tol" => self.integrator.abs_tol = parse_num(value)?,
            "max_step" => self.integrator.max_step = parse_num(value)?,
            "samples" => {
                self.integrator.samples =
                    value.trim().parse().map_err(|_| Error::Config(format!("bad sample count '{value}'")))?
            }
            "seed" => self.seed = value.trim().parse().map_err(|_| Error::Config(format!("bad seed '{value}'")))?,
            "out" => self.output = Some(PathBuf::from(value.trim())),
            "format" => self.format = Format::parse(value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.with_a(1.0).validate()?;
        self.integrator.validate()?;
        if !(self.t_span.0 < self.t_span.1) {
            return Err(Error::Config(format!("tspan must be increasing, got {:?}", self.t_span)));
        }
        if self.gamma.values().iter().any(|g| *g < 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if self.a.values().iter().any(|a| *a <= 0.0) || self.traj_a <= 0.0 {
            return Err(Error::Config("a must be positive".into()));
        }
        Ok(())
    }

    /// Loss channels selected by `case` (and `jump` for custom runs).
    pub fn loss_case(&self) -> Result<LossCase> {
        match self.case {
            CaseName::Closed => Ok(LossCase::Closed),
            CaseName::Dephasing => Ok(LossCase::Dephasing),
            CaseName::Emission => Ok(LossCase::Emission),
            CaseName::Custom => self.jump.loss_case(),
        }
    }

    /// All settings in config-file form, for metadata headers.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let s = &self.schedule;
        let mut v = vec![
            ("case", self.case.as_str().to_string()),
            ("jump", self.jump.to_string()),
            ("gamma", self.gamma.to_string()),
            ("a", self.a.to_string()),
            ("traj_a", fmt_num(self.traj_a)),
            ("g0", fmt_num(s.g0)),
            ("tau", fmt_num(s.tau)),
            ("sigma", fmt_num(s.sigma)),
            ("delta", fmt_num(s.delta)),
            ("g1", fmt_num(self.g1)),
            ("g2", fmt_num(self.g2)),
            ("tspan", format!("{},{}", fmt_num(self.t_span.0), fmt_num(self.t_span.1))),
            ("rel_tol", fmt_num(self.integrator.rel_tol)),
            ("abs_tol", fmt_num(self.integrator.abs_tol)),
            ("max_step", fmt_num(self.integrator.max_step)),
            ("samples", self.integrator.samples.to_string()),
            ("seed", self.seed.to_string()),
            ("format", match self.format {
                Format::Csv => "csv".to_string(),
                Format::Json => "json".to_string(),
            }),
        ];
        if let Some(p) = &self.output {
            v.push(("out", p.display().to_string()));
        }
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_forms() {
        assert_eq!(Axis::parse("0.5").unwrap(), Axis::Value(0.5));
        assert_eq!(Axis::parse("0, 1,2").unwrap(), Axis::Grid(vec![0.0, 1.0, 2.0]));
        assert!(Axis::parse("2,1").is_err());
        let g = Axis::parse("log:0.05:2:40").unwrap().values();
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[39], 2.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let l = Axis::parse("lin:0:20:401").unwrap().values();
        assert_eq!(l[200], 10.0);
        assert!(Axis::parse("log:0:1:3").is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = ScenarioConfig::from_preset("fig7").unwrap();
        cfg.set("rel-tol", "1e-9").unwrap();
        let text: String = cfg.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let mut back = ScenarioConfig::default();
        for (k, v) in parse_kv(&text).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            ScenarioConfig::from_preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::from_preset("fig3").is_err());
    }

    #[test]
    fn bad_input() {
        let mut cfg = ScenarioConfig::default();
        assert!(cfg.set("colour", "blue").is_err());
        assert!(cfg.set("tspan", "1").is_err());
        assert!(matches!(cfg.set("jump", "1,0,0,0"), Err(Error::Validation(_))));
        assert!(parse_kv("just words").is_err());
        cfg.set("tspan", "5,1").unwrap();
        assert!(cfg.validate().is_err());
    }
}
