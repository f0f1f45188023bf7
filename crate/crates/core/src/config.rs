//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Numbers may be
//! written as fractions (`lattice.a_t = 1/30`). Unknown keys are rejected.
//! [`RunConfig::to_text`] emits every key, and the result parses back to an
//! identical configuration.

use std::path::{Path, PathBuf};

use crate::basis::{BasisFlavor, DensityMode};
use crate::error::{Error, Result};
use crate::lattice::LatticeSettings;
use crate::model::{ChainBoundary, LatticeParams, ModelParams};
use crate::sampler::MetropolisConfig;
use crate::table::fmt_f64;
use crate::thermo::{beta_grid, LevelSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Spectrum,
    Thermo,
    Lattice,
    Compare,
    Oracle,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Spectrum => "spectrum",
            Pipeline::Thermo => "thermo",
            Pipeline::Lattice => "lattice",
            Pipeline::Compare => "compare",
            Pipeline::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spectrum" => Pipeline::Spectrum,
            "thermo" => Pipeline::Thermo,
            "lattice" => Pipeline::Lattice,
            "compare" => Pipeline::Compare,
            "oracle" => Pipeline::Oracle,
            _ => return Err(Error::Config(format!("unknown pipeline {s:?}"))),
        })
    }
}

/// How transition-matrix entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Brownian-bridge Monte Carlo.
    MonteCarlo,
    /// Closed-form harmonic or free kernel (single site, λ = 0 only).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    Kde,
    Gaussian,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    pub flavor: BasisFlavor,
    pub n_stoch: usize,
    pub n_nodes: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub density: DensityKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsConfig {
    pub n_bridges: usize,
    /// Endpoint ensemble size for the stochastic basis.
    pub n_paths: usize,
    pub n_configs_u: usize,
    pub n_configs_c: usize,
    pub n_configs_f: usize,
    pub thermalization: usize,
    pub decorrelation: usize,
    pub chains: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaGridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log_spacing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub model: ModelParams,
    pub n_sites: usize,
    pub a_s: f64,
    /// Time step of the transition amplitude.
    pub a_t: f64,
    /// T₀ for the spectrum.
    pub transition_time: f64,
    pub a_t_u: f64,
    pub a_t_c: f64,
    pub a_t_f: f64,
    pub basis: BasisConfig,
    pub kernel: KernelMode,
    pub noise_kappa: f64,
    pub statistics: StatisticsConfig,
    pub beta: BetaGridConfig,
    pub levels: LevelSelection,
    pub window: (f64, f64),
    pub oracle_points: usize,
    pub oracle_x_min: f64,
    pub oracle_x_max: f64,
    pub oracle_levels: usize,
    pub spectrum_file: Option<PathBuf>,
    /// Spectrum at N_s + 1 sites for the pressure.
    pub spectrum_file_dv: Option<PathBuf>,
    pub table_a: Option<PathBuf>,
    pub table_b: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: Pipeline::Spectrum,
            seed: 1,
            workers: 1,
            output_dir: PathBuf::from("out"),
            model: ModelParams::default(),
            n_sites: 9,
            a_s: 1.0,
            a_t: 1.0 / 30.0,
            transition_time: 2.0,
            a_t_u: 1.0 / 30.0,
            a_t_c: 0.1,
            a_t_f: 0.01,
            basis: BasisConfig {
                flavor: BasisFlavor::Stochastic,
                n_stoch: 100,
                n_nodes: 40,
                x_min: -5.0,
                x_max: 5.0,
                density: DensityKind::Kde,
            },
            kernel: KernelMode::MonteCarlo,
            noise_kappa: 2.0,
            statistics: StatisticsConfig {
                n_bridges: 1000,
                n_paths: 300,
                n_configs_u: 20_000,
                n_configs_c: 20_000,
                n_configs_f: 20_000,
                thermalization: 1000,
                decorrelation: 10,
                chains: 4,
                step: 0.5,
            },
            beta: BetaGridConfig {
                min: 1.0,
                max: 10.0,
                count: 19,
                log_spacing: false,
            },
            levels: LevelSelection::Resolved,
            window: (1.0, 10.0),
            oracle_points: 400,
            oracle_x_min: -6.0,
            oracle_x_max: 6.0,
            oracle_levels: 10,
            spectrum_file: None,
            spectrum_file_dv: None,
            table_a: None,
            table_b: None,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let bad = || Error::Config(format!("{key}: not a number: {v:?}"));
    let x = match v.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => v.parse().map_err(|_| bad())?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{key}: not a nonnegative integer: {v:?}")))
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Sets one key. Keys are the dotted names emitted by [`to_text`](Self::to_text).
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let f = |v| parse_f64(key, v);
        let u = |v| parse_usize(key, v);
        match key {
            "pipeline" => self.pipeline = v.parse()?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: not a u64: {v:?}")))?,
            "workers" => self.workers = u(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "model.omega" => self.model.omega = f(v)?,
            "model.omega0" => self.model.omega0 = f(v)?,
            "model.lambda" => self.model.lambda = f(v)?,
            "model.mass" => self.model.mass = f(v)?,
            "model.hbar" => self.model.hbar = f(v)?,
            "model.kb" => self.model.kb = f(v)?,
            "model.boundary" => self.model.boundary = v.parse::<ChainBoundary>()?,
            "lattice.n_sites" => self.n_sites = u(v)?,
            "lattice.a_s" => self.a_s = f(v)?,
            "lattice.a_t" => self.a_t = f(v)?,
            "lattice.transition_time" => self.transition_time = f(v)?,
            "lattice.a_t_u" => self.a_t_u = f(v)?,
            "lattice.a_t_c" => self.a_t_c = f(v)?,
            "lattice.a_t_f" => self.a_t_f = f(v)?,
            "basis.flavor" => self.basis.flavor = v.parse()?,
            "basis.n_stoch" => self.basis.n_stoch = u(v)?,
            "basis.n_nodes" => self.basis.n_nodes = u(v)?,
            "basis.x_min" => self.basis.x_min = f(v)?,
            "basis.x_max" => self.basis.x_max = f(v)?,
            "basis.density" => {
                self.basis.density = match v {
                    "kde" => DensityKind::Kde,
                    "gaussian" => DensityKind::Gaussian,
                    "free" => DensityKind::Free,
                    _ => return Err(Error::Config(format!("basis.density: unknown mode {v:?}"))),
                }
            }
            "spectrum.kernel" => {
                self.kernel = match v {
                    "mc" => KernelMode::MonteCarlo,
                    "exact" => KernelMode::Exact,
                    _ => return Err(Error::Config(format!("spectrum.kernel: unknown mode {v:?}"))),
                }
            }
            "spectrum.noise_kappa" => self.noise_kappa = f(v)?,
            "statistics.n_bridges" => self.statistics.n_bridges = u(v)?,
            "statistics.n_paths" => self.statistics.n_paths = u(v)?,
            "statistics.n_configs" => {
                let n = u(v)?;
                self.statistics.n_configs_u = n;
                self.statistics.n_configs_c = n;
                self.statistics.n_configs_f = n;
            }
            "statistics.n_configs_u" => self.statistics.n_configs_u = u(v)?,
            "statistics.n_configs_c" => self.statistics.n_configs_c = u(v)?,
            "statistics.n_configs_f" => self.statistics.n_configs_f = u(v)?,
            "statistics.thermalization" => self.statistics.thermalization = u(v)?,
            "statistics.decorrelation" => self.statistics.decorrelation = u(v)?,
            "statistics.chains" => self.statistics.chains = u(v)?,
            "statistics.step" => self.statistics.step = f(v)?,
            "beta.min" => self.beta.min = f(v)?,
            "beta.max" => self.beta.max = f(v)?,
            "beta.count" => self.beta.count = u(v)?,
            "beta.spacing" => {
                self.beta.log_spacing = match v {
                    "linear" => false,
                    "log" => true,
                    _ => return Err(Error::Config(format!("beta.spacing: expected linear or log, got {v:?}"))),
                }
            }
            "thermo.levels" => {
                self.levels = match v {
                    "resolved" => LevelSelection::Resolved,
                    "all" => LevelSelection::All,
                    _ => return Err(Error::Config(format!("thermo.levels: expected resolved or all, got {v:?}"))),
                }
            }
            "thermo.window_min" => self.window.0 = f(v)?,
            "thermo.window_max" => self.window.1 = f(v)?,
            "oracle.points" => self.oracle_points = u(v)?,
            "oracle.x_min" => self.oracle_x_min = f(v)?,
            "oracle.x_max" => self.oracle_x_max = f(v)?,
            "oracle.levels" => self.oracle_levels = u(v)?,
            "input.spectrum" => self.spectrum_file = parse_path(v),
            "input.spectrum_dv" => self.spectrum_file_dv = parse_path(v),
            "input.table_a" => self.table_a = parse_path(v),
            "input.table_b" => self.table_b = parse_path(v),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: name.to_string(),
                line: i + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| match e {
                Error::Config(msg) => Error::Parse { path: name.to_string(), line: i + 1, msg },
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Recovers the configuration stamped at the top of an output file.
    /// The stamp is the leading comment block ending with `input.table_b`.
    pub fn from_header(text: &str, name: &str) -> Result<Self> {
        let mut block = String::new();
        for line in text.lines() {
            let Some(body) = line.strip_prefix('#') else { break };
            let body = body.trim();
            block.push_str(body);
            block.push('\n');
            if body.starts_with("input.table_b") {
                return Self::parse(&block, name);
            }
        }
        Err(Error::Parse {
            path: name.to_string(),
            line: 1,
            msg: "no configuration header".into(),
        })
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let s = &self.statistics;
        let density = match self.basis.density {
            DensityKind::Kde => "kde",
            DensityKind::Gaussian => "gaussian",
            DensityKind::Free => "free",
        };
        let entries: Vec<(&str, String)> = vec![
            ("pipeline", self.pipeline.as_str().into()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("model.omega", fmt_f64(m.omega)),
            ("model.omega0", fmt_f64(m.omega0)),
            ("model.lambda", fmt_f64(m.lambda)),
            ("model.mass", fmt_f64(m.mass)),
            ("model.hbar", fmt_f64(m.hbar)),
            ("model.kb", fmt_f64(m.kb)),
            ("model.boundary", m.boundary.as_str().into()),
            ("lattice.n_sites", self.n_sites.to_string()),
            ("lattice.a_s", fmt_f64(self.a_s)),
            ("lattice.a_t", fmt_f64(self.a_t)),
            ("lattice.transition_time", fmt_f64(self.transition_time)),
            ("lattice.a_t_u", fmt_f64(self.a_t_u)),
            ("lattice.a_t_c", fmt_f64(self.a_t_c)),
            ("lattice.a_t_f", fmt_f64(self.a_t_f)),
            ("basis.flavor", self.basis.flavor.as_str().into()),
            ("basis.n_stoch", self.basis.n_stoch.to_string()),
            ("basis.n_nodes", self.basis.n_nodes.to_string()),
            ("basis.x_min", fmt_f64(self.basis.x_min)),
            ("basis.x_max", fmt_f64(self.basis.x_max)),
            ("basis.density", density.into()),
            ("spectrum.kernel", match self.kernel {
                KernelMode::MonteCarlo => "mc".into(),
                KernelMode::Exact => "exact".into(),
            }),
            ("spectrum.noise_kappa", fmt_f64(self.noise_kappa)),
            ("statistics.n_bridges", s.n_bridges.to_string()),
            ("statistics.n_paths", s.n_paths.to_string()),
            ("statistics.n_configs_u", s.n_configs_u.to_string()),
            ("statistics.n_configs_c", s.n_configs_c.to_string()),
            ("statistics.n_configs_f", s.n_configs_f.to_string()),
            ("statistics.thermalization", s.thermalization.to_string()),
            ("statistics.decorrelation", s.decorrelation.to_string()),
            ("statistics.chains", s.chains.to_string()),
            ("statistics.step", fmt_f64(s.step)),
            ("beta.min", fmt_f64(self.beta.min)),
            ("beta.max", fmt_f64(self.beta.max)),
            ("beta.count", self.beta.count.to_string()),
            ("beta.spacing", if self.beta.log_spacing { "log" } else { "linear" }.into()),
            ("thermo.levels", match self.levels {
                LevelSelection::Resolved => "resolved".into(),
                LevelSelection::All => "all".into(),
            }),
            ("thermo.window_min", fmt_f64(self.window.0)),
            ("thermo.window_max", fmt_f64(self.window.1)),
            ("oracle.points", self.oracle_points.to_string()),
            ("oracle.x_min", fmt_f64(self.oracle_x_min)),
            ("oracle.x_max", fmt_f64(self.oracle_x_max)),
            ("oracle.levels", self.oracle_levels.to_string()),
            ("input.spectrum", show_path(&self.spectrum_file)),
            ("input.spectrum_dv", show_path(&self.spectrum_file_dv)),
            ("input.table_a", show_path(&self.table_a)),
            ("input.table_b", show_path(&self.table_b)),
        ];
        entries.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Header stamped on every output file. Excludes `workers` and
    /// `output_dir`, which do not affect results.
    pub fn stamp(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("workers ") && !l.starts_with("output_dir "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// Checks every field used by the selected pipeline.
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.into()));
        if self.workers == 0 {
            return err("workers must be >= 1");
        }
        match self.pipeline {
            Pipeline::Spectrum | Pipeline::Lattice | Pipeline::Oracle => self.model.validate()?,
            _ => {}
        }
        if !(self.model.kb > 0.0 && self.model.hbar > 0.0) {
            return err("model.kb and model.hbar must be > 0");
        }
        match self.pipeline {
            Pipeline::Spectrum => {
                self.lattice()?;
                if !(self.noise_kappa >= 0.0) {
                    return err("spectrum.noise_kappa must be >= 0");
                }
                if self.kernel == KernelMode::MonteCarlo && self.statistics.n_bridges < 2 {
                    return err("statistics.n_bridges must be >= 2");
                }
                match self.basis.flavor {
                    BasisFlavor::Regular => {
                        if self.n_sites != 1 {
                            return err("a regular basis needs lattice.n_sites = 1");
                        }
                        if self.basis.n_nodes < 2 || !(self.basis.x_max > self.basis.x_min) {
                            return err("regular basis needs basis.n_nodes >= 2 and x_max > x_min");
                        }
                    }
                    BasisFlavor::Stochastic => {
                        if self.basis.n_stoch == 0 || self.statistics.n_paths < self.basis.n_stoch {
                            return err("stochastic basis needs 1 <= basis.n_stoch <= statistics.n_paths");
                        }
                        self.metropolis().validate()?;
                    }
                }
                if self.kernel == KernelMode::Exact && (self.n_sites != 1 || self.model.lambda != 0.0) {
                    return err("spectrum.kernel = exact needs a single site with lambda = 0");
                }
            }
            Pipeline::Thermo => {
                self.betas()?;
                if self.spectrum_file.is_none() {
                    return err("thermo needs input.spectrum (or a spectrum file argument)");
                }
            }
            Pipeline::Lattice => {
                self.model.validate_physical()?;
                self.betas()?;
                if self.n_sites == 0 || !(self.a_s > 0.0) {
                    return err("lattice.n_sites must be >= 1 and lattice.a_s > 0");
                }
                for a in [self.a_t_u, self.a_t_c, self.a_t_f] {
                    if !(a > 0.0) {
                        return err("per-observable a_t values must be > 0");
                    }
                }
                self.metropolis().validate()?;
            }
            Pipeline::Compare => {
                if self.table_a.is_none() || self.table_b.is_none() {
                    return err("compare needs input.table_a and input.table_b");
                }
            }
            Pipeline::Oracle => {
                self.betas()?;
                if !(1..=2).contains(&self.n_sites) {
                    return err("the grid oracle supports lattice.n_sites of 1 or 2");
                }
                if self.oracle_points < 16 || !(self.oracle_x_max > self.oracle_x_min) || self.oracle_levels == 0 {
                    return err("oracle needs points >= 16, x_max > x_min and levels >= 1");
                }
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<LatticeParams> {
        LatticeParams::from_total_time(self.n_sites, self.transition_time, self.a_t, self.a_s)
    }

    pub fn betas(&self) -> Result<Vec<f64>> {
        beta_grid(self.beta.min, self.beta.max, self.beta.count, self.beta.log_spacing)
    }

    pub fn metropolis(&self) -> MetropolisConfig {
        MetropolisConfig {
            step_width: self.statistics.step,
            thermalization: self.statistics.thermalization,
            decorrelation: self.statistics.decorrelation,
            chains: self.statistics.chains,
            ..MetropolisConfig::default()
        }
    }

    pub fn density_mode(&self) -> DensityMode {
        match self.basis.density {
            DensityKind::Kde => DensityMode::Kde,
            DensityKind::Gaussian => DensityMode::Gaussian,
            DensityKind::Free => DensityMode::Free {
                sigma: (self.model.hbar * self.transition_time / self.model.mass).sqrt(),
            },
        }
    }

    pub fn lattice_settings(&self) -> LatticeSettings {
        LatticeSettings {
            a_s: self.a_s,
            a_t_u: self.a_t_u,
            a_t_c: self.a_t_c,
            a_t_f: self.a_t_f,
            n_configs_u: self.statistics.n_configs_u,
            n_configs_c: self.statistics.n_configs_c,
            n_configs_f: self.statistics.n_configs_f,
            metropolis: self.metropolis(),
        }
    }
}
