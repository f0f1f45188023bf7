//! End-to-end runs driven by a [`RunConfig`], writing text tables into the
//! output directory.
//!
//! Every file starts with a comment header holding the configuration, so a
//! (configuration, seed) pair reproduces the outputs byte for byte whatever
//! the worker count. Progress, acceptance rates and wall times go to the
//! log, never into data files. On failure, files written by the failing run
//! are removed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use crate::basis::{build_regular_basis, build_stochastic_basis, write_basis, Basis};
use crate::config::{KernelMode, Pipeline, RunConfig};
use crate::error::{Error, Result};
use crate::free::{free_propagator, FreeKernelParams};
use crate::hamiltonian::{
    assemble, assemble_exact, read_spectrum, solve_spectrum, write_matrix, write_spectrum, EffectiveSpectrum,
    TransitionMatrix,
};
use crate::lattice::lattice_thermo_point;
use crate::oracle::{grid_spectrum, mehler_kernel, GridSpec};
use crate::rng::{tags, RngStream};
use crate::sampler::sample_endpoint_ensemble;
use crate::stats::Estimate;
use crate::table::{comment_block, fmt_f64, row, write_file};
use crate::thermo::{
    check_same_grid, consistency_checks, format_thermo_table, pressure_finite_difference, read_thermo_table,
    thermo_from_levels, thermo_from_spectrum, ThermoPoint, ThermoSource,
};

/// File names inside the output directory.
pub mod files {
    pub const BASIS: &str = "basis.dat";
    pub const MATRIX: &str = "matrix.dat";
    pub const SPECTRUM: &str = "spectrum.dat";
    pub const THERMO: &str = "thermo.dat";
    pub const PRESSURE: &str = "pressure.dat";
    pub const LATTICE: &str = "lattice.dat";
    pub const COMPARE: &str = "compare.dat";
    pub const ORACLE_SPECTRUM: &str = "oracle_spectrum.dat";
    pub const ORACLE_THERMO: &str = "oracle_thermo.dat";
}

/// Tracks written files so a failed run can clean up after itself.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        write_file(&path, contents)
    }

    fn with<F: FnOnce(&Path) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        f(&path)
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// Validates `cfg`, runs its pipeline on a pool of `cfg.workers` threads
/// and returns the written files.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.output_dir)?;
    let result = pool.install(|| match cfg.pipeline {
        Pipeline::Spectrum => run_spectrum(cfg, &mut out),
        Pipeline::Thermo => run_thermo(cfg, &mut out),
        Pipeline::Lattice => run_lattice(cfg, &mut out),
        Pipeline::Compare => run_compare(cfg, &mut out),
        Pipeline::Oracle => run_oracle(cfg, &mut out),
    });
    match result {
        Ok(()) => {
            info!("{} finished in {:.2} s", cfg.pipeline.as_str(), start.elapsed().as_secs_f64());
            Ok(out.written)
        }
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

/// Everything produced by the spectrum pipeline.
#[derive(Debug, Clone)]
pub struct SpectrumRun {
    pub basis: Basis,
    pub matrix: TransitionMatrix,
    pub spectrum: EffectiveSpectrum,
    /// Mean Metropolis acceptance of the endpoint ensemble, if one was drawn.
    pub acceptance_rate: Option<f64>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        Error::Sampling(m) => Error::Sampling(format!("{name}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{name}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{name}: {m}")),
        Error::Dimension(m) => Error::Dimension(format!("{name}: {m}")),
        other => other,
    })
}

/// Endpoint ensemble, basis, transition matrix and spectrum, in memory.
pub fn compute_spectrum(cfg: &RunConfig) -> Result<SpectrumRun> {
    let mp = &cfg.model;
    let lp = cfg.lattice()?;
    let root = RngStream::new(cfg.seed, 0);
    let mut acceptance_rate = None;
    let basis = match cfg.basis.flavor {
        crate::basis::BasisFlavor::Regular => {
            stage("basis", build_regular_basis(cfg.basis.n_nodes, cfg.basis.x_min, cfg.basis.x_max))?
        }
        crate::basis::BasisFlavor::Stochastic => {
            let origin = vec![0.0; lp.n_sites];
            let ens = stage(
                "endpoint sampling",
                sample_endpoint_ensemble(
                    cfg.statistics.n_paths,
                    &origin,
                    &lp,
                    mp,
                    root.child(tags::ENDPOINTS, 0),
                    &cfg.metropolis(),
                ),
            )?;
            info!("endpoint ensemble: {} paths, acceptance {:.3}", ens.points.len(), ens.acceptance_rate);
            acceptance_rate = Some(ens.acceptance_rate);
            let mut rng = root.child(tags::BASIS, 0).rng();
            stage(
                "basis",
                build_stochastic_basis(&ens.points, cfg.basis.n_stoch, &cfg.density_mode(), &mut rng),
            )?
        }
    };
    let matrix = match cfg.kernel {
        KernelMode::MonteCarlo => stage(
            "transition matrix",
            assemble(&basis, mp, &lp, cfg.statistics.n_bridges, root.child(tags::MATRIX, 0)),
        )?,
        KernelMode::Exact => {
            let t = lp.total_time();
            let (m, h, w) = (mp.mass, mp.hbar, mp.omega0);
            stage(
                "transition matrix",
                assemble_exact(&basis, t, h, |x, y| {
                    if w > 0.0 {
                        mehler_kernel(x[0], y[0], t, m, w, h)
                    } else {
                        free_propagator(x[0], y[0], &FreeKernelParams::new(m, h, t))
                    }
                }),
            )?
        }
    };
    let spectrum = stage("diagonalization", solve_spectrum(&matrix, cfg.noise_kappa))?;
    info!(
        "spectrum: {} retained, {} discarded, {} resolved above the noise floor",
        spectrum.n_retained,
        spectrum.n_discarded(),
        spectrum.n_resolved
    );
    Ok(SpectrumRun { basis, matrix, spectrum, acceptance_rate })
}

fn run_spectrum(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let r = compute_spectrum(cfg)?;
    let stamp = cfg.stamp();
    out.with(files::BASIS, |p| write_basis(p, &stamp, &r.basis))?;
    out.with(files::MATRIX, |p| write_matrix(p, &stamp, &r.matrix))?;
    out.with(files::SPECTRUM, |p| write_spectrum(p, &stamp, &r.spectrum))
}

/// Thermodynamics on the configured β grid from a spectrum file.
pub fn compute_thermo(cfg: &RunConfig, spectrum_path: &Path) -> Result<Vec<ThermoPoint>> {
    let spectrum = read_spectrum(spectrum_path)?;
    thermo_from_spectrum(&spectrum, &cfg.betas()?, cfg.model.kb, cfg.levels)
}

fn audit(points: &[ThermoPoint], kb: f64, what: &str) {
    if points.len() < 3 {
        return;
    }
    if let Ok(rep) = consistency_checks(points, kb, 1e-6) {
        for v in &rep.violations {
            // Monotonicity and positivity hold for any spectrum; finite
            // differences on a coarse grid are only informative.
            if !v.check.contains('=') {
                warn!("{what}: {} violated at beta = {} ({})", v.check, v.beta, v.amount);
            }
        }
    }
}

fn run_thermo(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let path = cfg.spectrum_file.as_ref().expect("validated");
    let points = compute_thermo(cfg, path)?;
    audit(&points, cfg.model.kb, "thermo");
    out.write(files::THERMO, &format_thermo_table(&cfg.stamp(), &points, cfg.window))?;
    if let Some(dv) = &cfg.spectrum_file_dv {
        let other = compute_thermo(cfg, dv)?;
        let p = pressure_finite_difference(&points, &other, cfg.a_s)?;
        let mut s = comment_block(&cfg.stamp());
        s.push_str(&format!("# delta_V = {}\n# beta P P_err\n", fmt_f64(cfg.a_s)));
        for x in &p {
            s.push_str(&row(&[x.beta, x.p.value, x.p.error]));
            s.push('\n');
        }
        out.write(files::PRESSURE, &s)?;
    }
    Ok(())
}

/// One independent Lagrangian simulation per β.
pub fn compute_lattice(cfg: &RunConfig) -> Result<Vec<ThermoPoint>> {
    let root = RngStream::new(cfg.seed, 0);
    let settings = cfg.lattice_settings();
    cfg.betas()?
        .iter()
        .enumerate()
        .map(|(i, &beta)| {
            let t = Instant::now();
            let p = stage(
                &format!("lattice beta = {beta}"),
                lattice_thermo_point(beta, cfg.n_sites, &cfg.model, &settings, root.child(tags::LATTICE_U, i as u64)),
            )?;
            info!("lattice beta = {beta}: {:.2} s", t.elapsed().as_secs_f64());
            Ok(p)
        })
        .collect()
}

fn run_lattice(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let points = compute_lattice(cfg)?;
    audit(&points, cfg.model.kb, "lattice");
    out.write(files::LATTICE, &format_thermo_table(&cfg.stamp(), &points, cfg.window))
}

/// Per-observable agreement of two tables at one β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub beta: f64,
    /// F, U, S, C of table A and table B.
    pub a: [Estimate; 4],
    pub b: [Estimate; 4],
    pub z: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub above_2: usize,
    pub above_3: usize,
}

pub const OBSERVABLES: [&str; 4] = ["F", "U", "S", "C"];

pub fn compare_tables(a: &[ThermoPoint], b: &[ThermoPoint]) -> Result<Comparison> {
    check_same_grid(a, b)?;
    let obs = |p: &ThermoPoint| [p.f, p.u, p.s, p.c];
    let rows: Vec<ComparisonRow> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let (ea, eb) = (obs(x), obs(y));
            let z = std::array::from_fn(|k| ea[k].z_score(&eb[k]));
            ComparisonRow { beta: x.beta, a: ea, b: eb, z }
        })
        .collect();
    let count = |t: f64| rows.iter().flat_map(|r| r.z).filter(|z| z.abs() > t).count();
    Ok(Comparison { above_2: count(2.0), above_3: count(3.0), rows })
}

pub fn format_comparison(header: &str, c: &Comparison) -> String {
    let mut s = comment_block(header);
    let total = c.rows.len() * 4;
    s.push_str(&format!("# compared = {total}\n# z_above_2 = {}\n# z_above_3 = {}\n", c.above_2, c.above_3));
    let cols: Vec<String> = OBSERVABLES
        .iter()
        .map(|o| format!("{o}_a {o}_a_err {o}_b {o}_b_err {o}_diff {o}_err {o}_z"))
        .collect();
    s.push_str(&format!("# beta {}\n", cols.join(" ")));
    for r in &c.rows {
        let mut v = vec![r.beta];
        for k in 0..4 {
            let (a, b) = (r.a[k], r.b[k]);
            v.extend([a.value, a.error, b.value, b.error, a.value - b.value, a.error.hypot(b.error), r.z[k]]);
        }
        s.push_str(&row(&v));
        s.push('\n');
    }
    s
}

fn run_compare(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let a = read_thermo_table(cfg.table_a.as_ref().expect("validated"))?;
    let b = read_thermo_table(cfg.table_b.as_ref().expect("validated"))?;
    let c = compare_tables(&a, &b)?;
    info!("compare: {} of {} values with |z| > 3", c.above_3, c.rows.len() * 4);
    out.write(files::COMPARE, &format_comparison(&cfg.stamp(), &c))
}

/// Grid levels and the thermodynamics they imply.
pub fn compute_oracle(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<ThermoPoint>)> {
    let grid = GridSpec::new(cfg.oracle_points, cfg.oracle_x_min, cfg.oracle_x_max, cfg.n_sites);
    let levels = grid_spectrum(&cfg.model, &grid, cfg.oracle_levels)?.energies;
    let zeros = vec![0.0; levels.len()];
    let mut points = thermo_from_levels(&levels, &zeros, &cfg.betas()?, cfg.model.kb)?;
    points.iter_mut().for_each(|p| p.source = ThermoSource::Analytic);
    Ok((levels, points))
}

fn run_oracle(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let (levels, points) = compute_oracle(cfg)?;
    let mut s = comment_block(&cfg.stamp());
    s.push_str("# n E error\n");
    for (k, e) in levels.iter().enumerate() {
        s.push_str(&row(&[(k + 1) as f64, *e, 0.0]));
        s.push('\n');
    }
    out.write(files::ORACLE_SPECTRUM, &s)?;
    out.write(files::ORACLE_THERMO, &format_thermo_table(&cfg.stamp(), &points, cfg.window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFlavor;
    use crate::thermo::LevelSelection;

    fn harmonic_cfg(dir: &Path) -> RunConfig {
        let mut c = RunConfig::default();
        c.output_dir = dir.to_path_buf();
        c.model = crate::model::ModelParams::single_site(1.0, 0.0);
        c.n_sites = 1;
        c.basis.flavor = BasisFlavor::Regular;
        c.basis.n_nodes = 20;
        c.a_t = 0.1;
        c.statistics.n_bridges = 200;
        c
    }

    #[test]
    fn spectrum_run_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = run(&harmonic_cfg(dir.path())).unwrap();
        assert_eq!(files.len(), 3);
        let text = std::fs::read_to_string(dir.path().join(files::SPECTRUM)).unwrap();
        assert!(text.starts_with("# pipeline = spectrum\n# seed = 1\n"));
    }

    #[test]
    fn exact_kernel_ground_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = harmonic_cfg(dir.path());
        c.kernel = KernelMode::Exact;
        c.basis.n_nodes = 40;
        let r = compute_spectrum(&c).unwrap();
        assert!((r.spectrum.energies[0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn failed_run_removes_partial_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = harmonic_cfg(dir.path());
        c.pipeline = Pipeline::Thermo;
        c.spectrum_file = Some(dir.path().join("missing.dat"));
        let e = run(&c).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(!dir.path().join(files::THERMO).exists());
    }

    #[test]
    fn compare_table_with_itself() {
        let pts = thermo_from_levels(&[1.0, 3.0], &[0.1, 0.2], &[1.0, 2.0, 3.0], 1.0).unwrap();
        let c = compare_tables(&pts, &pts).unwrap();
        assert!(c.rows.iter().all(|r| r.z == [0.0; 4]));
        assert_eq!(c.above_2, 0);
    }

    #[test]
    fn oracle_thermo_uses_levels() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = harmonic_cfg(dir.path());
        c.pipeline = Pipeline::Oracle;
        c.oracle_levels = 30;
        c.oracle_points = 200;
        c.model.omega0 = 2.0;
        c.beta.min = 2.0;
        c.beta.max = 2.0;
        c.beta.count = 1;
        let (levels, pts) = compute_oracle(&c).unwrap();
        assert!((levels[0] - 1.0).abs() < 1e-4);
        assert!((pts[0].u.value - 1.0373).abs() < 1e-4);
        let _ = LevelSelection::All;
    }
}
