//! Canonical thermodynamics from a discrete spectrum, finite-difference
//! pressure, identity audits and the thermo table format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveSpectrum;
use crate::stats::Estimate;
use crate::table::{comment_block, fmt_f64, read_table, row, write_file};

/// Where a thermodynamic value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThermoSource {
    Hamiltonian,
    Lagrangian,
    Analytic,
}

impl ThermoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ThermoSource::Hamiltonian => "hamiltonian",
            ThermoSource::Lagrangian => "lagrangian",
            ThermoSource::Analytic => "analytic",
        }
    }
}

impl std::str::FromStr for ThermoSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamiltonian" => Ok(ThermoSource::Hamiltonian),
            "lagrangian" => Ok(ThermoSource::Lagrangian),
            "analytic" => Ok(ThermoSource::Analytic),
            _ => Err(Error::Config(format!("unknown thermo source {s:?}"))),
        }
    }
}

/// Thermodynamic state at one inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoPoint {
    pub beta: f64,
    /// ln Z, kept in log form so large β·E stays representable.
    pub ln_z: f64,
    pub f: Estimate,
    pub u: Estimate,
    pub s: Estimate,
    pub c: Estimate,
    pub source: ThermoSource,
}

impl ThermoPoint {
    pub fn z(&self) -> f64 {
        self.ln_z.exp()
    }
}

/// Which spectrum levels enter the partition sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelSelection {
    /// Levels above the spectrum's noise floor (at least one).
    #[default]
    Resolved,
    All,
}

#[derive(Debug, Clone, Copy)]
struct Values {
    ln_z: f64,
    f: f64,
    u: f64,
    s: f64,
    c: f64,
}

fn evaluate(beta: f64, energies: &[f64], kb: f64) -> Values {
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut z, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for &e in energies {
        let d = e - e_min;
        let w = (-beta * d).exp();
        z += w;
        e1 += w * d;
        e2 += w * d * d;
    }
    let mean_d = e1 / z;
    let var = (e2 / z - mean_d * mean_d).max(0.0);
    let ln_z = z.ln() - beta * e_min;
    let f = e_min - z.ln() / beta;
    let u = e_min + mean_d;
    Values {
        ln_z,
        f,
        u,
        s: kb * beta * (mean_d + z.ln() / beta),
        c: kb * beta * beta * var,
    }
}

/// Thermodynamics of `energies` on `betas`.
///
/// Errors come from re-evaluating with shifted levels: the larger of the
/// coherent shift E ± δE and the quadrature sum of single-level shifts.
pub fn thermo_from_levels(
    energies: &[f64],
    errors: &[f64],
    betas: &[f64],
    kb: f64,
) -> Result<Vec<ThermoPoint>> {
    if energies.is_empty() {
        return Err(Error::Numerical("empty spectrum".into()));
    }
    if errors.len() != energies.len() {
        return Err(Error::Dimension("energies and errors differ in length".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::Config(format!("beta must be positive, got {b}")));
    }
    let any_infinite = errors.iter().any(|e| !e.is_finite());
    Ok(betas
        .iter()
        .map(|&beta| {
            let base = evaluate(beta, energies, kb);
            let field = |v: &Values| [v.f, v.u, v.s, v.c];
            let b = field(&base);
            let mut err = [0.0f64; 4];
            if any_infinite {
                err = [f64::INFINITY; 4];
            } else {
                for sign in [1.0, -1.0] {
                    let shifted: Vec<f64> =
                        energies.iter().zip(errors).map(|(e, d)| e + sign * d).collect();
                    let v = field(&evaluate(beta, &shifted, kb));
                    for k in 0..4 {
                        err[k] = err[k].max((v[k] - b[k]).abs());
                    }
                }
                let mut quad = [0.0f64; 4];
                let mut work = energies.to_vec();
                for (i, &d) in errors.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let mut worst = [0.0f64; 4];
                    for sign in [1.0, -1.0] {
                        work[i] = energies[i] + sign * d;
                        let v = field(&evaluate(beta, &work, kb));
                        for k in 0..4 {
                            worst[k] = worst[k].max((v[k] - b[k]).abs());
                        }
                    }
                    work[i] = energies[i];
                    for k in 0..4 {
                        quad[k] += worst[k] * worst[k];
                    }
                }
                for k in 0..4 {
                    err[k] = err[k].max(quad[k].sqrt());
                }
            }
            ThermoPoint {
                beta,
                ln_z: base.ln_z,
                f: Estimate::new(base.f, err[0]),
                u: Estimate::new(base.u, err[1]),
                s: Estimate::new(base.s, err[2]),
                c: Estimate::new(base.c, err[3]),
                source: ThermoSource::Hamiltonian,
            }
        })
        .collect())
}

/// [`thermo_from_levels`] on the selected levels of a spectrum.
pub fn thermo_from_spectrum(
    spectrum: &EffectiveSpectrum,
    betas: &[f64],
    kb: f64,
    selection: LevelSelection,
) -> Result<Vec<ThermoPoint>> {
    let n = match selection {
        LevelSelection::All => spectrum.energies.len(),
        LevelSelection::Resolved => spectrum.n_resolved.max(1).min(spectrum.energies.len()),
    };
    thermo_from_levels(&spectrum.energies[..n], &spectrum.errors[..n], betas, kb)
}

/// Pressure estimate at one β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressurePoint {
    pub beta: f64,
    pub p: Estimate,
}

/// P = -(F(V + ΔV) - F(V)) / ΔV per grid point.
pub fn pressure_finite_difference(
    thermo_v: &[ThermoPoint],
    thermo_vdv: &[ThermoPoint],
    delta_v: f64,
) -> Result<Vec<PressurePoint>> {
    if !(delta_v > 0.0) {
        return Err(Error::Config("delta_V must be positive".into()));
    }
    check_same_grid(thermo_v, thermo_vdv)?;
    Ok(thermo_v
        .iter()
        .zip(thermo_vdv)
        .map(|(a, b)| PressurePoint {
            beta: a.beta,
            p: Estimate::new(-(b.f.value - a.f.value) / delta_v, a.f.error.hypot(b.f.error) / delta_v),
        })
        .collect())
}

pub(crate) fn check_same_grid(a: &[ThermoPoint], b: &[ThermoPoint]) -> Result<()> {
    let same = a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| (x.beta - y.beta).abs() <= 1e-12 * x.beta.abs().max(1.0));
    if same {
        Ok(())
    } else {
        Err(Error::Dimension("thermo tables do not share a beta grid".into()))
    }
}

/// A failed check at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub beta: f64,
    pub check: &'static str,
    /// Relative residual or the offending value.
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsistencyReport {
    pub points_checked: usize,
    pub max_u_residual: f64,
    pub max_c_residual: f64,
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits a table: F nondecreasing, U nonincreasing, S ≥ 0, C ≥ 0 (each
/// within two error bars), and the identities U = ∂(βF)/∂β and
/// C = -k_B β² ∂U/∂β to `tol` relative to the column scale.
///
/// Derivatives use five-point central stencils on uniform stretches of the
/// grid and three-point stencils otherwise. With five or more points the
/// two outermost points at each end are skipped, otherwise only the ends.
pub fn consistency_checks(points: &[ThermoPoint], kb: f64, tol: f64) -> Result<ConsistencyReport> {
    if points.len() < 3 {
        return Err(Error::Config("consistency checks need at least 3 grid points".into()));
    }
    let mut rep = ConsistencyReport::default();
    let mut push = |beta, check, amount| rep.violations.push(Violation { beta, check, amount });
    let slack = |a: &Estimate, scale: f64| 2.0 * a.error + 1e-12 * scale;
    let scale_of = |f: fn(&ThermoPoint) -> f64| points.iter().map(|p| f(p).abs()).fold(0.0, f64::max);
    let (f_scale, u_scale) = (scale_of(|p| p.f.value), scale_of(|p| p.u.value));
    let c_scale = scale_of(|p| p.c.value);
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.beta <= a.beta {
            return Err(Error::Config("beta grid must be strictly increasing".into()));
        }
        if b.f.value < a.f.value - slack(&a.f, f_scale) - slack(&b.f, f_scale) {
            push(b.beta, "F nondecreasing", b.f.value - a.f.value);
        }
        if b.u.value > a.u.value + slack(&a.u, u_scale) + slack(&b.u, u_scale) {
            push(b.beta, "U nonincreasing", b.u.value - a.u.value);
        }
    }
    for p in points {
        if p.s.value < -slack(&p.s, 1.0) {
            push(p.beta, "S >= 0", p.s.value);
        }
        if p.c.value < -slack(&p.c, 1.0) {
            push(p.beta, "C >= 0", p.c.value);
        }
    }
    let betas: Vec<f64> = points.iter().map(|p| p.beta).collect();
    let bf: Vec<f64> = points.iter().map(|p| p.beta * p.f.value).collect();
    let us: Vec<f64> = points.iter().map(|p| p.u.value).collect();
    let n = points.len();
    let range = if n >= 5 { 2..n - 2 } else { 1..n - 1 };
    for i in range {
        let p = &points[i];
        let du_fd = derivative(&betas, &bf, i);
        let dc_fd = -kb * p.beta * p.beta * derivative(&betas, &us, i);
        let ru = (p.u.value - du_fd).abs() / u_scale.max(f64::MIN_POSITIVE);
        let rc = (p.c.value - dc_fd).abs() / c_scale.max(u_scale * 1e-3).max(f64::MIN_POSITIVE);
        rep.max_u_residual = rep.max_u_residual.max(ru);
        rep.max_c_residual = rep.max_c_residual.max(rc);
        rep.points_checked += 1;
        if ru > tol {
            rep.violations.push(Violation { beta: p.beta, check: "U = d(beta F)/d beta", amount: ru });
        }
        if rc > tol {
            rep.violations.push(Violation { beta: p.beta, check: "C = -kB beta^2 dU/d beta", amount: rc });
        }
    }
    Ok(rep)
}

fn derivative(x: &[f64], y: &[f64], i: usize) -> f64 {
    let uniform = |a: usize, b: usize| {
        let h = x[a + 1] - x[a];
        (a..b).all(|k| ((x[k + 1] - x[k]) - h).abs() <= 1e-9 * h)
    };
    if i >= 2 && i + 2 < x.len() && uniform(i - 2, i + 2) {
        let h = x[i + 1] - x[i];
        return (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
    }
    let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    (-h2 / (h1 * (h1 + h2))) * y[i - 1]
        + ((h2 - h1) / (h1 * h2)) * y[i]
        + (h1 / (h2 * (h1 + h2))) * y[i + 1]
}

/// β window over which a fixed-T₀ spectrum is trusted.
pub const DEFAULT_WINDOW: (f64, f64) = (1.0, 10.0);

/// Writes a thermo table. `header` (typically the run configuration) is
/// emitted as comment lines before the fixed header fields.
pub fn write_thermo_table(
    path: &Path,
    header: &str,
    points: &[ThermoPoint],
    window: (f64, f64),
) -> Result<()> {
    write_file(path, &format_thermo_table(header, points, window))
}

pub fn format_thermo_table(header: &str, points: &[ThermoPoint], window: (f64, f64)) -> String {
    let mut s = comment_block(header);
    let source = points.first().map_or("analytic", |p| p.source.as_str());
    s.push_str(&format!("# source = {source}\n"));
    s.push_str(&format!("# window = {} {}\n", fmt_f64(window.0), fmt_f64(window.1)));
    let outside: Vec<String> = points
        .iter()
        .filter(|p| p.beta < window.0 || p.beta > window.1)
        .map(|p| fmt_f64(p.beta))
        .collect();
    s.push_str(&format!("# out_of_window = {}\n", outside.join(" ")));
    s.push_str("# beta F F_err U U_err S S_err C C_err\n");
    for p in points {
        s.push_str(&row(&[
            p.beta, p.f.value, p.f.error, p.u.value, p.u.error, p.s.value, p.s.error, p.c.value, p.c.error,
        ]));
        if p.beta < window.0 || p.beta > window.1 {
            s.push_str(" # out_of_window");
        }
        s.push('\n');
    }
    s
}

pub fn read_thermo_table(path: &Path) -> Result<Vec<ThermoPoint>> {
    let t = read_table(path)?;
    let name = path.display().to_string();
    let source = match t.header("source") {
        Some(s) => s.parse()?,
        None => ThermoSource::Analytic,
    };
    t.rows
        .iter()
        .map(|(line, v)| {
            if v.len() != 9 {
                return Err(Error::Parse {
                    path: name.clone(),
                    line: *line,
                    msg: format!("expected 9 columns, found {}", v.len()),
                });
            }
            Ok(ThermoPoint {
                beta: v[0],
                ln_z: -v[0] * v[1],
                f: Estimate::new(v[1], v[2]),
                u: Estimate::new(v[3], v[4]),
                s: Estimate::new(v[5], v[6]),
                c: Estimate::new(v[7], v[8]),
                source,
            })
        })
        .collect()
}

/// `count` points from `min` to `max`, linearly or logarithmically spaced.
pub fn beta_grid(min: f64, max: f64, count: usize, log_spacing: bool) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && count >= 1) || (count == 1 && max != min) {
        return Err(Error::Config(
            "beta grid needs 0 < min <= max and count >= 1 (count = 1 only when min = max)".into(),
        ));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    Ok((0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            if i == count - 1 {
                max
            } else if log_spacing {
                min * (max / min).powf(t)
            } else {
                min + (max - min) * t
            }
        })
        .collect())
}
