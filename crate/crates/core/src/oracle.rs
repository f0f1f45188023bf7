//! Reference results that do not depend on any sampling: dense
//! finite-difference diagonalization for one or two sites, the harmonic
//! Euclidean kernel and analytic harmonic thermodynamics.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::free::{kg_thermo, NormalModeSet};
use crate::model::ModelParams;
use crate::stats::Estimate;
use crate::thermo::{ThermoPoint, ThermoSource};

/// Grid used by [`grid_spectrum`]. Points include both box ends; the
/// wavefunction vanishes one spacing outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_dim: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dimension: usize,
    /// Combine two grid sizes to cancel the O(h²) error.
    pub richardson: bool,
}

impl GridSpec {
    pub fn new(points_per_dim: usize, x_min: f64, x_max: f64, dimension: usize) -> Self {
        GridSpec {
            points_per_dim,
            x_min,
            x_max,
            dimension,
            richardson: true,
        }
    }

    /// Plain second-order grid without extrapolation.
    pub fn raw(self) -> Self {
        GridSpec {
            richardson: false,
            ..self
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points_per_dim - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.points_per_dim < 16 {
            return Err(Error::Config("grid needs at least 16 points per dimension".into()));
        }
        if !(self.x_max > self.x_min) {
            return Err(Error::Config("grid needs x_max > x_min".into()));
        }
        if !(1..=2).contains(&self.dimension) {
            return Err(Error::Usage(format!(
                "grid oracle supports 1 or 2 sites, got {}",
                self.dimension
            )));
        }
        Ok(())
    }
}

/// Largest dense Hamiltonian the grid oracle will build.
pub const MAX_DENSE_POINTS: usize = 4096;

/// Lowest levels of the Schrödinger operator on a grid.
#[derive(Debug, Clone)]
pub struct GridSpectrum {
    pub energies: Vec<f64>,
    /// Columns are normalized eigenvectors on the finest grid used, with
    /// points ordered x-major (site 0 slowest).
    pub wavefunctions: DMatrix<f64>,
    pub points: Vec<f64>,
}

/// Dense finite-difference diagonalization of
/// H = -ħ²/(2m) ∇² + V(φ), with V the slice potential of `mp`.
///
/// With `grid.richardson` the 1-D result combines `n` and `2n - 1` points
/// (exact halving of h) and the 2-D result combines `n` and `5n/4` points.
pub fn grid_spectrum(mp: &ModelParams, grid: &GridSpec, n_levels: usize) -> Result<GridSpectrum> {
    grid.validate()?;
    mp.validate()?;
    let n = grid.points_per_dim;
    let total = n.pow(grid.dimension as u32);
    let fine_total = if grid.dimension == 1 { 2 * n - 1 } else { (n + n / 4).pow(2) };
    if fine_total > MAX_DENSE_POINTS {
        return Err(Error::Config(format!(
            "grid of {n} points per dimension needs a dense {fine_total}x{fine_total} matrix, \
             above the limit of {MAX_DENSE_POINTS} (use at most 50 points per dimension in 2-D)"
        )));
    }
    if n_levels == 0 || n_levels > total {
        return Err(Error::Config(format!("n_levels must be in 1..={total}")));
    }
    if !grid.richardson {
        let (e, v, pts) = solve(mp, grid, n_levels);
        return Ok(GridSpectrum {
            energies: e,
            wavefunctions: v,
            points: pts,
        });
    }
    let fine_n = if grid.dimension == 1 { 2 * n - 1 } else { n + n / 4 };
    let fine = GridSpec {
        points_per_dim: fine_n,
        ..*grid
    };
    let (coarse_e, _, _) = solve(mp, grid, n_levels);
    let (fine_e, v, pts) = solve(mp, &fine, n_levels);
    let (h1, h2) = (grid.spacing().powi(2), fine.spacing().powi(2));
    let energies = coarse_e
        .iter()
        .zip(&fine_e)
        .map(|(c, f)| (h1 * f - h2 * c) / (h1 - h2))
        .collect();
    Ok(GridSpectrum {
        energies,
        wavefunctions: v,
        points: pts,
    })
}

fn solve(mp: &ModelParams, grid: &GridSpec, n_levels: usize) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let n = grid.points_per_dim;
    let h = grid.spacing();
    let pts: Vec<f64> = (0..n).map(|i| grid.x_min + i as f64 * h).collect();
    let t = mp.hbar * mp.hbar / (2.0 * mp.mass * h * h);
    let d = grid.dimension;
    let total = n.pow(d as u32);
    let mut ham = DMatrix::<f64>::zeros(total, total);
    for idx in 0..total {
        let (i, j) = (idx / n, idx % n);
        let pot = if d == 1 {
            mp.slice_potential(&[pts[idx]])
        } else {
            mp.slice_potential(&[pts[i], pts[j]])
        };
        ham[(idx, idx)] = 2.0 * t * d as f64 + pot;
        if d == 1 {
            if idx + 1 < n {
                ham[(idx, idx + 1)] = -t;
                ham[(idx + 1, idx)] = -t;
            }
        } else {
            if j + 1 < n {
                ham[(idx, idx + 1)] = -t;
                ham[(idx + 1, idx)] = -t;
            }
            if i + 1 < n {
                ham[(idx, idx + n)] = -t;
                ham[(idx + n, idx)] = -t;
            }
        }
    }
    let eig = SymmetricEigen::new(ham);
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(n_levels);
    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(total, n_levels, |r, c| eig.eigenvectors[(r, order[c])]);

    // Ground-state density on the box edge.
    let cell = h.powi(d as i32);
    let edge = (0..total)
        .filter(|&idx| {
            let (i, j) = (idx / n, idx % n);
            j == 0 || j == n - 1 || (d == 2 && (i == 0 || i == n - 1))
        })
        .map(|idx| vecs[(idx, 0)].powi(2) / cell)
        .fold(0.0, f64::max);
    if edge > 1e-8 {
        warn!("grid box too small: ground-state density {edge:.2e} at the boundary");
    }
    (energies, vecs, pts)
}

/// Euclidean harmonic-oscillator kernel ⟨x| e^{-HT/ħ} |y⟩.
pub fn mehler_kernel(x: f64, y: f64, t: f64, mass: f64, omega: f64, hbar: f64) -> Result<f64> {
    if !(t > 0.0 && omega > 0.0 && mass > 0.0 && hbar > 0.0) {
        return Err(Error::Domain("mehler kernel needs T, omega, m, hbar > 0".into()));
    }
    let wt = omega * t;
    let sh = wt.sinh();
    // (x²+y²)cosh - 2xy written without cancellation.
    let half = (0.5 * wt).sinh();
    let q = (x - y) * (x - y) + (x * x + y * y) * 2.0 * half * half;
    let pref = (mass * omega / (2.0 * std::f64::consts::PI * hbar * sh)).sqrt();
    Ok(pref * (-mass * omega * q / (2.0 * hbar * sh)).exp())
}

/// Exact thermodynamics of independent oscillators with frequencies
/// `omegas`, zero-point energy included.
pub fn harmonic_reference(beta: f64, omegas: &[f64], hbar: f64, kb: f64) -> Result<ThermoPoint> {
    if !(beta > 0.0) || omegas.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Domain("harmonic reference needs beta > 0 and omega > 0".into()));
    }
    let modes = NormalModeSet {
        frequencies: omegas.to_vec(),
    };
    let k = kg_thermo(beta, &modes, hbar, kb);
    Ok(ThermoPoint {
        beta,
        ln_z: -beta * k.f,
        f: Estimate::exact(k.f),
        u: Estimate::exact(k.u),
        s: Estimate::exact(k.s),
        c: Estimate::exact(k.c),
        source: ThermoSource::Analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free::{free_propagator, FreeKernelParams};

    #[test]
    fn harmonic_grid_levels() {
        let mp = ModelParams::single_site(2.0, 0.0);
        let g = grid_spectrum(&mp, &GridSpec::new(400, -6.0, 6.0, 1), 3).unwrap();
        for (e, x) in g.energies.iter().zip([1.0, 3.0, 5.0]) {
            assert!((e - x).abs() < 1e-4, "{e} vs {x}");
        }
    }

    #[test]
    fn raw_grid_converges_at_second_order() {
        let mp = ModelParams::single_site(1.0, 0.0);
        let err = |n: usize| {
            let g = grid_spectrum(&mp, &GridSpec::new(n, -8.0, 8.0, 1).raw(), 1).unwrap();
            (g.energies[0] - 0.5).abs()
        };
        let (e1, e2) = (err(101), err(201));
        let order = (e1 / e2).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}");
    }

    #[test]
    fn anharmonic_ground_state_converged() {
        let mp = ModelParams::single_site(2.0, 1.0);
        let a = grid_spectrum(&mp, &GridSpec::new(400, -6.0, 6.0, 1), 2).unwrap();
        let b = grid_spectrum(&mp, &GridSpec::new(800, -6.0, 6.0, 1), 2).unwrap();
        assert!((a.energies[0] - b.energies[0]).abs() < 1e-5);
        assert!((a.energies[0] - 1.07936).abs() < 1e-4, "{}", a.energies[0]);
        assert!(a.energies[0] > 1.0);
    }

    #[test]
    fn two_site_free_ground_state() {
        let mp = ModelParams::chain(1.0, 2.0, 0.0);
        let g = grid_spectrum(&mp, &GridSpec::new(32, -5.0, 5.0, 2), 2).unwrap();
        let exact = (2.0 + 8f64.sqrt()) / 2.0;
        assert!((g.energies[0] - exact).abs() < 1e-3, "{}", g.energies[0]);
    }

    #[test]
    fn ground_state_is_nodeless() {
        let mp = ModelParams::single_site(2.0, 1.0);
        let g = grid_spectrum(&mp, &GridSpec::new(100, -5.0, 5.0, 1).raw(), 1).unwrap();
        let col = g.wavefunctions.column(0);
        let sign = col[50].signum();
        assert!(col.iter().all(|v| v * sign >= -1e-12));
    }

    #[test]
    fn rejects_three_sites() {
        let mp = ModelParams::default();
        assert!(grid_spectrum(&mp, &GridSpec::new(20, -1.0, 1.0, 3), 1).is_err());
    }

    #[test]
    fn mehler_values() {
        let v = mehler_kernel(0.0, 0.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        assert!((v - 0.2962509).abs() < 1e-7, "{v}");
        let a = mehler_kernel(0.3, -1.1, 0.7, 1.0, 1.5, 1.0).unwrap();
        let b = mehler_kernel(-1.1, 0.3, 0.7, 1.0, 1.5, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(mehler_kernel(0.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mehler_free_limit() {
        let fp = FreeKernelParams::new(1.0, 1.0, 1.3);
        for (x, y) in [(0.0, 0.0), (0.5, -0.2), (1.0, 2.0)] {
            let m = mehler_kernel(x, y, 1.3, 1.0, 1e-6, 1.0).unwrap();
            let f = free_propagator(x, y, &fp).unwrap();
            assert!((m / f - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn mehler_semigroup() {
        // ∫ K(x,z,t1) K(z,y,t2) dz = K(x,y,t1+t2).
        let h = 0.01;
        let s: f64 = (-1000..=1000)
            .map(|i| {
                let z = i as f64 * h;
                mehler_kernel(0.4, z, 0.6, 1.0, 2.0, 1.0).unwrap()
                    * mehler_kernel(z, -0.3, 0.9, 1.0, 2.0, 1.0).unwrap()
            })
            .sum::<f64>()
            * h;
        let direct = mehler_kernel(0.4, -0.3, 1.5, 1.0, 2.0, 1.0).unwrap();
        assert!((s / direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_reference_values() {
        let p = harmonic_reference(2.0, &[2.0], 1.0, 1.0).unwrap();
        let exact = 1.0 + 2.0 / (4f64.exp() - 1.0);
        assert!((p.u.value - exact).abs() < 1e-12);
        assert!((p.u.value - 1.0373).abs() < 1e-4);
        let hot = harmonic_reference(1e-3, &[2.0], 1.0, 1.0).unwrap();
        assert!((hot.u.value * 1e-3 - 1.0).abs() < 0.01);
        let cold = harmonic_reference(200.0, &[2.0], 1.0, 1.0).unwrap();
        assert!(cold.s.value < 1e-10);
    }
}
