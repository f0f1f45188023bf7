//! Transition matrix M_ij(T) over a box basis, its eigen-decomposition and
//! the effective spectrum E_k = -(ħ/T) ln D_k.

use std::path::Path;

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::free::{free_matrix_element, FreeKernelParams};
use crate::model::{LatticeParams, ModelParams};
use crate::rng::{tags, RngStream};
use crate::sampler::estimate_sv_factor;
use crate::table::{comment_block, fmt_f64, read_table, row, write_file};

/// Smallest value an assembled entry is allowed to take.
pub const ENTRY_FLOOR: f64 = 1e-300;

/// Symmetric M(T) with per-entry one-sigma errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub values: DMatrix<f64>,
    pub errors: DMatrix<f64>,
    pub transition_time: f64,
    pub hbar: f64,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Estimate of the typical eigenvalue shift caused by the entry errors:
    /// 2 √(max_i Σ_j δM_ij²).
    pub fn noise_floor(&self) -> f64 {
        let worst = self
            .errors
            .row_iter()
            .map(|r| r.iter().map(|e| e * e).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * worst.sqrt()
    }
}

fn check_compat(basis: &Basis, lp: &LatticeParams) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::Config("basis is empty".into()));
    }
    if basis.dimension != lp.n_sites {
        return Err(Error::Dimension(format!(
            "basis dimension {} differs from lattice n_sites {}",
            basis.dimension, lp.n_sites
        )));
    }
    lp.validate()
}

/// One entry M_ij = M⁰_ij ⟨exp(-S_V/ħ)⟩ and its error.
pub fn matrix_element<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    basis: &Basis,
    mp: &ModelParams,
    lp: &LatticeParams,
    n_bridges: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let n = basis.len();
    if i >= n || j >= n {
        return Err(Error::Config(format!("node index out of range ({i}, {j}) for {n} nodes")));
    }
    let (a, b) = (&basis.nodes[i], &basis.nodes[j]);
    let fp = FreeKernelParams::new(mp.mass, mp.hbar, lp.total_time());
    let free = free_matrix_element(&a.position, &b.position, (a.weight, b.weight), &fp)?;
    let sv = estimate_sv_factor(&a.position, &b.position, n_bridges, lp, mp, rng)?;
    Ok((free * sv.mean, free * sv.std_error))
}

/// Computes the upper triangle (each entry on its own stream) and mirrors it.
pub fn assemble(
    basis: &Basis,
    mp: &ModelParams,
    lp: &LatticeParams,
    n_bridges: usize,
    stream: RngStream,
) -> Result<TransitionMatrix> {
    check_compat(basis, lp)?;
    mp.validate()?;
    let n = basis.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let entries = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let mut rng = stream.child(tags::MATRIX, k as u64).rng();
            matrix_element(i, j, basis, mp, lp, n_bridges, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = DMatrix::<f64>::zeros(n, n);
    let mut errors = DMatrix::<f64>::zeros(n, n);
    let mut floored = 0usize;
    for (&(i, j), &(v, e)) in pairs.iter().zip(&entries) {
        let v = if v > ENTRY_FLOOR {
            v
        } else {
            floored += 1;
            ENTRY_FLOOR
        };
        values[(i, j)] = v;
        values[(j, i)] = v;
        errors[(i, j)] = e;
        errors[(j, i)] = e;
    }
    if floored > 0 {
        warn!("{floored} matrix entries were nonpositive and floored at {ENTRY_FLOOR:e}");
    }
    Ok(TransitionMatrix {
        values,
        errors,
        transition_time: lp.total_time(),
        hbar: mp.hbar,
    })
}

/// Noise-free M_ij = √(Δx_i Δx_j) K(x_i, x_j) from a closed-form kernel.
pub fn assemble_exact(
    basis: &Basis,
    transition_time: f64,
    hbar: f64,
    kernel: impl Fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<TransitionMatrix> {
    if basis.is_empty() {
        return Err(Error::Config("basis is empty".into()));
    }
    let n = basis.len();
    let mut values = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (&basis.nodes[i], &basis.nodes[j]);
            let v = (a.weight * b.weight).sqrt() * kernel(&a.position, &b.position)?;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(TransitionMatrix {
        values,
        errors: DMatrix::zeros(n, n),
        transition_time,
        hbar,
    })
}

/// Levels of the effective Hamiltonian, ascending in energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSpectrum {
    pub energies: Vec<f64>,
    pub errors: Vec<f64>,
    /// Retained eigenvalues D_k of M, matching `energies`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns (empty when read from a file).
    pub eigenvectors: DMatrix<f64>,
    /// Levels with D_k > 0.
    pub n_retained: usize,
    /// Leading levels whose D_k exceeds the resolution threshold.
    pub n_resolved: usize,
    pub noise_floor: f64,
    pub transition_time: f64,
}

impl EffectiveSpectrum {
    pub fn n_discarded(&self) -> usize {
        self.eigenvectors.nrows().saturating_sub(self.n_retained)
    }

    /// Levels whose error bar exceeds half the spacing to a neighbour.
    pub fn spacing_flags(&self) -> Vec<bool> {
        let e = &self.energies;
        (0..e.len())
            .map(|k| {
                let lo = if k > 0 { e[k] - e[k - 1] } else { f64::INFINITY };
                let hi = if k + 1 < e.len() { e[k + 1] - e[k] } else { f64::INFINITY };
                self.errors[k] > 0.5 * lo.min(hi)
            })
            .collect()
    }
}

/// Eigenvalues and eigenvectors sorted by decreasing D, with D ≤ 0 dropped.
fn positive_eigen(values: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (values + values.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&k| eig.eigenvalues[k] > 0.0)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let d = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let n = values.nrows();
    let vecs = DMatrix::from_fn(n, order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (d, vecs)
}

fn energies_of(d: &[f64], t: f64, hbar: f64) -> Vec<f64> {
    d.iter().map(|v| -(hbar / t) * v.ln()).collect()
}

/// Diagonalizes M and converts eigenvalues to energies. Error bars are left
/// at zero; see [`propagate_errors`] and [`solve_spectrum`].
pub fn diagonalize(m: &TransitionMatrix) -> Result<EffectiveSpectrum> {
    if !(m.transition_time > 0.0) {
        return Err(Error::Domain("transition time must be positive".into()));
    }
    let (d, vecs) = positive_eigen(&m.values);
    if d.is_empty() {
        return Err(Error::Numerical(
            "transition matrix has no positive eigenvalue; basis or statistics inadequate".into(),
        ));
    }
    let n_disc = m.dim() - d.len();
    if n_disc > 0 {
        debug!("discarded {n_disc} nonpositive eigenvalues");
    }
    let energies = energies_of(&d, m.transition_time, m.hbar);
    Ok(EffectiveSpectrum {
        errors: vec![0.0; d.len()],
        n_retained: d.len(),
        n_resolved: d.len(),
        noise_floor: 0.0,
        transition_time: m.transition_time,
        energies,
        eigenvalues: d,
        eigenvectors: vecs,
    })
}

/// Error bars from diagonalizing M + δM and M - δM, levels matched by rank.
/// Levels lost in a shifted matrix get an infinite error.
pub fn propagate_errors(m: &TransitionMatrix, spectrum: &EffectiveSpectrum) -> Vec<f64> {
    let mut err = vec![0.0f64; spectrum.energies.len()];
    if m.errors.iter().all(|&e| e == 0.0) {
        return err;
    }
    for sign in [1.0, -1.0] {
        let shifted = &m.values + &m.errors * sign;
        let (d, _) = positive_eigen(&shifted);
        let e = energies_of(&d, m.transition_time, m.hbar);
        for (k, slot) in err.iter_mut().enumerate() {
            let delta = e.get(k).map_or(f64::INFINITY, |v| (v - spectrum.energies[k]).abs());
            *slot = slot.max(delta);
        }
    }
    err
}

/// Diagonalizes, attaches error bars and counts the levels resolved above
/// `kappa` times the noise floor.
pub fn solve_spectrum(m: &TransitionMatrix, kappa: f64) -> Result<EffectiveSpectrum> {
    let mut s = diagonalize(m)?;
    s.errors = propagate_errors(m, &s);
    s.noise_floor = m.noise_floor();
    let threshold = kappa * s.noise_floor;
    s.n_resolved = s.eigenvalues.iter().take_while(|&&d| d > threshold).count();
    Ok(s)
}

/// Spectrum table: `n E error` per level, n counted from 1.
pub fn format_spectrum(header: &str, s: &EffectiveSpectrum) -> String {
    let mut out = comment_block(header);
    out.push_str(&format!("# transition_time = {}\n", fmt_f64(s.transition_time)));
    out.push_str(&format!("# retained_levels = {}\n", s.n_retained));
    out.push_str(&format!("# discarded_levels = {}\n", s.n_discarded()));
    out.push_str(&format!("# resolved_levels = {}\n", s.n_resolved));
    out.push_str(&format!("# noise_floor = {}\n", fmt_f64(s.noise_floor)));
    let flagged: Vec<String> = s
        .spacing_flags()
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(k, _)| (k + 1).to_string())
        .collect();
    out.push_str(&format!("# spacing_flagged = {}\n", flagged.join(" ")));
    out.push_str("# n E error\n");
    for k in 0..s.energies.len() {
        out.push_str(&row(&[(k + 1) as f64, s.energies[k], s.errors[k]]));
        out.push('\n');
    }
    out
}

pub fn write_spectrum(path: &Path, header: &str, s: &EffectiveSpectrum) -> Result<()> {
    write_file(path, &format_spectrum(header, s))
}

/// Reads a spectrum table. Header fields other than the levels are
/// optional; without `resolved_levels` every level counts as resolved.
pub fn read_spectrum(path: &Path) -> Result<EffectiveSpectrum> {
    let t = read_table(path)?;
    let name = path.display().to_string();
    let mut energies = Vec::new();
    let mut errors = Vec::new();
    for (line, v) in &t.rows {
        if v.len() != 3 {
            return Err(Error::Parse {
                path: name.clone(),
                line: *line,
                msg: format!("expected 3 columns (n E error), found {}", v.len()),
            });
        }
        energies.push(v[1]);
        errors.push(v[2]);
    }
    if energies.is_empty() {
        return Err(Error::Parse { path: name, line: 0, msg: "spectrum file has no levels".into() });
    }
    if energies.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parse { path: name, line: 0, msg: "levels are not ascending".into() });
    }
    let n = energies.len();
    let num = |key: &str| t.header(key).and_then(|v| v.parse::<f64>().ok());
    let transition_time = num("transition_time").unwrap_or(f64::NAN);
    let n_resolved = num("resolved_levels").map_or(n, |v| (v as usize).min(n));
    Ok(EffectiveSpectrum {
        eigenvalues: energies.iter().map(|e| (-e * transition_time).exp()).collect(),
        eigenvectors: DMatrix::zeros(0, n),
        n_retained: n,
        n_resolved,
        noise_floor: num("noise_floor").unwrap_or(0.0),
        transition_time,
        energies,
        errors,
    })
}

/// Upper triangle as `i j value error` rows, 0-based node indices.
pub fn format_matrix(header: &str, m: &TransitionMatrix) -> String {
    let mut out = comment_block(header);
    out.push_str(&format!("# dimension = {}\n", m.dim()));
    out.push_str(&format!("# transition_time = {}\n", fmt_f64(m.transition_time)));
    out.push_str("# i j value error\n");
    for i in 0..m.dim() {
        for j in i..m.dim() {
            out.push_str(&row(&[i as f64, j as f64, m.values[(i, j)], m.errors[(i, j)]]));
            out.push('\n');
        }
    }
    out
}

pub fn write_matrix(path: &Path, header: &str, m: &TransitionMatrix) -> Result<()> {
    write_file(path, &format_matrix(header, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_regular_basis, build_stochastic_basis, DensityMode};
    use crate::oracle::mehler_kernel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(values: DMatrix<f64>, errors: DMatrix<f64>) -> TransitionMatrix {
        TransitionMatrix { values, errors, transition_time: 1.0, hbar: 1.0 }
    }

    fn mehler_matrix(n: usize, t: f64) -> TransitionMatrix {
        let b = build_regular_basis(n, -5.0, 5.0).unwrap();
        assemble_exact(&b, t, 1.0, |x, y| mehler_kernel(x[0], y[0], t, 1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn identity_and_diagonal_matrices() {
        let s = diagonalize(&matrix(DMatrix::identity(3, 3), DMatrix::zeros(3, 3))).unwrap();
        assert!(s.energies.iter().all(|e| e.abs() < 1e-14));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![(-2f64).exp(), (-1f64).exp()]));
        let s = diagonalize(&matrix(d, DMatrix::zeros(2, 2))).unwrap();
        assert!((s.energies[0] - 1.0).abs() < 1e-14 && (s.energies[1] - 2.0).abs() < 1e-14);
        assert!((s.eigenvectors[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_levels_are_dropped() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -1e-3, 0.0]));
        let s = diagonalize(&matrix(d, DMatrix::zeros(3, 3))).unwrap();
        assert_eq!(s.n_retained, 1);
        assert_eq!(s.n_discarded(), 2);
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-0.5, -1.0]));
        assert!(matches!(diagonalize(&matrix(neg, DMatrix::zeros(2, 2))), Err(Error::Numerical(_))));
    }

    #[test]
    fn scalar_error_bracket() {
        let m = matrix(DMatrix::from_element(1, 1, (-1f64).exp()), DMatrix::from_element(1, 1, 0.01));
        let s = solve_spectrum(&m, 2.0).unwrap();
        let up = ((-1f64).exp() + 0.01).ln() + 1.0;
        let down = ((-1f64).exp() - 0.01).ln() + 1.0;
        assert!((s.errors[0] - up.abs().max(down.abs())).abs() < 1e-14);
        assert!((s.errors[0] - 0.02757).abs() < 1e-4);
        let clean = solve_spectrum(&matrix(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)), 2.0).unwrap();
        assert!(clean.errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn harmonic_levels_from_exact_kernel() {
        let s = solve_spectrum(&mehler_matrix(40, 2.0), 2.0).unwrap();
        for (e, x) in s.energies.iter().zip([0.5, 1.5, 2.5]) {
            assert!((e / x - 1.0).abs() < 0.02, "{e} vs {x}");
        }
    }

    #[test]
    fn eigensystem_properties() {
        let m = mehler_matrix(30, 1.0);
        let s = diagonalize(&m).unwrap();
        assert_eq!(s.n_retained, 30);
        let u = &s.eigenvectors;
        let ortho = u.transpose() * u - DMatrix::<f64>::identity(30, 30);
        assert!(ortho.amax() <= 1e-10);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.eigenvalues.clone()));
        let rec = u * d * u.transpose() - &m.values;
        assert!(rec.amax() <= 1e-8 * m.values.amax());
        assert!((s.eigenvalues.iter().sum::<f64>() - m.values.trace()).abs() < 1e-10);
        assert!(s.energies.windows(2).all(|w| w[0] <= w[1]));
        let g = u.column(0);
        let sign = g[15].signum();
        assert!(g.iter().all(|v| v * sign > 0.0));
    }

    #[test]
    fn spectrum_invariant_under_node_permutation() {
        let mut b = build_regular_basis(25, -5.0, 5.0).unwrap();
        let k = |x: &[f64], y: &[f64]| mehler_kernel(x[0], y[0], 1.5, 1.0, 1.0, 1.0);
        let a = diagonalize(&assemble_exact(&b, 1.5, 1.0, k).unwrap()).unwrap();
        b.nodes.reverse();
        b.nodes.swap(3, 17);
        let c = diagonalize(&assemble_exact(&b, 1.5, 1.0, k).unwrap()).unwrap();
        for (x, y) in a.energies.iter().zip(&c.energies).take(10) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn free_theory_matrix_is_exact() {
        let mp = ModelParams::single_site(0.0, 0.0);
        let lp = LatticeParams::new(1, 10, 1.0, 0.1).unwrap();
        let b = build_regular_basis(6, -2.0, 2.0).unwrap();
        let m = assemble(&b, &mp, &lp, 10, RngStream::new(1, 0)).unwrap();
        let fp = FreeKernelParams::new(1.0, 1.0, 1.0);
        for i in 0..6 {
            for j in 0..6 {
                let (a, c) = (&b.nodes[i], &b.nodes[j]);
                let exact = free_matrix_element(&a.position, &c.position, (a.weight, c.weight), &fp).unwrap();
                assert!((m.values[(i, j)] - exact).abs() <= 1e-15 * exact);
                assert_eq!(m.errors[(i, j)], 0.0);
            }
        }
        assert!(m.values[(0, 0)] > m.values[(0, 5)]);
    }

    #[test]
    fn harmonic_element_matches_mehler() {
        let mp = ModelParams::single_site(1.0, 0.0);
        let lp = LatticeParams::new(1, 30, 1.0, 1.0 / 30.0).unwrap();
        let b = build_regular_basis(10, -2.5, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (i, j) in [(4, 5), (2, 7), (5, 5)] {
            let (v, e) = matrix_element(i, j, &b, &mp, &lp, 20_000, &mut rng).unwrap();
            let (a, c) = (&b.nodes[i], &b.nodes[j]);
            let exact = (a.weight * c.weight).sqrt()
                * mehler_kernel(a.position[0], c.position[0], 1.0, 1.0, 1.0, 1.0).unwrap();
            // Allow for the O(a_t²) discretization bias on top of noise.
            assert!((v - exact).abs() < 3.0 * e + 2e-3 * exact, "({i},{j}) {v} ± {e} vs {exact}");
        }
    }

    #[test]
    fn assembly_is_symmetric_and_schedule_independent() {
        let mp = ModelParams::single_site(1.0, 0.5);
        let lp = LatticeParams::new(1, 10, 1.0, 0.1).unwrap();
        let b = build_regular_basis(20, -4.0, 4.0).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| assemble(&b, &mp, &lp, 50, RngStream::new(42, 0)).unwrap())
        };
        let (a, c) = (run(1), run(8));
        assert_eq!(a, c);
        assert_eq!(a.values, a.values.transpose());
        assert_eq!(a.errors, a.errors.transpose());
    }

    #[test]
    fn error_bars_shrink_with_statistics() {
        let mp = ModelParams::single_site(1.0, 0.0);
        let lp = LatticeParams::new(1, 20, 1.0, 0.05).unwrap();
        let b = build_regular_basis(12, -3.0, 3.0).unwrap();
        let bar = |n: usize| {
            let m = assemble(&b, &mp, &lp, n, RngStream::new(9, n as u64)).unwrap();
            solve_spectrum(&m, 2.0).unwrap().errors[0]
        };
        let ratio = bar(4000) / bar(1000);
        assert!((ratio - 0.5).abs() < 0.15, "ratio {ratio}");
    }

    #[test]
    fn stochastic_basis_matrix_dimensions() {
        let pts: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let b = build_stochastic_basis(&pts, 5, &DensityMode::Kde, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let lp = LatticeParams::new(3, 4, 1.0, 0.25).unwrap();
        let err = assemble(&b, &ModelParams::default(), &lp, 10, RngStream::new(1, 1));
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn noise_floor_counts_resolved_levels() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.1, 0.001]));
        let e = DMatrix::from_element(3, 3, 0.001);
        let s = solve_spectrum(&matrix(d, e), 2.0).unwrap();
        let floor = 2.0 * (3.0f64 * 1e-6).sqrt();
        assert!((s.noise_floor - floor).abs() < 1e-15);
        assert_eq!(s.n_resolved, 2);
    }

    #[test]
    fn spectrum_file_round_trip() {
        let s = solve_spectrum(&mehler_matrix(20, 2.0), 2.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.dat");
        write_spectrum(&path, "seed = 1", &s).unwrap();
        let back = read_spectrum(&path).unwrap();
        assert_eq!(back.energies, s.energies);
        assert_eq!(back.errors, s.errors);
        assert_eq!(back.n_resolved, s.n_resolved);
        assert_eq!(back.transition_time, 2.0);
    }
}
