use mchamiltonian::basis::{build_regular_basis, read_basis, write_basis};
use mchamiltonian::hamiltonian::{assemble_exact, read_spectrum, solve_spectrum, write_spectrum};
use mchamiltonian::oracle::{grid_spectrum, harmonic_reference, mehler_kernel, GridSpec};
use mchamiltonian::thermo::{
    consistency_checks, read_thermo_table, thermo_from_levels, thermo_from_spectrum, write_thermo_table,
    LevelSelection, DEFAULT_WINDOW,
};
use mchamiltonian::ModelParams;
use proptest::prelude::*;

fn exact_harmonic(n: usize, t: f64, omega: f64) -> mchamiltonian::hamiltonian::EffectiveSpectrum {
    let basis = build_regular_basis(n, -5.0, 5.0).unwrap();
    let m = assemble_exact(&basis, t, 1.0, |x, y| mehler_kernel(x[0], y[0], t, 1.0, omega, 1.0)).unwrap();
    solve_spectrum(&m, 2.0).unwrap()
}

#[test]
fn exact_spectrum_survives_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = exact_harmonic(30, 1.5, 1.0);
    let path = dir.path().join("s.dat");
    write_spectrum(&path, "seed = 1\n", &s).unwrap();
    let back = read_spectrum(&path).unwrap();
    assert_eq!(back.energies, s.energies[..s.n_retained].to_vec());
    assert_eq!(back.n_resolved, s.n_resolved);
}

#[test]
fn thermo_table_round_trip_and_identities() {
    let dir = tempfile::tempdir().unwrap();
    let s = exact_harmonic(40, 2.0, 1.0);
    let betas: Vec<f64> = (0..200).map(|i| 1.0 + 0.01 * i as f64).collect();
    let points = thermo_from_spectrum(&s, &betas, 1.0, LevelSelection::All).unwrap();
    let path = dir.path().join("t.dat");
    write_thermo_table(&path, "", &points, DEFAULT_WINDOW).unwrap();
    let back = read_thermo_table(&path).unwrap();
    for (a, b) in back.iter().zip(&points) {
        assert_eq!((a.beta, a.f, a.u, a.s, a.c, a.source), (b.beta, b.f, b.u, b.s, b.c, b.source));
    }
    let report = consistency_checks(&back, 1.0, 1e-6).unwrap();
    assert!(report.is_ok(), "{:?}", report.violations.first());
    let exact = harmonic_reference(2.0, &[1.0], 1.0, 1.0).unwrap();
    assert!((points[100].u.value - exact.u.value).abs() < 1e-4);
}

#[test]
fn basis_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let b = build_regular_basis(7, -1.0, 2.5).unwrap();
    let path = dir.path().join("b.dat");
    write_basis(&path, "", &b).unwrap();
    let back = read_basis(&path).unwrap();
    assert_eq!(back.len(), 7);
    for (x, y) in b.nodes.iter().zip(&back.nodes) {
        assert_eq!(x.position, y.position);
        assert_eq!(x.weight, y.weight);
    }
}

#[test]
fn grid_oracle_matches_two_site_normal_modes() {
    let mp = ModelParams::chain(1.0, 2.0, 0.0);
    let s = grid_spectrum(&mp, &GridSpec::new(24, -4.0, 4.0, 2), 2).unwrap();
    let exact = (2.0 + 8f64.sqrt()) / 2.0;
    assert!((s.energies[0] - exact).abs() < 1e-3, "{}", s.energies[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn levels_give_consistent_thermodynamics(
        gaps in prop::collection::vec(0.05f64..3.0, 1..6),
        e0 in -2.0f64..2.0,
    ) {
        let mut levels = vec![e0];
        for g in &gaps {
            levels.push(levels.last().unwrap() + g);
        }
        let betas: Vec<f64> = (0..60).map(|i| 0.5 + 0.01 * i as f64).collect();
        let pts = thermo_from_levels(&levels, &vec![0.0; levels.len()], &betas, 1.0).unwrap();
        let report = consistency_checks(&pts, 1.0, 1e-6).unwrap();
        prop_assert!(report.is_ok(), "{:?}", report.violations.first());
        for p in &pts {
            prop_assert!(p.c.value >= 0.0 && p.s.value >= -1e-12);
            prop_assert!(p.u.value >= e0 - 1e-12);
        }
    }

    #[test]
    fn exact_kernel_energies_are_ordered(omega in 0.5f64..2.0, t in 0.5f64..3.0) {
        let s = exact_harmonic(30, t, omega);
        prop_assert!(s.energies.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((s.energies[0] / (0.5 * omega) - 1.0).abs() < 0.02);
    }
}
