//! Thermodynamics from an effective spectrum, checked against the closed
//! form and the finite-difference identities.

use mchamiltonian::basis::build_regular_basis;
use mchamiltonian::hamiltonian::{assemble_exact, solve_spectrum};
use mchamiltonian::oracle::{harmonic_reference, mehler_kernel};
use mchamiltonian::thermo::{
    beta_grid, consistency_checks, format_thermo_table, thermo_from_spectrum, LevelSelection, DEFAULT_WINDOW,
};
use mchamiltonian::Result;

fn main() -> Result<()> {
    let basis = build_regular_basis(40, -5.0, 5.0)?;
    let m = assemble_exact(&basis, 2.0, 1.0, |x, y| mehler_kernel(x[0], y[0], 2.0, 1.0, 1.0, 1.0))?;
    let spectrum = solve_spectrum(&m, 2.0)?;

    let coarse = beta_grid(1.0, 10.0, 10, false)?;
    let points = thermo_from_spectrum(&spectrum, &coarse, 1.0, LevelSelection::All)?;
    print!("{}", format_thermo_table("", &points, DEFAULT_WINDOW));
    let exact = harmonic_reference(2.0, &[1.0], 1.0, 1.0)?;
    println!("# closed form at beta = 2: F = {:.6} U = {:.6}", exact.f.value, exact.u.value);

    let fine = beta_grid(1.0, 10.0, 901, false)?;
    let report = consistency_checks(&thermo_from_spectrum(&spectrum, &fine, 1.0, LevelSelection::All)?, 1.0, 1e-6)?;
    println!(
        "# identities on {} points: max residual U {:.1e}, C {:.1e}, ok = {}",
        report.points_checked,
        report.max_u_residual,
        report.max_c_residual,
        report.is_ok()
    );
    Ok(())
}
