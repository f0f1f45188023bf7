//! Harmonic oscillator on a regular box basis: the closed-form kernel next
//! to the Monte Carlo estimate of the same transition matrix.

use mchamiltonian::basis::build_regular_basis;
use mchamiltonian::hamiltonian::{assemble, assemble_exact, solve_spectrum};
use mchamiltonian::oracle::mehler_kernel;
use mchamiltonian::{LatticeParams, ModelParams, Result, RngStream};

fn main() -> Result<()> {
    let t = 2.0;
    let basis = build_regular_basis(40, -5.0, 5.0)?;

    let exact = assemble_exact(&basis, t, 1.0, |x, y| mehler_kernel(x[0], y[0], t, 1.0, 1.0, 1.0))?;
    let exact = solve_spectrum(&exact, 2.0)?;

    let mp = ModelParams::single_site(1.0, 0.0);
    let lp = LatticeParams::from_total_time(1, t, 1.0 / 30.0, 1.0)?;
    let mc = solve_spectrum(&assemble(&basis, &mp, &lp, 2000, RngStream::new(1, 0))?, 2.0)?;

    println!("{:>3} {:>10} {:>10} {:>10} {:>8}", "n", "exact", "kernel", "monte carlo", "error");
    for k in 0..5 {
        println!(
            "{:>3} {:>10.5} {:>10.5} {:>10.5} {:>8.5}",
            k + 1,
            k as f64 + 0.5,
            exact.energies[k],
            mc.energies[k],
            mc.errors[k]
        );
    }
    println!("resolved above the noise floor: {} of {}", mc.n_resolved, mc.n_retained);
    Ok(())
}
