//! Quartic single-site model: Monte Carlo effective spectrum against the
//! finite-difference grid oracle.

use mchamiltonian::basis::build_regular_basis;
use mchamiltonian::hamiltonian::{assemble, solve_spectrum};
use mchamiltonian::oracle::{grid_spectrum, GridSpec};
use mchamiltonian::{LatticeParams, ModelParams, Result, RngStream};

fn main() -> Result<()> {
    let mp = ModelParams::single_site(2.0, 1.0);
    let lp = LatticeParams::from_total_time(1, 0.5, 1.0 / 30.0, 1.0)?;
    let basis = build_regular_basis(40, -5.0, 5.0)?;
    let m = assemble(&basis, &mp, &lp, 4000, RngStream::new(2, 0))?;
    let spectrum = solve_spectrum(&m, 2.0)?;
    let oracle = grid_spectrum(&mp, &GridSpec::new(300, -6.0, 6.0, 1), 8)?;

    println!("noise floor {:.2e}, {} levels resolved", spectrum.noise_floor, spectrum.n_resolved);
    for (k, e) in oracle.energies.iter().enumerate().take(spectrum.n_resolved.max(2)) {
        println!(
            "E{k}: {:.5} ± {:.5}   grid {e:.5}   z = {:.2}",
            spectrum.energies[k],
            spectrum.errors[k],
            (spectrum.energies[k] - e) / spectrum.errors[k]
        );
    }
    Ok(())
}
