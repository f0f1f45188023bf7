//! Exact reference levels from the finite-difference grid, in one and two
//! dimensions.

use mchamiltonian::oracle::{grid_spectrum, GridSpec};
use mchamiltonian::{ModelParams, Result};

fn main() -> Result<()> {
    let one = grid_spectrum(&ModelParams::single_site(2.0, 1.0), &GridSpec::new(400, -6.0, 6.0, 1), 6)?;
    println!("single site, lambda = 1: {:.6?}", one.energies);

    let two = grid_spectrum(&ModelParams::chain(1.0, 2.0, 0.0), &GridSpec::new(32, -4.5, 4.5, 2), 3)?;
    println!("two-site chain, lambda = 0: {:.4?} (exact E0 {:.4})", two.energies, (2.0 + 8f64.sqrt()) / 2.0);
    Ok(())
}
