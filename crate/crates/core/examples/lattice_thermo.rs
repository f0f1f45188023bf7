//! Euclidean lattice estimators for the harmonic oscillator next to the
//! exact continuum thermodynamics.

use mchamiltonian::free::{kg_normal_modes, kg_thermo};
use mchamiltonian::lattice::{lattice_thermo_point, LatticeSettings};
use mchamiltonian::rng::tags;
use mchamiltonian::{ModelParams, Result, RngStream};

fn main() -> Result<()> {
    let mp = ModelParams::single_site(2.0, 0.0);
    let settings = LatticeSettings { n_configs_u: 20_000, n_configs_c: 20_000, n_configs_f: 2_000, ..Default::default() };
    let modes = kg_normal_modes(1, 1.0, 2.0);
    let root = RngStream::new(6, 0);
    println!("{:>5} {:>18} {:>9} {:>18} {:>9}", "beta", "U lattice", "U exact", "C lattice", "C exact");
    for (i, beta) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let p = lattice_thermo_point(beta, 1, &mp, &settings, root.child(tags::LATTICE_U, i as u64))?;
        let exact = kg_thermo(beta, &modes, 1.0, 1.0);
        println!("{beta:>5} {:>18} {:>9.5} {:>18} {:>9.5}", format!("{:.4}", p.u), exact.u, format!("{:.4}", p.c), exact.c);
    }
    Ok(())
}
