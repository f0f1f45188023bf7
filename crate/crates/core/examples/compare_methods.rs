//! Hamiltonian and Lagrangian thermodynamics of the quartic oscillator,
//! compared point by point.

use mchamiltonian::basis::build_regular_basis;
use mchamiltonian::hamiltonian::{assemble, solve_spectrum};
use mchamiltonian::lattice::{lattice_thermo_point, LatticeSettings};
use mchamiltonian::pipeline::{compare_tables, format_comparison};
use mchamiltonian::rng::tags;
use mchamiltonian::thermo::{thermo_from_spectrum, LevelSelection};
use mchamiltonian::{LatticeParams, ModelParams, Result, RngStream};

fn main() -> Result<()> {
    let mp = ModelParams::single_site(2.0, 1.0);
    let betas = [1.0, 2.0, 4.0];

    let lp = LatticeParams::from_total_time(1, 0.5, 1.0 / 30.0, 1.0)?;
    let m = assemble(&build_regular_basis(40, -5.0, 5.0)?, &mp, &lp, 4000, RngStream::new(7, 0))?;
    let hamiltonian = thermo_from_spectrum(&solve_spectrum(&m, 2.0)?, &betas, 1.0, LevelSelection::Resolved)?;

    let settings = LatticeSettings { n_configs_u: 20_000, n_configs_c: 10_000, n_configs_f: 10_000, ..Default::default() };
    let root = RngStream::new(7, 1);
    let lagrangian = betas
        .iter()
        .enumerate()
        .map(|(i, &b)| lattice_thermo_point(b, 1, &mp, &settings, root.child(tags::LATTICE_U, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let c = compare_tables(&hamiltonian, &lagrangian)?;
    print!("{}", format_comparison("", &c));
    Ok(())
}
