//! Builds a stochastic basis from free-particle endpoints and checks that
//! the importance weights integrate the sampling density.

use mchamiltonian::basis::{build_stochastic_basis, DensityMode};
use mchamiltonian::free::{gaussian_endpoint_sigma, FreeKernelParams};
use mchamiltonian::rng::tags;
use mchamiltonian::sampler::{sample_endpoint_ensemble, MetropolisConfig};
use mchamiltonian::{LatticeParams, ModelParams, Result, RngStream};

fn main() -> Result<()> {
    let mp = ModelParams::single_site(0.0, 0.0);
    let lp = LatticeParams::from_total_time(1, 1.0, 0.05, 1.0)?;
    let root = RngStream::new(3, 0);
    let cfg = MetropolisConfig { decorrelation: 50, ..MetropolisConfig::default() };
    let ens = sample_endpoint_ensemble(5000, &[0.0], &lp, &mp, root.child(tags::ENDPOINTS, 0), &cfg)?;
    println!("endpoint acceptance rate {:.3}", ens.acceptance_rate);

    // Σ w_i P(x_i) g(x_i) averages g over the sampling density whatever P
    // is; Σ w_i f(x_i) integrates f and does depend on the density model.
    let sigma = gaussian_endpoint_sigma(&FreeKernelParams::new(1.0, 1.0, 1.0));
    for mode in [DensityMode::Kde, DensityMode::Gaussian, DensityMode::Free { sigma }] {
        let basis = build_stochastic_basis(&ens.points, 400, &mode, &mut root.child(tags::BASIS, 0).rng())?;
        let integral: f64 = basis.nodes.iter().map(|n| n.weight * (-n.position[0].powi(2)).exp()).sum();
        println!(
            "{:>8}: sum w P = {:.12}, <x^2> = {:.4} (exact {:.4}), integral of exp(-x^2) = {:.4} (exact {:.4})",
            mode.name(),
            basis.quadrature(|_| 1.0),
            basis.quadrature(|x| x[0] * x[0]),
            sigma * sigma,
            integral,
            std::f64::consts::PI.sqrt()
        );
    }
    Ok(())
}
