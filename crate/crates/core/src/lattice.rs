//! Thermodynamics from periodic Euclidean lattices: U and C from a_t
//! derivatives of the action, F by reweighting the exactly sampled
//! Klein-Gordon (λ = 0) ensemble, and S = k_B β (U - F).

use log::warn;

use crate::error::{Error, Result};
use crate::free::{kg_free_energy, kg_normal_modes_for};
use crate::model::{action_at_derivatives, FieldPath, LatticeParams, ModelParams};
use crate::rng::{tags, RngStream};
use crate::sampler::{sample_klein_gordon_lattice, sample_periodic_lattice, Ensemble, MetropolisConfig};
use crate::stats::{jackknife, Estimate};
use crate::thermo::{ThermoPoint, ThermoSource};

/// Jackknife blocks for nonlinear estimators.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// Smallest a_t for which the specific-heat estimator is stable.
pub const MIN_STABLE_AT_FOR_C: f64 = 0.1;

/// Per-configuration values needed by the U and C estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeMeasurement {
    /// ∂S/∂a_t at fixed N_t.
    pub d1: f64,
    /// ∂²S/∂a_t².
    pub d2: f64,
}

pub fn measure(path: &FieldPath, mp: &ModelParams, lp: &LatticeParams) -> LatticeMeasurement {
    let d = action_at_derivatives(path, mp, lp).expect("periodic path from the thermal sampler");
    LatticeMeasurement { d1: d.d1, d2: d.d2 }
}

fn beta_of(lp: &LatticeParams, mp: &ModelParams) -> f64 {
    lp.total_time() / mp.hbar
}

/// U = ħ N_s/(2 a_t) + ⟨∂S/∂a_t⟩ / N_t, autocorrelation-corrected error.
pub fn average_energy_lattice(ens: &Ensemble<LatticeMeasurement>) -> Result<Estimate> {
    if ens.len() < 2 {
        return Err(Error::Sampling("ensemble too small for U".into()));
    }
    let lp = &ens.lattice;
    let nt = lp.n_time as f64;
    let st = ens.stats(|m| m.d1);
    Ok(Estimate::new(
        ens.model.hbar * lp.n_sites as f64 / (2.0 * lp.a_t) + st.mean / nt,
        st.std_error / nt,
    ))
}

/// C = k_B β² (ħ/N_t)² [N_s N_t/(2a_t²) - ⟨∂²S⟩/ħ + Var(∂S)/ħ²] with a
/// block-jackknife error.
pub fn specific_heat_lattice(ens: &Ensemble<LatticeMeasurement>) -> Result<Estimate> {
    if ens.len() < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::Sampling(format!(
            "specific heat needs at least {} configurations",
            2 * JACKKNIFE_BLOCKS
        )));
    }
    let (lp, mp) = (&ens.lattice, &ens.model);
    if lp.a_t < MIN_STABLE_AT_FOR_C {
        warn!(
            "specific heat at a_t = {} < {MIN_STABLE_AT_FOR_C}: the estimator is unstable at small a_t",
            lp.a_t
        );
    }
    let (nt, ns, h) = (lp.n_time as f64, lp.n_sites as f64, mp.hbar);
    let beta = beta_of(lp, mp);
    let samples: Vec<[f64; 3]> = ens.iter().map(|m| [m.d1, m.d2, m.d1 * m.d1]).collect();
    let kb = mp.kb;
    let a = lp.a_t;
    Ok(jackknife(&samples, JACKKNIFE_BLOCKS, |m| {
        let var = m[2] - m[0] * m[0];
        kb * beta * beta * (h / nt).powi(2) * (ns * nt / (2.0 * a * a) - m[1] / h + var / (h * h))
    }))
}

/// F = F_KG - (1/β) ln⟨exp(-(λ/2) a_t Σφ⁴ / ħ)⟩_KG from per-configuration
/// quartic sums Σ_{n,k} φ⁴ of a Klein-Gordon ensemble.
///
/// Fails with [`Error::Overlap`] when the effective sample size of the
/// reweighting factors drops below 10.
pub fn free_energy_lattice(ens_kg: &Ensemble<f64>) -> Result<Estimate> {
    let (lp, mp) = (&ens_kg.lattice, &ens_kg.model);
    let beta = beta_of(lp, mp);
    let f_kg = kg_free_energy(beta, &kg_normal_modes_for(lp.n_sites, mp), mp.hbar);
    if mp.lambda == 0.0 {
        return Ok(Estimate::exact(f_kg));
    }
    if ens_kg.len() < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::Sampling(format!(
            "free energy needs at least {} configurations",
            2 * JACKKNIFE_BLOCKS
        )));
    }
    let c = 0.5 * mp.lambda * lp.a_t / mp.hbar;
    let expo: Vec<f64> = ens_kg.iter().map(|q| -c * q).collect();
    let shift = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<[f64; 1]> = expo.iter().map(|e| [(e - shift).exp()]).collect();
    let (s1, s2) = w.iter().fold((0.0, 0.0), |(a, b), x| (a + x[0], b + x[0] * x[0]));
    let ess = s1 * s1 / s2;
    let log_mean = jackknife(&w, JACKKNIFE_BLOCKS, |m| shift + m[0].ln());
    let f = Estimate::new(f_kg - log_mean.value / beta, log_mean.error / beta);
    if ess < 10.0 {
        return Err(Error::Overlap { ess, bound: f.value });
    }
    Ok(f)
}

/// S = k_B β (U - F), errors in quadrature.
pub fn entropy_lattice(u: Estimate, f: Estimate, beta: f64, kb: f64) -> Estimate {
    Estimate::new(kb * beta * (u.value - f.value), kb * beta * u.error.hypot(f.error))
}

/// Spacings and statistics for one lattice thermodynamics point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSettings {
    pub a_s: f64,
    pub a_t_u: f64,
    pub a_t_c: f64,
    pub a_t_f: f64,
    pub n_configs_u: usize,
    pub n_configs_c: usize,
    pub n_configs_f: usize,
    pub metropolis: MetropolisConfig,
}

impl Default for LatticeSettings {
    fn default() -> Self {
        LatticeSettings {
            a_s: 1.0,
            a_t_u: 1.0 / 30.0,
            a_t_c: 0.1,
            a_t_f: 0.01,
            n_configs_u: 20_000,
            n_configs_c: 20_000,
            n_configs_f: 20_000,
            metropolis: MetropolisConfig::default(),
        }
    }
}

/// Runs the three ensembles for one β (U and C by Metropolis, F from the
/// exact Klein-Gordon sampler) and combines them.
pub fn lattice_thermo_point(
    beta: f64,
    n_sites: usize,
    mp: &ModelParams,
    settings: &LatticeSettings,
    stream: RngStream,
) -> Result<ThermoPoint> {
    mp.validate_physical()?;
    let t = beta * mp.hbar;
    let lp_u = LatticeParams::from_total_time(n_sites, t, settings.a_t_u, settings.a_s)?;
    let lp_c = LatticeParams::from_total_time(n_sites, t, settings.a_t_c, settings.a_s)?;
    let lp_f = LatticeParams::from_total_time(n_sites, t, settings.a_t_f, settings.a_s)?;
    let cfg = &settings.metropolis;
    let ens_u = sample_periodic_lattice(settings.n_configs_u, &lp_u, mp, stream.child(tags::LATTICE_U, 0), cfg, |p| {
        measure(p, mp, &lp_u)
    })?;
    let ens_c = sample_periodic_lattice(settings.n_configs_c, &lp_c, mp, stream.child(tags::LATTICE_C, 0), cfg, |p| {
        measure(p, mp, &lp_c)
    })?;
    let f = if mp.lambda == 0.0 {
        let ens = Ensemble::<f64> {
            chains: Vec::new(),
            acceptance_rate: 1.0,
            lattice: lp_f,
            model: *mp,
        };
        free_energy_lattice(&ens)?
    } else {
        let ens_f = sample_klein_gordon_lattice(settings.n_configs_f, &lp_f, mp, stream.child(tags::LATTICE_F, 0), |p| {
            p.quartic_sum()
        })?;
        free_energy_lattice(&ens_f)?
    };
    let u = average_energy_lattice(&ens_u)?;
    let c = specific_heat_lattice(&ens_c)?;
    let s = entropy_lattice(u, f, beta, mp.kb);
    Ok(ThermoPoint {
        beta,
        ln_z: -beta * f.value,
        f,
        u,
        s,
        c,
        source: ThermoSource::Lagrangian,
    })
}
