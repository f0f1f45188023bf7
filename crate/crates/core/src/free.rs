//! Closed-form free-particle and harmonic-chain quantities.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ChainBoundary, ModelParams};

/// Parameters of the free Euclidean propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeKernelParams {
    pub mass: f64,
    pub hbar: f64,
    pub transition_time: f64,
}

impl FreeKernelParams {
    pub fn new(mass: f64, hbar: f64, transition_time: f64) -> Self {
        FreeKernelParams {
            mass,
            hbar,
            transition_time,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.transition_time > 0.0) {
            return Err(Error::Domain(format!(
                "transition time must be positive, got {}",
                self.transition_time
            )));
        }
        if !(self.mass > 0.0 && self.hbar > 0.0) {
            return Err(Error::Domain("mass and hbar must be positive".into()));
        }
        Ok(())
    }
}

/// G(x,T;y,0) = √(m/(2πħT)) exp(-m(x-y)²/(2ħT)).
pub fn free_propagator(x: f64, y: f64, fp: &FreeKernelParams) -> Result<f64> {
    fp.check()?;
    Ok(free_propagator_unchecked(x, y, fp))
}

#[inline]
pub(crate) fn free_propagator_unchecked(x: f64, y: f64, fp: &FreeKernelParams) -> f64 {
    let ht = fp.hbar * fp.transition_time;
    let d = x - y;
    (fp.mass / (2.0 * std::f64::consts::PI * ht)).sqrt() * (-fp.mass * d * d / (2.0 * ht)).exp()
}

/// Width √(ħT/m) of the free endpoint density.
pub fn gaussian_endpoint_sigma(fp: &FreeKernelParams) -> f64 {
    (fp.hbar * fp.transition_time / fp.mass).sqrt()
}

/// Free box-state amplitude √(w_i w_j) Π_n G(x_i[n], T; x_j[n], 0).
pub fn free_matrix_element(
    node_i: &[f64],
    node_j: &[f64],
    weights: (f64, f64),
    fp: &FreeKernelParams,
) -> Result<f64> {
    fp.check()?;
    if node_i.len() != node_j.len() {
        return Err(Error::Dimension(format!(
            "nodes have dimensions {} and {}",
            node_i.len(),
            node_j.len()
        )));
    }
    let (wi, wj) = weights;
    if !(wi > 0.0 && wj > 0.0) {
        return Err(Error::Domain(format!(
            "box volumes must be positive, got ({wi}, {wj})"
        )));
    }
    // Product in log space so 9-site products do not underflow early.
    let ht = fp.hbar * fp.transition_time;
    let d2: f64 = node_i
        .iter()
        .zip(node_j)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let n = node_i.len() as f64;
    let log_g = 0.5 * n * (fp.mass / (2.0 * std::f64::consts::PI * ht)).ln()
        - fp.mass * d2 / (2.0 * ht);
    Ok((wi * wj).sqrt() * log_g.exp())
}

/// Normal-mode frequencies of the harmonic (λ = 0) chain, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModeSet {
    pub frequencies: Vec<f64>,
}

impl NormalModeSet {
    pub fn zero_point(&self, hbar: f64) -> f64 {
        0.5 * hbar * self.frequencies.iter().sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// ω_k = √(Ω₀² + 4Ω² sin²(πk/N_s)) for the periodic chain.
pub fn kg_normal_modes(n_sites: usize, omega: f64, omega0: f64) -> NormalModeSet {
    let mut frequencies: Vec<f64> = (0..n_sites)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / n_sites as f64).sin();
            (omega0 * omega0 + 4.0 * omega * omega * s * s).sqrt()
        })
        .collect();
    frequencies.sort_by(f64::total_cmp);
    NormalModeSet { frequencies }
}

/// Symmetric matrix K with potential energy ½ φᵀKφ (mass 1 per site).
pub fn coupling_matrix(n_sites: usize, mp: &ModelParams) -> DMatrix<f64> {
    let mut k = DMatrix::<f64>::from_diagonal_element(n_sites, n_sites, mp.omega0 * mp.omega0);
    let w2 = mp.omega * mp.omega;
    let bonds = match mp.boundary {
        ChainBoundary::Periodic if n_sites >= 2 => n_sites,
        ChainBoundary::Periodic => 0,
        ChainBoundary::Open => n_sites.saturating_sub(1),
    };
    for b in 0..bonds {
        let (i, j) = (b, (b + 1) % n_sites);
        k[(i, i)] += w2;
        k[(j, j)] += w2;
        k[(i, j)] -= w2;
        k[(j, i)] -= w2;
    }
    k
}

/// Normal modes for the chain's configured boundary. Periodic chains use the
/// closed form; open chains diagonalize the quadratic form.
pub fn kg_normal_modes_for(n_sites: usize, mp: &ModelParams) -> NormalModeSet {
    match mp.boundary {
        ChainBoundary::Periodic => {
            let mut modes = kg_normal_modes(n_sites, mp.omega, mp.omega0);
            let scale = mp.mass.sqrt().recip();
            modes.frequencies.iter_mut().for_each(|w| *w *= scale);
            modes
        }
        ChainBoundary::Open => {
            let eig = coupling_matrix(n_sites, mp).symmetric_eigenvalues();
            let mut frequencies: Vec<f64> =
                eig.iter().map(|&l| (l.max(0.0) / mp.mass).sqrt()).collect();
            frequencies.sort_by(f64::total_cmp);
            NormalModeSet { frequencies }
        }
    }
}

/// F = Σ_k [ħω_k/2 + (1/β) ln(1 - e^{-βħω_k})], zero-point energy included.
pub fn kg_free_energy(beta: f64, modes: &NormalModeSet, hbar: f64) -> f64 {
    modes
        .frequencies
        .iter()
        .map(|&w| {
            let e = hbar * w;
            0.5 * e + (-(-beta * e).exp()).ln_1p() / beta
        })
        .sum()
}

/// Analytic harmonic-chain thermodynamics at one β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgThermo {
    pub f: f64,
    pub u: f64,
    pub s: f64,
    pub c: f64,
}

pub fn kg_thermo(beta: f64, modes: &NormalModeSet, hbar: f64, kb: f64) -> KgThermo {
    let f = kg_free_energy(beta, modes, hbar);
    let mut u = 0.0;
    let mut c = 0.0;
    for &w in &modes.frequencies {
        let e = hbar * w;
        let x = beta * e;
        u += 0.5 * e + e / x.exp_m1();
        let q = (-x).exp();
        c += kb * x * x * q / ((1.0 - q) * (1.0 - q));
    }
    KgThermo {
        f,
        u,
        s: kb * beta * (u - f),
        c,
    }
}
