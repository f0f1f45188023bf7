//! The coupled anharmonic oscillator chain and its discretized Euclidean action.
//!
//! A chain of `N_s` sites, each carrying a real field value, evolves in
//! imaginary time on `N_t` slices of width `a_t`. The action per slice is
//!
//! ```text
//! m (φ(n,k+1) - φ(n,k))² / (2 a_t)
//!   + a_t [ Ω²/2 (φ(n+1,k) - φ(n,k))² + Ω₀²/2 φ(n,k)² + λ/2 φ(n,k)⁴ ]
//! ```
//!
//! The spatial neighbour `n+1` wraps around for [`ChainBoundary::Periodic`]
//! (the default) and is absent at the last site for [`ChainBoundary::Open`].
//! The potential is evaluated at the earlier slice of every time step
//! ([`TimeRule::LeftPoint`]); fixed-endpoint transition amplitudes use the
//! time-symmetric [`TimeRule::Trapezoid`] variant, which weights the two
//! endpoint slices by one half. On a periodic path both rules coincide.

use crate::error::{Error, Result};

/// Spatial boundary condition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainBoundary {
    /// Site `N_s` couples back to site 1.
    #[default]
    Periodic,
    /// The end sites have a single neighbour.
    Open,
}

impl ChainBoundary {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainBoundary::Periodic => "periodic",
            ChainBoundary::Open => "open",
        }
    }
}

impl std::str::FromStr for ChainBoundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(ChainBoundary::Periodic),
            "open" => Ok(ChainBoundary::Open),
            other => Err(Error::Config(format!(
                "unknown chain boundary '{other}' (expected periodic|open)"
            ))),
        }
    }
}

/// Physical couplings of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Nearest-neighbour coupling Ω.
    pub omega: f64,
    /// On-site frequency Ω₀.
    pub omega0: f64,
    /// Quartic coupling λ.
    pub lambda: f64,
    /// Kinetic mass.
    pub mass: f64,
    pub hbar: f64,
    pub kb: f64,
    pub boundary: ChainBoundary,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            omega: 1.0,
            omega0: 2.0,
            lambda: 1.0,
            mass: 1.0,
            hbar: 1.0,
            kb: 1.0,
            boundary: ChainBoundary::Periodic,
        }
    }
}

impl ModelParams {
    /// Chain with unit mass, ħ = k_B = 1 and periodic boundary.
    pub fn chain(omega: f64, omega0: f64, lambda: f64) -> Self {
        ModelParams {
            omega,
            omega0,
            lambda,
            ..Default::default()
        }
    }

    /// A single uncoupled site with frequency `omega0` and quartic `lambda`.
    pub fn single_site(omega0: f64, lambda: f64) -> Self {
        Self::chain(0.0, omega0, lambda)
    }

    /// Checks the strict invariants. The free particle (Ω₀ = 0) is accepted
    /// here because the samplers need it; physical runs go through
    /// [`ModelParams::validate_physical`].
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.omega >= 0.0, "omega must be >= 0"),
            (self.omega0 >= 0.0, "omega0 must be >= 0"),
            (self.lambda >= 0.0, "lambda must be >= 0"),
            (self.mass > 0.0, "mass must be > 0"),
            (self.hbar > 0.0, "hbar must be > 0"),
            (self.kb > 0.0, "kb must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        let all = [
            self.omega,
            self.omega0,
            self.lambda,
            self.mass,
            self.hbar,
            self.kb,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus Ω₀ > 0.
    pub fn validate_physical(&self) -> Result<()> {
        self.validate()?;
        if self.omega0 <= 0.0 {
            return Err(Error::Config("omega0 must be > 0".into()));
        }
        Ok(())
    }

    /// On-site potential Ω₀²/2 φ² + λ/2 φ⁴.
    #[inline]
    pub fn onsite(&self, phi: f64) -> f64 {
        let p2 = phi * phi;
        0.5 * self.omega0 * self.omega0 * p2 + 0.5 * self.lambda * p2 * p2
    }

    /// Non-kinetic energy density of one time slice: coupling + on-site terms.
    pub fn slice_potential(&self, slice: &[f64]) -> f64 {
        let onsite: f64 = slice.iter().map(|&p| self.onsite(p)).sum();
        onsite + self.coupling(slice)
    }

    /// Spatial gradient energy Ω²/2 Σ (φ_{n+1} - φ_n)².
    pub fn coupling(&self, slice: &[f64]) -> f64 {
        let n = slice.len();
        if self.omega == 0.0 || n < 2 {
            return 0.0;
        }
        let bonds = match self.boundary {
            ChainBoundary::Periodic => n,
            ChainBoundary::Open => n - 1,
        };
        let sum: f64 = (0..bonds)
            .map(|i| {
                let d = slice[(i + 1) % n] - slice[i];
                d * d
            })
            .sum();
        0.5 * self.omega * self.omega * sum
    }
}

/// Space-time lattice geometry. The transition time is `n_time * a_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub n_sites: usize,
    pub n_time: usize,
    pub a_s: f64,
    pub a_t: f64,
}

impl LatticeParams {
    pub fn new(n_sites: usize, n_time: usize, a_s: f64, a_t: f64) -> Result<Self> {
        let lp = LatticeParams {
            n_sites,
            n_time,
            a_s,
            a_t,
        };
        lp.validate()?;
        Ok(lp)
    }

    /// Picks `n_time = round(total_time / a_t)` and rescales `a_t` so the
    /// slices tile `total_time` exactly.
    pub fn from_total_time(n_sites: usize, total_time: f64, a_t: f64, a_s: f64) -> Result<Self> {
        if !(total_time > 0.0 && a_t > 0.0) {
            return Err(Error::Config(
                "total time and a_t must both be positive".into(),
            ));
        }
        let n_time = (total_time / a_t).round().max(1.0) as usize;
        Self::new(n_sites, n_time, a_s, total_time / n_time as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 1 {
            return Err(Error::Config("n_sites must be >= 1".into()));
        }
        if self.n_time < 2 {
            return Err(Error::Config("n_time must be >= 2".into()));
        }
        if !(self.a_s > 0.0 && self.a_t > 0.0 && self.a_s.is_finite() && self.a_t.is_finite()) {
            return Err(Error::Config("lattice spacings must be positive".into()));
        }
        Ok(())
    }

    /// T = N_t · a_t (equals βħ for thermal lattices).
    pub fn total_time(&self) -> f64 {
        self.n_time as f64 * self.a_t
    }

    /// Chain length V = N_s · a_s.
    pub fn volume(&self) -> f64 {
        self.n_sites as f64 * self.a_s
    }
}

/// Boundary condition of a path in imaginary time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBoundary {
    /// Slices 0 and N_t are both stored; samplers never move pinned ends.
    Fixed,
    /// Slice N_t is identified with slice 0; only N_t slices are stored.
    Periodic,
}

/// How the potential is distributed over the time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRule {
    /// Potential at slices 0..N_t-1, weight a_t each.
    LeftPoint,
    /// Endpoint slices at weight a_t/2. Same as `LeftPoint` on periodic paths.
    Trapezoid,
}

/// A discretized Euclidean trajectory, stored slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    n_sites: usize,
    n_time: usize,
    boundary: TimeBoundary,
    values: Vec<f64>,
}

impl FieldPath {
    pub fn zeros(n_sites: usize, n_time: usize, boundary: TimeBoundary) -> Self {
        let stored = Self::stored_slices(n_time, boundary);
        FieldPath {
            n_sites,
            n_time,
            boundary,
            values: vec![0.0; stored * n_sites],
        }
    }

    /// Builds a path from slice-major values (`N_t + 1` slices for fixed
    /// boundary, `N_t` for periodic).
    pub fn from_values(
        n_sites: usize,
        n_time: usize,
        boundary: TimeBoundary,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::stored_slices(n_time, boundary) * n_sites;
        if values.len() != expected || n_sites == 0 || n_time == 0 {
            return Err(Error::Dimension(format!(
                "expected {expected} values for {n_sites} sites x {n_time} steps ({boundary:?}), got {}",
                values.len()
            )));
        }
        Ok(FieldPath {
            n_sites,
            n_time,
            boundary,
            values,
        })
    }

    fn stored_slices(n_time: usize, boundary: TimeBoundary) -> usize {
        match boundary {
            TimeBoundary::Fixed => n_time + 1,
            TimeBoundary::Periodic => n_time,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn boundary(&self) -> TimeBoundary {
        self.boundary
    }

    pub fn n_stored_slices(&self) -> usize {
        Self::stored_slices(self.n_time, self.boundary)
    }

    /// Slice `k` for `k` in `0..=N_t`; slice `N_t` wraps on periodic paths.
    pub fn slice(&self, k: usize) -> &[f64] {
        let k = self.wrap(k);
        &self.values[k * self.n_sites..(k + 1) * self.n_sites]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let k = self.wrap(k);
        &mut self.values[k * self.n_sites..(k + 1) * self.n_sites]
    }

    pub fn get(&self, k: usize, n: usize) -> f64 {
        self.slice(k)[n]
    }

    pub fn set(&mut self, k: usize, n: usize, v: f64) {
        self.slice_mut(k)[n] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    fn wrap(&self, k: usize) -> usize {
        match self.boundary {
            TimeBoundary::Periodic => k % self.n_time,
            TimeBoundary::Fixed => k,
        }
    }

    fn check(&self, lp: &LatticeParams) -> Result<()> {
        if self.n_sites != lp.n_sites || self.n_time != lp.n_time {
            return Err(Error::Dimension(format!(
                "path is {} sites x {} steps, lattice is {} x {}",
                self.n_sites, self.n_time, lp.n_sites, lp.n_time
            )));
        }
        Ok(())
    }

    /// Σ_{k<N_t, n} φ(n,k)⁴, the integrand of the quartic reweighting factor.
    pub fn quartic_sum(&self) -> f64 {
        (0..self.n_time)
            .flat_map(|k| self.slice(k).iter())
            .map(|p| (p * p) * (p * p))
            .sum()
    }
}

/// Kinetic and potential parts of the action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionParts {
    pub kinetic: f64,
    pub potential: f64,
}

impl ActionParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

fn kinetic_step(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum()
}

/// Kinetic and potential action under the given time rule.
pub fn action_parts(
    path: &FieldPath,
    mp: &ModelParams,
    lp: &LatticeParams,
    rule: TimeRule,
) -> Result<ActionParts> {
    path.check(lp)?;
    let nt = path.n_time;
    let mut kin = 0.0;
    for k in 0..nt {
        kin += kinetic_step(path.slice(k), path.slice(k + 1));
    }
    let mut pot: f64 = (1..nt).map(|k| mp.slice_potential(path.slice(k))).sum();
    let v0 = mp.slice_potential(path.slice(0));
    match (rule, path.boundary) {
        (TimeRule::Trapezoid, TimeBoundary::Fixed) => {
            pot += 0.5 * (v0 + mp.slice_potential(path.slice(nt)));
        }
        _ => pot += v0,
    }
    Ok(ActionParts {
        kinetic: 0.5 * mp.mass * kin / lp.a_t,
        potential: lp.a_t * pot,
    })
}

/// Full Euclidean action (left-point rule).
pub fn total_action(path: &FieldPath, mp: &ModelParams, lp: &LatticeParams) -> Result<f64> {
    Ok(action_parts(path, mp, lp, TimeRule::LeftPoint)?.total())
}

/// (S₀, S_V): time-derivative terms and everything else.
pub fn split_action(path: &FieldPath, mp: &ModelParams, lp: &LatticeParams) -> Result<(f64, f64)> {
    let p = action_parts(path, mp, lp, TimeRule::LeftPoint)?;
    Ok((p.kinetic, p.potential))
}

/// First and second derivatives of the action with respect to `a_t`
/// at fixed field values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionDerivatives {
    pub d1: f64,
    pub d2: f64,
}

/// ∂S/∂a_t and ∂²S/∂a_t² on a periodic (thermal) path.
pub fn action_at_derivatives(
    path: &FieldPath,
    mp: &ModelParams,
    lp: &LatticeParams,
) -> Result<ActionDerivatives> {
    if path.boundary != TimeBoundary::Periodic {
        return Err(Error::Usage(
            "a_t derivatives are defined on periodic (trace) paths only".into(),
        ));
    }
    path.check(lp)?;
    let mut kin = 0.0;
    let mut pot = 0.0;
    for k in 0..path.n_time {
        kin += kinetic_step(path.slice(k), path.slice(k + 1));
        pot += mp.slice_potential(path.slice(k));
    }
    let at = lp.a_t;
    let mk = mp.mass * kin;
    Ok(ActionDerivatives {
        d1: -0.5 * mk / (at * at) + pot,
        d2: mk / (at * at * at),
    })
}
