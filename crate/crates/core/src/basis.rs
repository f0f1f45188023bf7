//! Box-state bases: equispaced 1-D grids and stochastic node sets drawn from
//! an endpoint ensemble, with volumes Δx_i = 1/(N P(x_i)).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::table::{comment_block, read_table, row, write_file};

#[derive(Debug, Clone, PartialEq)]
pub struct BasisNode {
    pub position: Vec<f64>,
    /// Box volume Δx_i.
    pub weight: f64,
    /// Endpoint density P(x_i) used to size the box.
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFlavor {
    Regular,
    Stochastic,
}

impl BasisFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisFlavor::Regular => "regular",
            BasisFlavor::Stochastic => "stochastic",
        }
    }
}

impl std::str::FromStr for BasisFlavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(BasisFlavor::Regular),
            "stochastic" => Ok(BasisFlavor::Stochastic),
            _ => Err(Error::Config(format!("unknown basis flavor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub nodes: Vec<BasisNode>,
    pub flavor: BasisFlavor,
    pub dimension: usize,
}

impl Basis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ_i Δx_i P(x_i) g(x_i), the box-quadrature estimate of ∫P g.
    pub fn quadrature(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.weight * n.density * g(&n.position))
            .sum()
    }
}

/// `n_nodes` equal boxes tiling [x_min, x_max], nodes at box centres.
pub fn build_regular_basis(n_nodes: usize, x_min: f64, x_max: f64) -> Result<Basis> {
    if n_nodes < 2 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::Config(
            "regular basis needs n_nodes >= 2 and x_max > x_min".into(),
        ));
    }
    let dx = (x_max - x_min) / n_nodes as f64;
    let density = 1.0 / (x_max - x_min);
    let nodes = (0..n_nodes)
        .map(|i| BasisNode {
            position: vec![x_min + (i as f64 + 0.5) * dx],
            weight: dx,
            density,
        })
        .collect();
    Ok(Basis {
        nodes,
        flavor: BasisFlavor::Regular,
        dimension: 1,
    })
}

/// Regular bases are one-dimensional; a product grid in several
/// dimensions grows as n^d and is exactly what the stochastic basis avoids.
pub fn build_regular_basis_nd(n_nodes: usize, x_min: f64, x_max: f64, dimension: usize) -> Result<Basis> {
    if dimension != 1 {
        return Err(Error::Usage(format!(
            "regular bases are only supported in one dimension (requested {dimension})"
        )));
    }
    build_regular_basis(n_nodes, x_min, x_max)
}

/// How the endpoint density P(x) is evaluated at the nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DensityMode {
    /// Product Gaussian kernels with a Silverman bandwidth per coordinate.
    #[default]
    Kde,
    /// Multivariate normal with the ensemble mean and covariance.
    Gaussian,
    /// Closed-form free endpoint density: independent N(0, σ²) coordinates.
    Free { sigma: f64 },
}

impl DensityMode {
    pub fn name(&self) -> &'static str {
        match self {
            DensityMode::Kde => "kde",
            DensityMode::Gaussian => "gaussian",
            DensityMode::Free { .. } => "free",
        }
    }
}

/// A density fitted to an endpoint ensemble, ready for evaluation.
#[derive(Debug, Clone)]
pub enum DensityEstimator {
    Kde {
        points: Vec<Vec<f64>>,
        bandwidth: Vec<f64>,
        log_norm: f64,
    },
    Gaussian {
        mean: DVector<f64>,
        /// Lower Cholesky factor of the covariance.
        chol: DMatrix<f64>,
        log_norm: f64,
    },
    Free {
        sigma: f64,
        dimension: usize,
    },
}

fn mean_and_sd(points: &[Vec<f64>], d: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for k in 0..d {
            mean[k] += p[k] / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in points {
        for k in 0..d {
            var[k] += (p[k] - mean[k]).powi(2) / (n - 1.0);
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

impl DensityEstimator {
    pub fn fit(points: &[Vec<f64>], mode: &DensityMode) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension("endpoint ensemble is empty or ragged".into()));
        }
        if let DensityMode::Free { sigma } = mode {
            if !(*sigma > 0.0) {
                return Err(Error::Config("free density needs sigma > 0".into()));
            }
            return Ok(DensityEstimator::Free { sigma: *sigma, dimension: d });
        }
        if points.len() < 10 {
            return Err(Error::Sampling(format!(
                "density estimation needs at least 10 endpoints, got {}",
                points.len()
            )));
        }
        let n = points.len();
        let (mean, sd) = mean_and_sd(points, d);
        match mode {
            DensityMode::Kde => {
                // Silverman's rule for a d-dimensional product kernel; reduces
                // to 1.06 σ n^(-1/5) in one dimension.
                let df = d as f64;
                let factor = (4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * (n as f64).powf(-1.0 / (df + 4.0));
                let bandwidth: Vec<f64> = sd
                    .iter()
                    .map(|&s| if s > 0.0 { (factor * s).max(f64::MIN_POSITIVE) } else { s.max(1e-3) })
                    .collect();
                let log_norm = -(n as f64).ln()
                    - bandwidth.iter().map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum::<f64>();
                Ok(DensityEstimator::Kde {
                    points: points.to_vec(),
                    bandwidth,
                    log_norm,
                })
            }
            DensityMode::Gaussian => {
                let mut cov = DMatrix::<f64>::zeros(d, d);
                for p in points {
                    for a in 0..d {
                        for b in 0..d {
                            cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]) / (n as f64 - 1.0);
                        }
                    }
                }
                let chol = cov
                    .cholesky()
                    .ok_or_else(|| Error::Sampling("endpoint covariance is singular".into()))?
                    .l();
                let log_det: f64 = (0..d).map(|k| chol[(k, k)].ln()).sum::<f64>() * 2.0;
                let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
                Ok(DensityEstimator::Gaussian {
                    mean: DVector::from_vec(mean),
                    chol,
                    log_norm,
                })
            }
            DensityMode::Free { .. } => unreachable!(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            DensityEstimator::Kde { bandwidth, .. } => bandwidth.len(),
            DensityEstimator::Gaussian { mean, .. } => mean.len(),
            DensityEstimator::Free { dimension, .. } => *dimension,
        }
    }

    /// ln P(x).
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            DensityEstimator::Kde {
                points,
                bandwidth,
                log_norm,
            } => {
                let exps: Vec<f64> = points
                    .iter()
                    .map(|p| {
                        -0.5 * p
                            .iter()
                            .zip(x)
                            .zip(bandwidth)
                            .map(|((a, b), h)| ((a - b) / h).powi(2))
                            .sum::<f64>()
                    })
                    .collect();
                let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                log_norm + m + exps.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
            }
            DensityEstimator::Gaussian { mean, chol, log_norm } => {
                let r = DVector::from_fn(mean.len(), |k, _| x[k] - mean[k]);
                let z = chol.solve_lower_triangular(&r).expect("cholesky factor is regular");
                log_norm - 0.5 * z.norm_squared()
            }
            DensityEstimator::Free { sigma, dimension } => {
                let q: f64 = x.iter().map(|v| v * v).sum();
                -0.5 * q / (sigma * sigma)
                    - *dimension as f64 * (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln()
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

/// Kernel density estimate of the ensemble at `query`.
pub fn estimate_density(endpoints: &[Vec<f64>], query: &[f64]) -> Result<f64> {
    let est = DensityEstimator::fit(endpoints, &DensityMode::Kde)?;
    if query.len() != est.dimension() {
        return Err(Error::Dimension(format!(
            "query has {} coordinates, ensemble has {}",
            query.len(),
            est.dimension()
        )));
    }
    Ok(est.density(query))
}

/// Picks `n_stoch` distinct endpoints in random order and sizes each box
/// from the density of the whole ensemble.
///
/// Endpoints closer than 1e-6 standard deviations in every coordinate to an
/// accepted node are skipped, since coincident boxes make M(T) singular.
pub fn build_stochastic_basis<R: Rng + ?Sized>(
    endpoints: &[Vec<f64>],
    n_stoch: usize,
    mode: &DensityMode,
    rng: &mut R,
) -> Result<Basis> {
    if n_stoch == 0 {
        return Err(Error::Config("n_stoch must be >= 1".into()));
    }
    if endpoints.len() < n_stoch {
        return Err(Error::Sampling(format!(
            "ensemble has {} endpoints, fewer than n_stoch = {n_stoch}",
            endpoints.len()
        )));
    }
    let est = DensityEstimator::fit(endpoints, mode)?;
    let d = est.dimension();
    let (_, sd) = mean_and_sd(endpoints, d);
    let tol: Vec<f64> = sd.iter().map(|s| 1e-6 * s.max(1e-300)).collect();
    let mut order: Vec<usize> = (0..endpoints.len()).collect();
    order.shuffle(rng);
    let mut chosen: Vec<&Vec<f64>> = Vec::with_capacity(n_stoch);
    for &i in &order {
        let p = &endpoints[i];
        let dup = chosen
            .iter()
            .any(|q| p.iter().zip(q.iter()).zip(&tol).all(|((a, b), t)| (a - b).abs() < *t));
        if !dup {
            chosen.push(p);
            if chosen.len() == n_stoch {
                break;
            }
        }
    }
    if chosen.len() < n_stoch {
        return Err(Error::Sampling(format!(
            "only {} distinct endpoints, {} short of n_stoch = {n_stoch}",
            chosen.len(),
            n_stoch - chosen.len()
        )));
    }
    let nodes = chosen
        .par_iter()
        .map(|p| {
            let density = est.density(p);
            if !(density > 0.0 && density.is_finite()) {
                return Err(Error::Numerical(format!("endpoint density {density} at a node")));
            }
            Ok(BasisNode {
                position: p.to_vec(),
                weight: 1.0 / (n_stoch as f64 * density),
                density,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Basis {
        nodes,
        flavor: BasisFlavor::Stochastic,
        dimension: d,
    })
}

/// One row per node: index, coordinates, density, weight.
pub fn format_basis(header: &str, basis: &Basis) -> String {
    let mut s = comment_block(header);
    s.push_str(&format!("# flavor = {}\n", basis.flavor.as_str()));
    s.push_str(&format!("# dimension = {}\n", basis.dimension));
    let coords: Vec<String> = (1..=basis.dimension).map(|k| format!("x{k}")).collect();
    s.push_str(&format!("# index {} density weight\n", coords.join(" ")));
    for (i, n) in basis.nodes.iter().enumerate() {
        let mut v = vec![i as f64];
        v.extend(&n.position);
        v.push(n.density);
        v.push(n.weight);
        s.push_str(&row(&v));
        s.push('\n');
    }
    s
}

pub fn write_basis(path: &Path, header: &str, basis: &Basis) -> Result<()> {
    write_file(path, &format_basis(header, basis))
}

pub fn read_basis(path: &Path) -> Result<Basis> {
    let t = read_table(path)?;
    let name = path.display().to_string();
    let bad = |line, msg: String| Error::Parse { path: name.clone(), line, msg };
    let flavor: BasisFlavor = t.header("flavor").unwrap_or("stochastic").parse()?;
    let dimension: usize = t
        .header("dimension")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| bad(0, "missing dimension header".into()))?;
    let nodes = t
        .rows
        .iter()
        .map(|(line, v)| {
            if v.len() != dimension + 3 {
                return Err(bad(*line, format!("expected {} columns, found {}", dimension + 3, v.len())));
            }
            Ok(BasisNode {
                position: v[1..=dimension].to_vec(),
                density: v[dimension + 1],
                weight: v[dimension + 2],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if nodes.is_empty() {
        return Err(bad(0, "basis file has no nodes".into()));
    }
    Ok(Basis { nodes, flavor, dimension })
}
