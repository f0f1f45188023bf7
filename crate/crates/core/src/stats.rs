//! Error analysis for Monte Carlo time series.

/// A value with a one-standard-deviation error bar.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }

    /// |a - b| / √(σ_a² + σ_b²); zero when both agree exactly.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let d = self.value - other.value;
        let s = self.error.hypot(other.error);
        if d == 0.0 {
            0.0
        } else if s == 0.0 {
            f64::INFINITY
        } else {
            d / s
        }
    }

    /// Agreement within `k` combined standard deviations.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        self.z_score(other).abs() <= k
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.p$} ± {:.p$}", self.value, self.error),
            None => write!(f, "{} ± {}", self.value, self.error),
        }
    }
}

/// Mean and autocorrelation-corrected error of a Monte Carlo observable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleStats {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// τ = Σ_{t≥1} ρ(t); zero for independent samples.
    pub autocorrelation_time: f64,
}

impl EnsembleStats {
    /// Statistics of independent samples.
    pub fn independent(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return EnsembleStats::default();
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        EnsembleStats {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_samples: n,
            autocorrelation_time: 0.0,
        }
    }

    /// Statistics of one or more Markov chains of the same observable.
    ///
    /// The integrated autocorrelation time uses the chain-averaged
    /// autocorrelation function with automatic windowing (window W is the
    /// smallest with W ≥ 6 τ_int(W)).
    pub fn from_chains(chains: &[Vec<f64>]) -> Self {
        let n: usize = chains.iter().map(Vec::len).sum();
        if n == 0 {
            return EnsembleStats::default();
        }
        let mean = chains.iter().flatten().sum::<f64>() / n as f64;
        let gamma = |t: usize| -> Option<f64> {
            let mut s = 0.0;
            let mut cnt = 0usize;
            for c in chains {
                if c.len() > t {
                    for i in 0..c.len() - t {
                        s += (c[i] - mean) * (c[i + t] - mean);
                    }
                    cnt += c.len() - t;
                }
            }
            (cnt > 0).then(|| s / cnt as f64)
        };
        let g0 = gamma(0).unwrap_or(0.0);
        if g0 <= 0.0 || n < 2 {
            return EnsembleStats {
                mean,
                std_error: 0.0,
                n_samples: n,
                autocorrelation_time: 0.0,
            };
        }
        let max_lag = chains.iter().map(Vec::len).max().unwrap_or(0) / 2;
        let mut tau_int = 0.5;
        for t in 1..max_lag {
            match gamma(t) {
                Some(g) => tau_int += g / g0,
                None => break,
            }
            if t as f64 >= 6.0 * tau_int {
                break;
            }
        }
        // Sample variance with n-1 normalization.
        let var = g0 * n as f64 / (n - 1) as f64;
        // A slow tail of small amplitude can hide under the fast decay that
        // stops the window, so batch means set a floor on the error.
        let window_err2 = var * 2.0 * tau_int.max(0.5) / n as f64;
        let err2 = window_err2.max(batch_means_error2(chains, mean));
        EnsembleStats {
            mean,
            std_error: err2.sqrt(),
            n_samples: n,
            autocorrelation_time: ((err2 * n as f64 / var - 1.0) / 2.0).max(0.0),
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.std_error)
    }
}

/// Total number of batches used for the batch-means error.
const BATCHES: usize = 32;

/// Squared standard error from the scatter of batch means, each batch a
/// contiguous piece of one chain. Zero when the chains are too short.
fn batch_means_error2(chains: &[Vec<f64>], mean: f64) -> f64 {
    let per_chain = (BATCHES / chains.len().max(1)).max(1);
    let mut means = Vec::new();
    for c in chains {
        let len = c.len() / per_chain;
        if len < 2 {
            return 0.0;
        }
        means.extend(c.chunks_exact(len).take(per_chain).map(|b| b.iter().sum::<f64>() / len as f64));
    }
    let k = means.len() as f64;
    if k < 2.0 {
        return 0.0;
    }
    means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k * (k - 1.0))
}

/// Block jackknife of a nonlinear function of `K` sample means.
///
/// Samples are split into `n_blocks` contiguous blocks; the estimator is
/// evaluated with each block left out in turn.
pub fn jackknife<const K: usize>(
    samples: &[[f64; K]],
    n_blocks: usize,
    f: impl Fn(&[f64; K]) -> f64,
) -> Estimate {
    let n = samples.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let mut total = [0.0; K];
    for s in samples {
        for k in 0..K {
            total[k] += s[k];
        }
    }
    let full = total.map(|t| t / n as f64);
    let value = f(&full);
    let b = n_blocks.clamp(2, n.max(2));
    if n < 2 {
        return Estimate::new(value, 0.0);
    }
    let mut leave_out = Vec::with_capacity(b);
    for blk in 0..b {
        let lo = blk * n / b;
        let hi = (blk + 1) * n / b;
        if hi == lo {
            continue;
        }
        let mut part = total;
        for s in &samples[lo..hi] {
            for k in 0..K {
                part[k] -= s[k];
            }
        }
        let m = (n - (hi - lo)) as f64;
        leave_out.push(f(&part.map(|p| p / m)));
    }
    let nb = leave_out.len() as f64;
    let mean = leave_out.iter().sum::<f64>() / nb;
    let var = (nb - 1.0) / nb * leave_out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Estimate::new(value, var.sqrt())
}
