//! Correlated geometric Brownian motion: parameters, exact-discretization
//! path generation under the physical or the driftless transformed measure,
//! and maximum-likelihood fitting from an observed power series.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, SquareMatrix};
use crate::rng::stream_rng;
use crate::special::{chi_square_sf, norm_quantile};

/// Drift (per hour) and volatility (per √hour) of one generation process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmParams {
    mu: f64,
    sigma: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::DegenerateVolatility { index: 0, sigma });
        }
        if !mu.is_finite() {
            return Err(Error::InvalidArgument(format!("drift must be finite, got {mu}")));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Market-price-of-risk style ratio μ/σ used by the measure change.
    pub fn eta(&self) -> f64 {
        self.mu / self.sigma
    }
}

/// Validated correlation matrix of the driving Wiener processes, with its
/// Cholesky factor cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    rho: SquareMatrix,
    factor: SquareMatrix,
}

const CORR_TOL: f64 = 1e-12;

impl CorrelationMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let rho = SquareMatrix::from_rows(rows)?;
        let n = rho.dim();
        if n == 0 {
            return Err(Error::InvalidCorrelation("empty matrix".to_string()));
        }
        for i in 0..n {
            if (rho.get(i, i) - 1.0).abs() > CORR_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is {}, expected 1",
                    rho.get(i, i)
                )));
            }
            for j in 0..i {
                if (rho.get(i, j) - rho.get(j, i)).abs() > CORR_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        let factor = cholesky(&rho)?;
        Ok(Self { rho, factor })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rho: SquareMatrix::identity(n),
            factor: SquareMatrix::identity(n),
        }
    }

    /// Two-asset matrix with off-diagonal `rho`.
    pub fn pair(rho: f64) -> Result<Self> {
        Self::new(&[vec![1.0, rho], vec![rho, 1.0]])
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rho.get(i, j)
    }

    pub fn factor(&self) -> &SquareMatrix {
        &self.factor
    }
}

/// Lower-triangular `L` with `L·Lᵀ = ρ`.
pub fn cholesky_factor(corr: &CorrelationMatrix) -> SquareMatrix {
    corr.factor.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// dP = μP dt + σP dW
    Physical,
    /// dP = σP dŴ (drift removed by the measure change)
    Transformed,
}

/// Generates individual paths on demand. Path `k` is a pure function of
/// (inputs, seed, k), so any subset can be produced in any order.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    initial: Vec<f64>,
    factor: SquareMatrix,
    log_drift: Vec<f64>,
    log_vol: Vec<f64>,
    n_steps: usize,
    dt: f64,
    seed: u64,
    measure: Measure,
}

impl PathSimulator {
    pub fn new(
        params: &[GbmParams],
        corr: &CorrelationMatrix,
        initial: &[f64],
        horizon: f64,
        n_steps: usize,
        seed: u64,
        measure: Measure,
    ) -> Result<Self> {
        let n = params.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no processes given".to_string()));
        }
        if corr.dim() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: corr.dim(),
            });
        }
        if initial.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: initial.len(),
            });
        }
        if let Some((i, &v)) = initial.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositiveSample { index: i, value: v });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidHorizon(horizon));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".to_string()));
        }
        let dt = horizon / n_steps as f64;
        let log_drift = params
            .iter()
            .map(|p| {
                let mu = match measure {
                    Measure::Physical => p.mu,
                    Measure::Transformed => 0.0,
                };
                (mu - 0.5 * p.sigma * p.sigma) * dt
            })
            .collect();
        let log_vol = params.iter().map(|p| p.sigma * libm::sqrt(dt)).collect();
        Ok(Self {
            initial: initial.to_vec(),
            factor: corr.factor.clone(),
            log_drift,
            log_vol,
            n_steps,
            dt,
            seed,
            measure,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.initial.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    /// Writes path `index` into `out` as `(n_steps + 1) × n_assets`, row per step.
    pub fn fill_path(&self, index: u64, out: &mut [f64]) {
        let n = self.n_assets();
        debug_assert_eq!(out.len(), (self.n_steps + 1) * n);
        let mut rng = stream_rng(self.seed, index);
        let mut eps = vec![0.0; n];
        let mut log_p: Vec<f64> = self.initial.iter().map(|&p| libm::log(p)).collect();
        out[..n].copy_from_slice(&self.initial);
        for step in 1..=self.n_steps {
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(&mut rng);
            }
            let row = &mut out[step * n..(step + 1) * n];
            for i in 0..n {
                let mut z = 0.0;
                for k in 0..=i {
                    z += self.factor.get(i, k) * eps[k];
                }
                log_p[i] += self.log_drift[i] + self.log_vol[i] * z;
                row[i] = libm::exp(log_p[i]);
            }
        }
    }

    pub fn path(&self, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; (self.n_steps + 1) * self.n_assets()];
        self.fill_path(index, &mut out);
        out
    }
}

/// A batch of simulated paths, stored path-major then step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_assets: usize,
    pub dt: f64,
    pub measure: Measure,
    pub seed: u64,
    values: Vec<f64>,
}

impl PathEnsemble {
    /// Power of `asset` at `step` on `path`, in kW.
    #[inline]
    pub fn value(&self, path: usize, step: usize, asset: usize) -> f64 {
        self.values[(path * (self.n_steps + 1) + step) * self.n_assets + asset]
    }

    /// Generation vector at `step` on `path`.
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let start = (path * (self.n_steps + 1) + step) * self.n_assets;
        &self.values[start..start + self.n_assets]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.n_steps)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Simulates `n_paths` correlated GBM paths over `horizon` hours using the
/// exact log-space scheme. Path `k` uses ChaCha stream `k` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    params: &[GbmParams],
    corr: &CorrelationMatrix,
    initial: &[f64],
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    measure: Measure,
) -> Result<PathEnsemble> {
    let sim = PathSimulator::new(params, corr, initial, horizon, n_steps, seed, measure)?;
    let stride = (n_steps + 1) * sim.n_assets();
    let mut values = vec![0.0; stride * n_paths];
    for (k, chunk) in values.chunks_exact_mut(stride).enumerate() {
        sim.fill_path(k as u64, chunk);
    }
    Ok(PathEnsemble {
        n_paths,
        n_steps,
        n_assets: sim.n_assets(),
        dt: sim.dt,
        measure,
        seed,
        values,
    })
}

/// Result of a GBM maximum-likelihood fit. `sigma` may be zero for a flat
/// series, in which case `degenerate` is set and [`GbmFit::params`] fails.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmFit {
    pub mu: f64,
    pub sigma: f64,
    pub log_returns: Vec<f64>,
    pub dt: f64,
    pub degenerate: bool,
}

impl GbmFit {
    pub fn params(&self) -> Result<GbmParams> {
        if self.degenerate {
            return Err(Error::DegenerateVolatility {
                index: 0,
                sigma: self.sigma,
            });
        }
        GbmParams::new(self.mu, self.sigma)
    }
}

/// MLE of (μ, σ) from a uniformly sampled positive series.
///
/// With log-returns `x_k = ln(P_{k+1}/P_k)`: `σ̂² = Σ(x − x̄)²/(n·dt)` and
/// `μ̂ = x̄/dt + σ̂²/2`. The divisor is `n`, so σ̂² carries the usual
/// `(n−1)/n` small-sample bias.
pub fn estimate_gbm_mle(series: &[f64], dt: f64) -> Result<GbmFit> {
    if series.len() < 3 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: 3,
        });
    }
    if let Some((i, &v)) = series.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveSample { index: i, value: v });
    }
    let returns: Vec<f64> = series
        .windows(2)
        .map(|w| libm::log(w[1] / w[0]))
        .collect();
    fit_log_returns(returns, dt)
}

/// MLE from pre-computed log-returns (e.g. pooled over several daily windows).
pub fn fit_log_returns(log_returns: Vec<f64>, dt: f64) -> Result<GbmFit> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if log_returns.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: log_returns.len() + 1,
            min: 3,
        });
    }
    let n = log_returns.len() as f64;
    let mean = log_returns.iter().sum::<f64>() / n;
    let var = log_returns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sigma2 = var / dt;
    let sigma = libm::sqrt(sigma2);
    Ok(GbmFit {
        mu: mean / dt + 0.5 * sigma2,
        sigma,
        log_returns,
        dt,
        degenerate: sigma == 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness of fit of log-returns against the normal law
/// implied by `params` over `dt`, using `n_bins` equal-probability bins.
/// Two parameters are treated as estimated, so `dof = n_bins − 3`.
pub fn chi_square_gof(
    log_returns: &[f64],
    params: &GbmParams,
    dt: f64,
    n_bins: usize,
) -> Result<GofResult> {
    if n_bins < 4 {
        return Err(Error::TooFewBins(n_bins));
    }
    if log_returns.is_empty() {
        return Err(Error::EmptySample);
    }
    let mean = (params.mu - 0.5 * params.sigma * params.sigma) * dt;
    let sd = params.sigma * libm::sqrt(dt);
    let edges: Vec<f64> = (1..n_bins)
        .map(|k| mean + sd * norm_quantile(k as f64 / n_bins as f64))
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &x in log_returns {
        let bin = edges.partition_point(|&e| e <= x);
        counts[bin] += 1;
    }
    let expected = log_returns.len() as f64 / n_bins as f64;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let dof = n_bins - 3;
    Ok(GofResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}
