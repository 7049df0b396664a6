//! Two-sample Kolmogorov–Smirnov test and percentile bootstrap intervals.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, TAG_BOOTSTRAP};

/// Compensated summation (Neumaier). The result does not depend on how
/// large and small terms interleave, up to rounding of the compensation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated mean of a nonempty slice.
pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = NeumaierSum::default();
    xs.iter().for_each(|&x| s.add(x));
    Ok(s.total() / xs.len() as f64)
}

/// Population standard deviation (divisor `n`).
pub fn std_dev(xs: &[f64]) -> Result<f64> {
    let m = mean(xs)?;
    let mut s = NeumaierSum::default();
    xs.iter().for_each(|&x| s.add((x - m) * (x - m)));
    Ok(libm::sqrt(s.total() / xs.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
}

/// `sup_x |F_a(x) − F_b(x)|` over the pooled support. Ties are stepped
/// through together so that equal values never open a spurious gap.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(libm::fabs(i as f64 / n - j as f64 / m));
    }
    Ok(d)
}

/// Asymptotic two-sample critical value `c(α)·√((n+m)/(n·m))` with
/// `c(α) = √(−½·ln(α/2))`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if n == 0 || m == 0 {
        return Err(Error::EmptySample);
    }
    let c = libm::sqrt(-0.5 * libm::log(alpha / 2.0));
    let (n, m) = (n as f64, m as f64);
    Ok(c * libm::sqrt((n + m) / (n * m)))
}

/// Statistic, critical value and decision at level `alpha`.
pub fn ks_test(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    let critical_value = ks_critical_value(a.len().max(1), b.len().max(1), alpha)?;
    let statistic = ks_two_sample(a, b)?;
    Ok(KsResult {
        statistic,
        n: a.len(),
        m: b.len(),
        alpha,
        critical_value,
        reject: statistic > critical_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl BootstrapCi {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Minimum accepted number of bootstrap resamples.
pub const MIN_RESAMPLES: usize = 100;

/// Percentile bootstrap interval for the mean. The resampled means depend
/// only on `seed`, so intervals at different levels nest.
pub fn bootstrap_ci(sample: &[f64], n_resamples: usize, level: f64, seed: u64) -> Result<BootstrapCi> {
    let m = mean(sample)?;
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::InvalidArgument(alloc::format!(
            "need at least {MIN_RESAMPLES} resamples, got {n_resamples}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = sample.len();
    let mut means: Vec<f64> = if sample.iter().all(|&x| x == sample[0]) {
        alloc::vec![m; n_resamples]
    } else {
        let mut rng = stream_rng(derive_seed(seed, TAG_BOOTSTRAP, 0), 0);
        (0..n_resamples)
            .map(|_| {
                let mut s = NeumaierSum::default();
                for _ in 0..n {
                    s.add(sample[rng.random_range(0..n)]);
                }
                s.total() / n as f64
            })
            .collect()
    };
    means.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let lo = quantile_sorted(&means, tail).min(m);
    let hi = quantile_sorted(&means, 1.0 - tail).max(m);
    Ok(BootstrapCi {
        mean: m,
        lo,
        hi,
        level,
        n_resamples,
        seed,
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = libm::floor(pos) as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]).unwrap(), 1.0);
        assert!(matches!(ks_two_sample(&[], &a), Err(Error::EmptySample)));
    }

    #[test]
    fn statistic_matches_brute_force() {
        let a = normals(57, 1);
        let b: Vec<f64> = normals(41, 2).iter().map(|x| x + 0.3).collect();
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(ks_two_sample(&a, &b).unwrap(), brute, epsilon = 1e-15);
    }

    #[test]
    fn critical_values() {
        assert_abs_diff_eq!(ks_critical_value(10_000, 10_000, 0.05).unwrap(), 0.019206455826398416, epsilon = 1e-15);
        assert_abs_diff_eq!(ks_critical_value(100, 100, 0.05).unwrap(), 0.19206455826398416, epsilon = 1e-14);
        assert!(ks_critical_value(1 << 40, 1 << 40, 0.05).unwrap() < 1e-5);
        assert!(matches!(ks_critical_value(10, 10, 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(ks_critical_value(10, 10, 0.0), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn constant_sample_has_degenerate_interval() {
        let ci = bootstrap_ci(&[4.2; 50], 200, 0.95, 9).unwrap();
        assert_eq!((ci.lo, ci.mean, ci.hi), (4.2, 4.2, 4.2));
    }

    #[test]
    fn normal_width_matches_clt() {
        let s = normals(10_000, 5);
        let ci = bootstrap_ci(&s, 1000, 0.95, 3).unwrap();
        let expected = 2.0 * 1.959964 / 100.0;
        assert!(((ci.hi - ci.lo) - expected).abs() < 0.1 * expected, "{ci:?}");
        assert_eq!(ci, bootstrap_ci(&s, 1000, 0.95, 3).unwrap());
    }

    #[test]
    fn bootstrap_preconditions() {
        assert!(matches!(bootstrap_ci(&[], 100, 0.95, 0), Err(Error::EmptySample)));
        assert!(bootstrap_ci(&[1.0, 2.0], 99, 0.95, 0).is_err());
        assert!(bootstrap_ci(&[1.0, 2.0], 100, 1.0, 0).is_err());
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.total(), 2.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }
}
