//! Self-checks against independent oracles and calibration experiments.

use gridhedge_core::ces::CesPricer;
use gridhedge_core::lattice::{calibrate_step_model, moment_residuals, recombining_values};
use gridhedge_core::process::{simulate_paths, CorrelationMatrix, GbmParams, Measure};
use gridhedge_core::special::{chi_square_sf, norm_cdf, NormalCdf};
use gridhedge_core::stats::{bootstrap_ci, ks_critical_value, ks_test};
use gridhedge_core::{ces_portfolio_value, GridEnsemble, MicrogridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Oracle,
    Stats,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Replace Φ in the closed-form allocator with a slightly wrong one.
    Phi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{status} {} {}", self.name, self.detail)
    }
}

/// Normal CDF from the Taylor series `½ + φ(x)·Σ x^(2k+1)/(1·3·…·(2k+1))`,
/// sharing no code with the erfc-based production path.
pub fn phi_series(x: f64) -> f64 {
    if x < -9.0 {
        return 0.0;
    }
    if x > 9.0 {
        return 1.0;
    }
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut k = 1.0;
    while term.abs() > 1e-300 && k < 2000.0 {
        term *= x2 / (2.0 * k + 1.0);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
        k += 1.0;
    }
    0.5 + sum * (-0.5 * x2 - 0.918_938_533_204_672_8).exp()
}

fn perturbed_cdf(x: f64) -> f64 {
    norm_cdf(x * (1.0 + 1e-6))
}

/// Point `i` of the Halton sequence in `base`.
fn halton(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

pub fn ces_oracle(cdf: NormalCdf, points: u64) -> Check {
    let pricer = CesPricer::with_cdf(cdf);
    let mut worst: f64 = 0.0;
    for i in 1..=points {
        let p = 1.0 + 99.0 * halton(i, 2);
        let d = 1.0 + 99.0 * halton(i, 3);
        let sigma = 0.005 + 0.5 * halton(i, 5);
        let tau = 0.01 + 24.0 * halton(i, 7);
        let spec = MicrogridSpec::new("x", d, GbmParams::new(0.0, sigma).expect("sigma > 0"))
            .expect("demand > 0");
        let got = pricer.portfolio_value(p, &spec, 0.0, tau).expect("valid point");
        let vol = sigma * tau.sqrt();
        let dp = ((d / p).ln() + 0.5 * vol * vol) / vol;
        let want = d * phi_series(dp) - p * phi_series(dp - vol);
        worst = worst.max((got - want).abs() / d);
    }
    Check {
        name: "ces_closed_form_vs_phi_oracle",
        pass: worst < 1e-10,
        detail: format!("points={points} max_err_over_D={worst:.3e} tol=1e-10"),
    }
}

pub fn lattice_convergence() -> Check {
    let spec = MicrogridSpec::new("mg1", 20.0, GbmParams::new(0.006, 0.03).expect("valid"))
        .expect("valid");
    let grid = GridEnsemble::new(vec![spec.clone()], CorrelationMatrix::identity(1), 1.0).expect("valid");
    let n = 200;
    let model = calibrate_step_model(&grid, 5.0 / n as f64).expect("feasible");
    let lattice = recombining_values(&[20.0], &model, n, &[20.0]).expect("valid").root_value;
    let exact = ces_portfolio_value(20.0, &spec, 0.0, 5.0).expect("valid");
    let rel = (lattice - exact).abs() / exact;
    Check {
        name: "single_asset_lattice_vs_closed_form",
        pass: rel < 0.01,
        detail: format!("N={n} lattice={lattice:.6} closed_form={exact:.6} rel_err={rel:.3e} tol=1e-2"),
    }
}

pub fn calibration_residuals() -> Check {
    let mut worst: f64 = 0.0;
    let mut prob_ok = true;
    for i in 0..=9 {
        for j in 0..=9 {
            for k in 0..=18 {
                let s1 = 0.01 + 0.01 * i as f64;
                let s2 = 0.01 + 0.01 * j as f64;
                let rho = -0.9 + 0.1 * k as f64;
                let specs = vec![
                    MicrogridSpec::new("a", 20.0, GbmParams::new(0.0, s1).expect("valid")).expect("valid"),
                    MicrogridSpec::new("b", 25.0, GbmParams::new(0.0, s2).expect("valid")).expect("valid"),
                ];
                for grid in [
                    GridEnsemble::new(specs[..1].to_vec(), CorrelationMatrix::identity(1), 1.0),
                    GridEnsemble::new(specs, CorrelationMatrix::pair(rho).expect("valid"), 1.0),
                ] {
                    let grid = grid.expect("valid");
                    match calibrate_step_model(&grid, 1.0) {
                        Ok(m) => {
                            prob_ok &= m.branch_probs().iter().all(|p| (0.0..=1.0).contains(p));
                            for r in moment_residuals(&m, &grid) {
                                worst = worst.max(r.abs());
                            }
                        }
                        Err(_) => worst = f64::INFINITY,
                    }
                }
            }
        }
    }
    Check {
        name: "calibration_moment_residuals",
        pass: worst < 1e-10 && prob_ok,
        detail: format!("max_residual={worst:.3e} probabilities_in_unit_interval={prob_ok} tol=1e-10"),
    }
}

pub fn chi_square_pvalue() -> Check {
    let p = chi_square_sf(18.86, 13);
    Check {
        name: "chi_square_p_value",
        pass: (p - 0.128).abs() <= 0.002,
        detail: format!("stat=18.86 dof=13 p={p:.6} expected=0.128 tol=0.002"),
    }
}

pub fn ks_critical() -> Check {
    let c = ks_critical_value(10_000, 10_000, 0.05).expect("valid");
    Check {
        name: "ks_critical_value",
        pass: (c - 0.0192).abs() <= 1e-4,
        detail: format!("n=m=10000 alpha=0.05 critical={c:.6} expected=0.0192 tol=1e-4"),
    }
}

/// Two-sample KS between independent draws of the same GBM marginal.
pub fn ks_rejection_rate(trials: usize, n: usize, seed: u64) -> (usize, usize) {
    let params = [GbmParams::new(0.006, 0.03).expect("valid")];
    let corr = CorrelationMatrix::identity(1);
    let mut rejects = 0;
    for t in 0..trials as u64 {
        let draw = |s: u64| {
            let e = simulate_paths(&params, &corr, &[20.0], 5.0, 1, n, s, Measure::Physical).expect("valid");
            (0..n).map(|k| e.terminal(k)[0]).collect::<Vec<f64>>()
        };
        let a = draw(seed.wrapping_add(2 * t));
        let b = draw(seed.wrapping_add(2 * t + 1));
        if ks_test(&a, &b, 0.05).expect("nonempty").reject {
            rejects += 1;
        }
    }
    (rejects, trials)
}

pub fn ks_size() -> Check {
    let (rejects, trials) = ks_rejection_rate(500, 10_000, 0x6b73);
    let rate = rejects as f64 / trials as f64;
    Check {
        name: "ks_same_distribution_rejection_rate",
        pass: (0.04..=0.06).contains(&rate),
        detail: format!("trials={trials} n=m=10000 rejects={rejects} rate={rate:.4} band=[0.04,0.06]"),
    }
}

fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    // log-increments of a unit-volatility driftless GBM over one hour are N(−½, 1)
    let p = [GbmParams::new(0.0, 1.0).expect("valid")];
    let e = simulate_paths(&p, &CorrelationMatrix::identity(1), &[1.0], 1.0, 1, n, seed, Measure::Transformed)
        .expect("valid");
    (0..n).map(|k| e.terminal(k)[0].ln() + 0.5).collect()
}

pub fn bootstrap_width() -> Check {
    let s = normal_sample(10_000, 0x626f);
    let ci = bootstrap_ci(&s, 2000, 0.95, 1).expect("valid");
    let width = ci.hi - ci.lo;
    let expected = 2.0 * 1.959_964 / 100.0;
    Check {
        name: "bootstrap_ci_width",
        pass: (width - expected).abs() <= 0.1 * expected,
        detail: format!("n=10000 width={width:.5} expected={expected:.5} tol=10%"),
    }
}

pub fn bootstrap_coverage() -> Check {
    let trials = 500;
    let mut hits = 0;
    for t in 0..trials {
        let s = normal_sample(200, 0x10_0000 + t);
        let ci = bootstrap_ci(&s, 500, 0.95, t).expect("valid");
        if ci.lo <= 0.0 && 0.0 <= ci.hi {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    Check {
        name: "bootstrap_ci_coverage",
        pass: (0.93..=0.97).contains(&rate),
        detail: format!("trials={trials} covered={hits} rate={rate:.3} band=[0.93,0.97]"),
    }
}

pub fn run(suite: Suite, fault: Option<Fault>) -> Vec<Check> {
    let cdf: NormalCdf = match fault {
        Some(Fault::Phi) => perturbed_cdf,
        None => norm_cdf,
    };
    let mut checks = Vec::new();
    if matches!(suite, Suite::Oracle | Suite::All) {
        checks.push(ces_oracle(cdf, 1000));
        checks.push(lattice_convergence());
        checks.push(calibration_residuals());
        checks.push(chi_square_pvalue());
    }
    if matches!(suite, Suite::Stats | Suite::All) {
        checks.push(ks_critical());
        checks.push(ks_size());
        checks.push(bootstrap_width());
        checks.push(bootstrap_coverage());
    }
    checks
}
