use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridEnsemble;
use crate::linalg::{solve_square, SquareMatrix};

/// One step of the multi-asset binomial lattice under the transformed
/// measure.
///
/// Branch `k` (0-based, `2^n` of them) moves asset `i` up when bit
/// `n − 1 − i` of `k` is clear, so for two assets the rows run
/// `(up, up), (up, down), (down, up), (down, down)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeStepModel {
    n_assets: usize,
    dt: f64,
    log_steps: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
    branch_probs: Vec<f64>,
    branch_matrix: Vec<f64>,
}

impl LatticeStepModel {
    fn from_parts(dt: f64, log_steps: Vec<f64>, branch_probs: Vec<f64>) -> Self {
        let n = log_steps.len();
        let up: Vec<f64> = log_steps.iter().map(|&h| libm::exp(h)).collect();
        let down: Vec<f64> = log_steps.iter().map(|&h| libm::exp(-h)).collect();
        let branches = 1usize << n;
        let mut branch_matrix = Vec::with_capacity(branches * n);
        for k in 0..branches {
            for i in 0..n {
                branch_matrix.push(if moves_up(n, k, i) { up[i] } else { down[i] });
            }
        }
        Self {
            n_assets: n,
            dt,
            log_steps,
            up,
            down,
            branch_probs,
            branch_matrix,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn branches(&self) -> usize {
        1 << self.n_assets
    }

    /// `h_i = ln u_i`
    pub fn log_steps(&self) -> &[f64] {
        &self.log_steps
    }

    pub fn up(&self) -> &[f64] {
        &self.up
    }

    pub fn down(&self) -> &[f64] {
        &self.down
    }

    pub fn branch_probs(&self) -> &[f64] {
        &self.branch_probs
    }

    /// Movement factors of branch `k`.
    pub fn branch_row(&self, k: usize) -> &[f64] {
        &self.branch_matrix[k * self.n_assets..(k + 1) * self.n_assets]
    }

    pub fn moves_up(&self, k: usize, asset: usize) -> bool {
        moves_up(self.n_assets, k, asset)
    }

    /// Branches in which `asset` moves up.
    pub fn up_set(&self, asset: usize) -> Vec<usize> {
        (0..self.branches())
            .filter(|&k| self.moves_up(k, asset))
            .collect()
    }
}

#[inline]
pub(crate) fn moves_up(n: usize, k: usize, asset: usize) -> bool {
    (k >> (n - 1 - asset)) & 1 == 0
}

#[inline]
fn sign(n: usize, k: usize, asset: usize) -> f64 {
    if moves_up(n, k, asset) {
        1.0
    } else {
        -1.0
    }
}

/// Residuals of the moment-matching system, ordered as: for each asset the
/// mean equation then the variance equation, then one cross equation per
/// pair `i < j`, then the probability sum.
///
/// Mean: `h_i·(Σ_{k∈I_i} P_k − Σ_{k∉I_i} P_k) + σ_i²Δt/2`
/// Variance: `h_i²·ΣP_k − h_i²·(Σ_{I_i} − Σ_{∉I_i})² − σ_i²Δt`
/// Cross: `h_i h_j·(Σ_{I_ij} − Σ_{∉I_ij}) − ρ_ij σ_i σ_j Δt`
pub fn moment_residuals(model: &LatticeStepModel, grid: &GridEnsemble) -> Vec<f64> {
    residuals(
        &model.branch_probs,
        &model.log_steps,
        &grid.params().iter().map(|p| p.sigma()).collect::<Vec<_>>(),
        &pair_correlations(grid),
        model.dt,
    )
}

fn pair_correlations(grid: &GridEnsemble) -> Vec<f64> {
    let n = grid.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(grid.correlation().get(i, j));
        }
    }
    out
}

fn residuals(probs: &[f64], h: &[f64], sigma: &[f64], rho_pairs: &[f64], dt: f64) -> Vec<f64> {
    let n = h.len();
    let total: f64 = probs.iter().sum();
    let mut out = Vec::with_capacity(2 * n + rho_pairs.len() + 1);
    for i in 0..n {
        let m: f64 = probs
            .iter()
            .enumerate()
            .map(|(k, p)| sign(n, k, i) * p)
            .sum();
        out.push(h[i] * m + 0.5 * sigma[i] * sigma[i] * dt);
        out.push(h[i] * h[i] * total - h[i] * h[i] * m * m - sigma[i] * sigma[i] * dt);
    }
    let mut pair = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c: f64 = probs
                .iter()
                .enumerate()
                .map(|(k, p)| sign(n, k, i) * sign(n, k, j) * p)
                .sum();
            out.push(h[i] * h[j] * c - rho_pairs[pair] * sigma[i] * sigma[j] * dt);
            pair += 1;
        }
    }
    out.push(total - 1.0);
    out
}

/// Matches the per-step log-increment mean `−σ²Δt/2`, variance `σ²Δt`, and
/// covariance `ρσσΔt` of the driftless generation processes, with `u·d = 1`.
///
/// The mean and variance equations fix `h_i² = σ_i²Δt + (σ_i²Δt/2)²`
/// directly. One asset is then closed form. Two assets are solved by damped
/// Newton on the full residual system, started from the uncorrelated
/// solution. Three or more use the Walsh expansion
/// `P_k = 2⁻ⁿ(1 + Σ s_ki m_i + Σ_{i<j} s_ki s_kj c_ij)`, which satisfies every
/// moment equation and sets higher-order joint moments to zero.
pub fn calibrate_step_model(grid: &GridEnsemble, dt: f64) -> Result<LatticeStepModel> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "lattice step must be positive, got {dt}"
        )));
    }
    let sigma: Vec<f64> = grid.params().iter().map(|p| p.sigma()).collect();
    if let Some((i, &s)) = sigma.iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
        return Err(Error::DegenerateVolatility { index: i, sigma: s });
    }
    let rho = pair_correlations(grid);

    let (h, probs) = match grid.len() {
        1 => {
            let h = log_steps(&sigma, dt);
            let m = mean_direction(sigma[0], h[0], dt);
            (h, vec![0.5 * (1.0 + m), 0.5 * (1.0 - m)])
        }
        2 => newton_two_assets(&sigma, &rho, dt)?,
        _ => {
            let h = log_steps(&sigma, dt);
            let p = walsh_probs(&sigma, &h, &rho, dt);
            (h, p)
        }
    };

    if let Some((branch, &probability)) = probs
        .iter()
        .enumerate()
        .find(|(_, &p)| !(-1e-14..=1.0 + 1e-14).contains(&p))
    {
        return Err(Error::InfeasibleCalibration {
            branch,
            probability,
            suggested_dt: suggest_dt(&sigma, &rho, dt),
        });
    }
    let probs = probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    Ok(LatticeStepModel::from_parts(dt, h, probs))
}

fn log_steps(sigma: &[f64], dt: f64) -> Vec<f64> {
    sigma
        .iter()
        .map(|s| {
            let v = s * s * dt;
            libm::sqrt(v + 0.25 * v * v)
        })
        .collect()
}

/// `Σ_{I_i} P − Σ_{∉I_i} P` implied by the mean equation.
fn mean_direction(sigma: f64, h: f64, dt: f64) -> f64 {
    -0.5 * sigma * sigma * dt / h
}

fn walsh_probs(sigma: &[f64], h: &[f64], rho: &[f64], dt: f64) -> Vec<f64> {
    let n = sigma.len();
    let m: Vec<f64> = (0..n).map(|i| mean_direction(sigma[i], h[i], dt)).collect();
    let scale = 1.0 / (1u64 << n) as f64;
    (0..1usize << n)
        .map(|k| {
            let mut acc = 1.0;
            for i in 0..n {
                acc += sign(n, k, i) * m[i];
            }
            let mut pair = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let c = rho[pair] * sigma[i] * sigma[j] * dt / (h[i] * h[j]);
                    acc += sign(n, k, i) * sign(n, k, j) * c;
                    pair += 1;
                }
            }
            acc * scale
        })
        .collect()
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

/// Damped Newton on `[P_0..P_3, h_0, h_1]`.
fn newton_two_assets(sigma: &[f64], rho: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let h0 = log_steps(sigma, dt);
    let mut x: Vec<f64> = walsh_probs(sigma, &h0, &[0.0], dt);
    x.extend_from_slice(&h0);

    let f = |x: &[f64]| residuals(&x[..4], &x[4..], sigma, rho, dt);
    let norm = |r: &[f64]| libm::sqrt(r.iter().map(|v| v * v).sum::<f64>());

    let mut r = f(&x);
    let mut r_norm = norm(&r);
    for _ in 0..NEWTON_MAX_ITER {
        if r_norm <= NEWTON_TOL * 1e-3 {
            break;
        }
        let jac = jacobian_two_assets(&x);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let Some(step) = solve_square(&jac, &neg_r) else {
            return Err(Error::CalibrationDiverged {
                iterations: 0,
                residual: r_norm,
            });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
            let tr = f(&trial);
            let tn = norm(&tr);
            if tn < r_norm {
                x = trial;
                r = tr;
                r_norm = tn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r_norm > NEWTON_TOL {
        return Err(Error::CalibrationDiverged {
            iterations: NEWTON_MAX_ITER,
            residual: r_norm,
        });
    }
    let h = x.split_off(4);
    Ok((h, x))
}

fn jacobian_two_assets(x: &[f64]) -> SquareMatrix {
    const N: usize = 2;
    let p = &x[..4];
    let h = &x[4..];
    let total: f64 = p.iter().sum();
    let mut jac = SquareMatrix::zeros(6);
    let mut row = 0;
    for i in 0..N {
        let m: f64 = (0..4).map(|k| sign(N, k, i) * p[k]).sum();
        for k in 0..4 {
            jac.set(row, k, h[i] * sign(N, k, i));
            jac.set(row + 1, k, h[i] * h[i] * (1.0 - 2.0 * m * sign(N, k, i)));
        }
        jac.set(row, 4 + i, m);
        jac.set(row + 1, 4 + i, 2.0 * h[i] * (total - m * m));
        row += 2;
    }
    let c: f64 = (0..4).map(|k| sign(N, k, 0) * sign(N, k, 1) * p[k]).sum();
    for k in 0..4 {
        jac.set(row, k, h[0] * h[1] * sign(N, k, 0) * sign(N, k, 1));
        jac.set(row + 1, k, 1.0);
    }
    jac.set(row, 4, h[1] * c);
    jac.set(row, 5, h[0] * c);
    jac
}

fn suggest_dt(sigma: &[f64], rho: &[f64], dt: f64) -> f64 {
    let mut trial = dt;
    for _ in 0..60 {
        trial *= 0.5;
        let h = log_steps(sigma, trial);
        let probs = if sigma.len() == 1 {
            let m = mean_direction(sigma[0], h[0], trial);
            vec![0.5 * (1.0 + m), 0.5 * (1.0 - m)]
        } else {
            walsh_probs(sigma, &h, rho, trial)
        };
        if probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            return trial;
        }
    }
    trial
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MicrogridSpec;
    use crate::process::{CorrelationMatrix, GbmParams};
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn grid(sigmas: &[f64], rho: f64) -> GridEnsemble {
        let n = sigmas.len();
        let mgs = sigmas
            .iter()
            .map(|&s| MicrogridSpec::new("m", 20.0, GbmParams::new(0.0, s).unwrap()).unwrap())
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect())
            .collect();
        GridEnsemble::new(mgs, CorrelationMatrix::new(&rows).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn single_asset_closed_form() {
        let m = calibrate_step_model(&grid(&[0.03], 0.0), 1.0).unwrap();
        // h = √(σ²Δt + σ⁴Δt²/4), P_up = (1 − σ²Δt/(2h))/2
        assert_abs_diff_eq!(m.log_steps()[0], 0.030_003_374_810_177_604, epsilon = 1e-15);
        assert_abs_diff_eq!(m.branch_probs()[0], 0.492_500_843_607_643_9, epsilon = 1e-14);
        assert_abs_diff_eq!(m.up()[0] * m.down()[0], 1.0, epsilon = 1e-12);
        assert!(moment_residuals(&m, &grid(&[0.03], 0.0))
            .iter()
            .all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn two_asset_newton_matches_walsh_solution() {
        let g = grid(&[0.03, 0.04], 0.6);
        let m = calibrate_step_model(&g, 1.0).unwrap();
        assert_eq!(m.branch_probs().len(), 4);
        let res = moment_residuals(&m, &g);
        assert_eq!(res.len(), 6);
        assert!(res.iter().all(|r| r.abs() < 1e-12), "{res:?}");
        // independent route: closed-form Walsh expansion
        let h = log_steps(&[0.03, 0.04], 1.0);
        let w = walsh_probs(&[0.03, 0.04], &h, &[0.6], 1.0);
        for (a, b) in m.branch_probs().iter().zip(&w) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.branch_probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_layout() {
        let m = calibrate_step_model(&grid(&[0.03, 0.04], 0.6), 1.0).unwrap();
        assert_eq!(m.up_set(0), vec![0, 1]);
        assert_eq!(m.up_set(1), vec![0, 2]);
        assert_eq!(m.branch_row(1), &[m.up()[0], m.down()[1]]);
        assert_eq!(m.branch_row(2), &[m.down()[0], m.up()[1]]);
    }

    #[test]
    fn three_assets_use_walsh_expansion() {
        let g = grid(&[0.03, 0.04, 0.05], 0.3);
        let m = calibrate_step_model(&g, 1.0).unwrap();
        assert_eq!(m.branches(), 8);
        assert!(moment_residuals(&m, &g).iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn infeasible_step_suggests_smaller_dt() {
        let g = grid(&[0.5, 0.5], -0.95);
        match calibrate_step_model(&g, 4.0) {
            Err(Error::InfeasibleCalibration { suggested_dt, .. }) => {
                assert!(suggested_dt < 4.0);
                assert!(calibrate_step_model(&g, suggested_dt).is_ok());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        assert!(calibrate_step_model(&grid(&[0.03], 0.0), 0.0).is_err());
    }
}
