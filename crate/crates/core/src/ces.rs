//! Conventional (per-microgrid) operation: every microgrid is hedged on its
//! own, so the operator's position for microgrid `i` is the zero-rate put
//! on `P_gi` struck at `D_ci`. Allocation and value are closed form.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::MicrogridSpec;
use crate::special::{norm_cdf, NormalCdf};

/// Renewable-unit weight `a_hat`, battery units `b_hat`, and the resulting
/// portfolio power `value_hat = a_hat·P_g + b_hat·P_b` for one microgrid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CesAllocation {
    pub a_hat: f64,
    pub b_hat: f64,
    pub value_hat: f64,
}

/// Shortfall the portfolio must cover at the horizon: `max(D − P, 0)`, with
/// `P = D` counted as surplus.
pub fn terminal_payoff_ces(p_g_tf: f64, d_c: f64) -> f64 {
    if p_g_tf >= d_c {
        0.0
    } else {
        d_c - p_g_tf
    }
}

/// Closed-form allocator parameterized by the normal CDF it evaluates.
#[derive(Debug, Clone, Copy)]
pub struct CesPricer {
    cdf: NormalCdf,
}

impl Default for CesPricer {
    fn default() -> Self {
        Self { cdf: norm_cdf }
    }
}

impl CesPricer {
    pub fn with_cdf(cdf: NormalCdf) -> Self {
        Self { cdf }
    }

    /// Allocation at time `t` for current generation `p_g`.
    ///
    /// For `t < t_f`:
    /// `a_hat = −Φ(d₋)`, `b_hat = (D/P_b)·Φ(d₊)` with
    /// `d± = (ln(D/P) ± σ²τ/2)/(σ√τ)`, `τ = t_f − t`.
    /// At `t = t_f` the terminal rule applies: a deficit holds `a_hat = −1`,
    /// `b_hat = D/P_b`; a surplus holds nothing.
    pub fn allocation(
        &self,
        p_g: f64,
        spec: &MicrogridSpec,
        t: f64,
        t_f: f64,
        p_b: f64,
    ) -> Result<CesAllocation> {
        if !(p_b > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "battery unit power must be positive, got {p_b}"
            )));
        }
        match self.arguments(p_g, spec, t, t_f)? {
            Some((d_plus, d_minus)) => {
                let a_hat = -(self.cdf)(d_minus);
                let b_hat = spec.demand / p_b * (self.cdf)(d_plus);
                Ok(CesAllocation {
                    a_hat,
                    b_hat,
                    value_hat: a_hat * p_g + b_hat * p_b,
                })
            }
            None => Ok(terminal_allocation(p_g, spec.demand, p_b)),
        }
    }

    /// Portfolio power `D·Φ(d₊) − P·Φ(d₋)` (zero-rate put, strike `D`, spot `P`).
    pub fn portfolio_value(
        &self,
        p_g: f64,
        spec: &MicrogridSpec,
        t: f64,
        t_f: f64,
    ) -> Result<f64> {
        match self.arguments(p_g, spec, t, t_f)? {
            Some((d_plus, d_minus)) => {
                Ok(spec.demand * (self.cdf)(d_plus) - p_g * (self.cdf)(d_minus))
            }
            None => Ok(terminal_payoff_ces(p_g, spec.demand)),
        }
    }

    /// `(d₊, d₋)`, or `None` when no diffusion time remains.
    fn arguments(
        &self,
        p_g: f64,
        spec: &MicrogridSpec,
        t: f64,
        t_f: f64,
    ) -> Result<Option<(f64, f64)>> {
        if !(p_g > 0.0) || !p_g.is_finite() {
            return Err(Error::NonPositiveGeneration(p_g));
        }
        if !(t >= 0.0) || !(t <= t_f) {
            return Err(Error::TimeOutOfRange { t, t_f });
        }
        let sigma = spec.gbm.sigma();
        let tau = t_f - t;
        let vol = sigma * libm::sqrt(tau);
        if vol == 0.0 {
            return Ok(None);
        }
        let log_ratio = libm::log(spec.demand / p_g);
        let half_var = 0.5 * sigma * sigma * tau;
        Ok(Some(((log_ratio + half_var) / vol, (log_ratio - half_var) / vol)))
    }
}

fn terminal_allocation(p_g: f64, demand: f64, p_b: f64) -> CesAllocation {
    if p_g >= demand {
        CesAllocation {
            a_hat: 0.0,
            b_hat: 0.0,
            value_hat: 0.0,
        }
    } else {
        CesAllocation {
            a_hat: -1.0,
            b_hat: demand / p_b,
            value_hat: demand - p_g,
        }
    }
}

pub fn ces_allocation(
    p_g: f64,
    spec: &MicrogridSpec,
    t: f64,
    t_f: f64,
    p_b: f64,
) -> Result<CesAllocation> {
    CesPricer::default().allocation(p_g, spec, t, t_f, p_b)
}

pub fn ces_portfolio_value(p_g: f64, spec: &MicrogridSpec, t: f64, t_f: f64) -> Result<f64> {
    CesPricer::default().portfolio_value(p_g, spec, t, t_f)
}

/// Total battery units over all microgrids, `Σ b_hat_i`.
pub fn ces_total_battery(
    states: &[f64],
    specs: &[MicrogridSpec],
    t: f64,
    t_f: f64,
    p_b: f64,
) -> Result<f64> {
    if states.len() != specs.len() {
        return Err(Error::LengthMismatch {
            expected: specs.len(),
            found: states.len(),
        });
    }
    states
        .iter()
        .zip(specs)
        .map(|(&p, s)| ces_allocation(p, s, t, t_f, p_b).map(|a| a.b_hat))
        .sum()
}

/// Per-microgrid allocations for a whole state vector.
pub fn ces_allocations(
    states: &[f64],
    specs: &[MicrogridSpec],
    t: f64,
    t_f: f64,
    p_b: f64,
) -> Result<Vec<CesAllocation>> {
    if states.len() != specs.len() {
        return Err(Error::LengthMismatch {
            expected: specs.len(),
            found: states.len(),
        });
    }
    states
        .iter()
        .zip(specs)
        .map(|(&p, s)| ces_allocation(p, s, t, t_f, p_b))
        .collect()
}

/// Outcome of hedging one microgrid along a sampled generation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeOutcome {
    /// Self-financed portfolio at the horizon minus the terminal shortfall, kW.
    pub terminal_error: f64,
    /// `Σ (Δâ·P + Δb̂·P_b)` when the closed-form allocation is adopted at
    /// every rebalance without financing, kW. Zero in continuous time.
    pub financing_gap: f64,
}

/// Rebalances along `path`, sampled at `t_n = n·t_f/(len−1)`.
///
/// The hedged portfolio starts at the closed-form value, takes `â` from the
/// closed form at every rebalance, and sets `b̂` so that rebalancing leaves
/// the portfolio power unchanged.
pub fn hedge_backtest(path: &[f64], spec: &MicrogridSpec, t_f: f64, p_b: f64) -> Result<HedgeOutcome> {
    if path.len() < 2 {
        return Err(Error::SeriesTooShort { len: path.len(), min: 2 });
    }
    let pricer = CesPricer::default();
    let steps = path.len() - 1;
    let dt = t_f / steps as f64;
    let first = pricer.allocation(path[0], spec, 0.0, t_f, p_b)?;
    let (mut a, mut b) = (first.a_hat, first.b_hat);
    let (mut a_raw, mut b_raw) = (first.a_hat, first.b_hat);
    let mut gap = 0.0;
    for (n, &p) in path.iter().enumerate().skip(1) {
        let t = if n == steps { t_f } else { n as f64 * dt };
        let held = a * p + b * p_b;
        let next = pricer.allocation(p, spec, t, t_f, p_b)?;
        a = next.a_hat;
        b = (held - a * p) / p_b;
        gap += (next.a_hat - a_raw) * p + (next.b_hat - b_raw) * p_b;
        a_raw = next.a_hat;
        b_raw = next.b_hat;
    }
    let terminal = path[steps];
    Ok(HedgeOutcome {
        terminal_error: a * terminal + b * p_b - terminal_payoff_ces(terminal, spec.demand),
        financing_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::GbmParams;
    use approx::assert_abs_diff_eq;

    fn spec(d: f64, sigma: f64) -> MicrogridSpec {
        MicrogridSpec::new("m", d, GbmParams::new(0.006, sigma).unwrap()).unwrap()
    }

    #[test]
    fn terminal_payoff_branches() {
        assert_eq!(terminal_payoff_ces(25.0, 20.0), 0.0);
        assert_eq!(terminal_payoff_ces(20.0, 20.0), 0.0);
        assert_eq!(terminal_payoff_ces(15.0, 25.0), 10.0);
    }

    #[test]
    fn deep_surplus_holds_nothing() {
        let a = ces_allocation(1e9, &spec(20.0, 0.03), 0.0, 5.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.a_hat, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.b_hat, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn near_terminal_deficit() {
        let a = ces_allocation(10.0, &spec(20.0, 0.03), 5.0 - 1e-6, 5.0, 2.0).unwrap();
        assert_abs_diff_eq!(a.a_hat, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.b_hat, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn at_the_money_reference() {
        // mpmath: Φ(±0.0335410196624968...)
        let a = ces_allocation(20.0, &spec(20.0, 0.03), 0.0, 5.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.a_hat, -0.486_621_577_630_068_24, epsilon = 1e-12);
        assert_abs_diff_eq!(a.b_hat, 10.267_568_447_398_635, epsilon = 1e-11);
        let v = ces_portfolio_value(20.0, &spec(20.0, 0.03), 0.0, 5.0).unwrap();
        assert_abs_diff_eq!(v, 0.535_136_894_797_270_5, epsilon = 1e-12);
        assert_abs_diff_eq!(a.value_hat, v, epsilon = 1e-12);
    }

    #[test]
    fn terminal_time_routes_to_payoff() {
        let s = spec(20.0, 0.03);
        let deficit = ces_allocation(15.0, &s, 5.0, 5.0, 1.0).unwrap();
        assert_eq!((deficit.a_hat, deficit.b_hat, deficit.value_hat), (-1.0, 20.0, 5.0));
        let boundary = ces_allocation(20.0, &s, 5.0, 5.0, 1.0).unwrap();
        assert_eq!((boundary.a_hat, boundary.b_hat), (0.0, 0.0));
        assert_eq!(ces_portfolio_value(15.0, &s, 5.0, 5.0).unwrap(), 5.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = spec(20.0, 0.03);
        assert!(matches!(
            ces_allocation(0.0, &s, 0.0, 5.0, 1.0),
            Err(Error::NonPositiveGeneration(_))
        ));
        assert!(matches!(
            ces_allocation(10.0, &s, 6.0, 5.0, 1.0),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(ces_allocation(10.0, &s, 0.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn total_battery_sums() {
        let specs = [spec(20.0, 0.03), spec(25.0, 0.04)];
        let one = ces_total_battery(&[20.0], &specs[..1], 0.0, 5.0, 1.0).unwrap();
        assert_abs_diff_eq!(one, 10.267_568_447_398_635, epsilon = 1e-11);
        let two = ces_total_battery(&[20.0, 20.0], &[spec(20.0, 0.03), spec(20.0, 0.03)], 0.0, 5.0, 1.0)
            .unwrap();
        assert_abs_diff_eq!(two, 2.0 * 10.267_568_447_398_635, epsilon = 1e-10);
        let mixed = ces_total_battery(&[20.0, 25.0], &specs, 0.0, 5.0, 1.0).unwrap();
        // 25·Φ(0.0447213595...) = 12.94588239662099856
        assert_abs_diff_eq!(mixed, 10.267_568_447_398_635 + 12.945_882_396_620_999, epsilon = 1e-10);
        assert!(ces_total_battery(&[20.0], &specs, 0.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn hedge_on_flat_path() {
        // no price moves: the self-financed portfolio keeps its initial value
        let s = spec(20.0, 0.03);
        let path = [25.0; 11];
        let h = hedge_backtest(&path, &s, 5.0, 1.0).unwrap();
        let v0 = ces_portfolio_value(25.0, &s, 0.0, 5.0).unwrap();
        assert_abs_diff_eq!(h.terminal_error, v0, epsilon = 1e-12);
        assert!(hedge_backtest(&[20.0], &s, 5.0, 1.0).is_err());
    }
}
