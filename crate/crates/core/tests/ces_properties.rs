use approx::assert_abs_diff_eq;
use gridhedge_core::ces::{ces_allocation, ces_portfolio_value, hedge_backtest, terminal_payoff_ces};
use gridhedge_core::process::{simulate_paths, CorrelationMatrix, GbmParams, Measure};
use gridhedge_core::MicrogridSpec;
use proptest::prelude::*;

fn spec(d: f64, mu: f64, sigma: f64) -> MicrogridSpec {
    MicrogridSpec::new("m", d, GbmParams::new(mu, sigma).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pde_residual_vanishes(
        d in 5.0f64..50.0,
        moneyness in 0.7f64..1.4,
        sigma in 0.01f64..0.1,
        t in 0.01f64..4.0,
    ) {
        let s = spec(d, 0.0, sigma);
        let t_f = 5.0;
        let p = d * moneyness;
        let v = |p: f64, t: f64| ces_portfolio_value(p, &s, t, t_f).unwrap();
        let hp = 1e-3 * p;
        let ht = 1e-3;
        let v_t = (v(p, t + ht) - v(p, t - ht)) / (2.0 * ht);
        let v_pp = (v(p + hp, t) - 2.0 * v(p, t) + v(p - hp, t)) / (hp * hp);
        let residual = v_t + 0.5 * sigma * sigma * p * p * v_pp;
        prop_assert!(residual.abs() < 1e-6 * d, "residual {residual}");
    }

    #[test]
    fn value_and_battery_decrease_with_generation(
        d in 5.0f64..50.0,
        p in 1.0f64..80.0,
        bump in 1e-3f64..5.0,
        sigma in 0.01f64..0.2,
        t in 0.0f64..4.9,
    ) {
        let s = spec(d, 0.005, sigma);
        let lo = ces_allocation(p, &s, t, 5.0, 1.0).unwrap();
        let hi = ces_allocation(p + bump, &s, t, 5.0, 1.0).unwrap();
        prop_assert!(ces_portfolio_value(p + bump, &s, t, 5.0).unwrap()
            <= ces_portfolio_value(p, &s, t, 5.0).unwrap());
        prop_assert!(hi.b_hat <= lo.b_hat);
    }

    #[test]
    fn allocation_bounds(
        d in 0.5f64..100.0,
        p in 0.1f64..200.0,
        sigma in 0.005f64..0.5,
        t in 0.0f64..=5.0,
        p_b in 0.25f64..4.0,
    ) {
        let a = ces_allocation(p, &spec(d, 0.0, sigma), t, 5.0, p_b).unwrap();
        prop_assert!((-1.0..=0.0).contains(&a.a_hat));
        prop_assert!(a.b_hat * p_b >= 0.0 && a.b_hat * p_b <= d * (1.0 + 1e-15));
        prop_assert!(a.value_hat >= -1e-12);
    }

    #[test]
    fn terminal_consistency(d in 5.0f64..50.0, ratio in 0.5f64..1.5, sigma in 0.01f64..0.1) {
        let s = spec(d, 0.0, sigma);
        let p = d * ratio;
        let near = ces_portfolio_value(p, &s, 5.0 - 1e-8, 5.0).unwrap();
        prop_assert!((near - terminal_payoff_ces(p, d)).abs() < 1e-6 * d);
    }
}

#[test]
fn pde_residual_on_grid() {
    let s = spec(20.0, 0.0, 0.03);
    for i in 0..20 {
        let p = 15.0 + 0.5 * i as f64;
        for t in [0.5, 1.0, 2.5, 4.0] {
            let v = |p: f64, t: f64| ces_portfolio_value(p, &s, t, 5.0).unwrap();
            let (hp, ht) = (1e-3 * p, 1e-3);
            let v_t = (v(p, t + ht) - v(p, t - ht)) / (2.0 * ht);
            let v_pp = (v(p + hp, t) - 2.0 * v(p, t) + v(p - hp, t)) / (hp * hp);
            assert!((v_t + 0.5 * 0.03f64.powi(2) * p * p * v_pp).abs() < 1e-6 * 20.0);
        }
    }
}

fn hedge_rms(steps: usize, n_paths: usize) -> (f64, f64) {
    let s = spec(20.0, 0.006, 0.03);
    let ens = simulate_paths(
        &[s.gbm],
        &CorrelationMatrix::identity(1),
        &[20.0],
        5.0,
        steps,
        n_paths,
        17,
        Measure::Physical,
    )
    .unwrap();
    let (mut err, mut gap) = (0.0, 0.0);
    for k in 0..n_paths {
        let path: Vec<f64> = (0..=steps).map(|n| ens.value(k, n, 0)).collect();
        let h = hedge_backtest(&path, &s, 5.0, 1.0).unwrap();
        err += h.terminal_error * h.terminal_error;
        gap += h.financing_gap * h.financing_gap;
    }
    ((err / n_paths as f64).sqrt(), (gap / n_paths as f64).sqrt())
}

#[test]
fn hedge_error_and_financing_gap_shrink() {
    let (e10, g10) = hedge_rms(10, 2000);
    let (e100, g100) = hedge_rms(100, 2000);
    let (e1000, g1000) = hedge_rms(1000, 2000);
    assert!(e100 < e10 && e1000 < e100, "{e10} {e100} {e1000}");
    assert!(g100 < g10 && g1000 < g100, "{g10} {g100} {g1000}");
    // order one half: a tenfold finer grid cuts the error by about √10
    assert!(e1000 < e100 / 2.0);
}

#[test]
fn closed_form_matches_put_parity() {
    // zero-rate put minus call equals D − P
    let s = spec(20.0, 0.0, 0.05);
    for p in [12.0, 20.0, 31.0] {
        let put = ces_portfolio_value(p, &s, 1.0, 5.0).unwrap();
        let vol = 0.05 * 2.0;
        let d1 = ((p / 20.0f64).ln() + 0.5 * vol * vol) / vol;
        let phi = |x: f64| gridhedge_core::special::norm_cdf(x);
        let call = p * phi(d1) - 20.0 * phi(d1 - vol);
        assert_abs_diff_eq!(call - put, p - 20.0, epsilon = 1e-12);
    }
}
