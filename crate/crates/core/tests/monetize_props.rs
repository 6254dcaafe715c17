use proptest::prelude::*;

use lstsim::monetize::{
    break_even, honest_benchmark, price_shock, profit_at, short_exposure, simulate, BreakEvenSearch,
    ProfitDistribution, ShortScenario, SlippageModel,
};
use lstsim::Error;

fn scenario() -> impl Strategy<Value = ShortScenario> {
    (
        0.05f64..0.6,
        0.0f64..0.03,
        0.0f64..0.1,
        0.0f64..0.005,
        0.0f64..0.05,
        1u32..10,
        0.5f64..0.97,
    )
        .prop_map(|(beta, sigma, delta, slip, rate, rounds, ltv)| ShortScenario {
            degradation: delta,
            slippage: slip,
            borrow_rate: rate,
            rounds,
            ltv,
            ..ShortScenario::with_calibration(beta, sigma)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn profit_never_falls_below_collateral_loss(
        s in scenario(),
        dp in -0.5f64..0.5,
        u in (0.0f64..=1.0, 0.0f64..=1.0),
    ) {
        let slips = (s.slippage * u.0, s.slippage * u.1);
        prop_assert!(profit_at(&s, dp, slips) >= -s.collateral);
        if dp <= s.liq_threshold {
            prop_assert_eq!(profit_at(&s, dp, slips), -s.collateral);
        }
    }

    #[test]
    fn exposure_matches_round_by_round_sum(c in 1.0f64..1000.0, ltv in 0.01f64..0.99, m in 0u32..30) {
        let mut total = 0.0;
        let mut borrowed = c;
        for _ in 0..=m {
            borrowed *= ltv;
            total += borrowed;
        }
        let n = short_exposure(c, ltv, m).unwrap();
        prop_assert!((n - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn ecdf_is_a_step_distribution(profits in prop::collection::vec(-100.0f64..50.0, 1..200)) {
        let d = ProfitDistribution::from_profits(profits.clone(), 100.0);
        prop_assert!(d.ecdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        prop_assert!((d.ecdf.last().unwrap().1 - 1.0).abs() < 1e-12);
        for x in &profits {
            let direct = profits.iter().filter(|p| *p <= x).count() as f64 / profits.len() as f64;
            prop_assert!((d.ecdf_at(*x) - direct).abs() < 1e-12);
        }
        prop_assert_eq!(d.ecdf_at(-1e9), 0.0);
    }

    #[test]
    fn common_draws_order_scenarios(s in scenario(), seed in any::<u64>()) {
        let n = 400;
        let base = simulate(&s, n, seed).unwrap().mean;
        let more_degradation = ShortScenario { degradation: s.degradation + 0.01, ..s };
        let more_slippage = ShortScenario { slippage: s.slippage + 0.001, ..s };
        let dearer_borrow = ShortScenario { borrow_rate: s.borrow_rate + 0.01, ..s };
        prop_assert!(simulate(&more_degradation, n, seed).unwrap().mean >= base - 1e-9);
        prop_assert!(simulate(&more_slippage, n, seed).unwrap().mean <= base + 1e-9);
        prop_assert!(simulate(&dearer_borrow, n, seed).unwrap().mean <= base + 1e-9);
    }
}

#[test]
fn price_shock_has_lognormal_mean() {
    let s = ShortScenario {
        degradation: 0.04,
        ..ShortScenario::with_calibration(0.3, 0.02)
    };
    let n = 200_000;
    let normal = rand_distr::StandardNormal;
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mean = (0..n)
        .map(|_| price_shock(&s, normal.sample(&mut rng)))
        .sum::<f64>()
        / n as f64;
    let expected = 1.0 - (-s.beta_hat * s.degradation + s.sigma * s.sigma / 2.0).exp();
    let se = s.sigma / (n as f64).sqrt();
    assert!((mean - expected).abs() < 5.0 * se, "{mean} vs {expected}");
}

#[test]
fn zero_volatility_fixed_slippage_has_closed_form() {
    let s = ShortScenario {
        sigma: 0.0,
        slippage_model: SlippageModel::Fixed,
        ..ShortScenario::preset("etherfi").unwrap()
    };
    let dp = 1.0 - (-s.beta_hat * s.degradation).exp();
    let n = s.exposure();
    let expected = n * ((1.0 - s.slippage) - (1.0 - dp) * (1.0 + s.slippage)) - s.borrow_cost();
    let d = simulate(&s, 50, 1).unwrap();
    assert!((d.mean - expected).abs() < 1e-9);
    assert_eq!(d.ecdf.len(), 1);
    assert_eq!(d.prob_profit, if expected > 0.0 { 1.0 } else { 0.0 });
}

#[test]
fn wider_slippage_shifts_distribution_left() {
    let means: Vec<f64> = [0.0005, 0.001, 0.002]
        .iter()
        .map(|slip| {
            let s = ShortScenario {
                slippage: *slip,
                ..ShortScenario::preset("rocketpool").unwrap()
            };
            simulate(&s, 20_000, 3).unwrap().mean
        })
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    assert!(means[2].abs() < 0.25, "{means:?}");
}

#[test]
fn simulation_is_reproducible_and_single_trial_has_one_step() {
    let s = ShortScenario::preset("coinbase").unwrap();
    assert_eq!(simulate(&s, 1000, 8).unwrap(), simulate(&s, 1000, 8).unwrap());
    let one = simulate(&s, 1, 8).unwrap();
    assert_eq!(one.ecdf.len(), 1);
    assert_eq!(one.ecdf[0].1, 1.0);
    assert_eq!(one.se_mean, 0.0);
    assert!(matches!(simulate(&s, 0, 8), Err(Error::Usage(_))));
}

#[test]
fn unit_ltv_is_degenerate() {
    let s = ShortScenario {
        ltv: 1.0,
        ..ShortScenario::preset("coinbase").unwrap()
    };
    assert!(matches!(simulate(&s, 10, 1), Err(Error::Degenerate(_))));
    assert!(matches!(short_exposure(100.0, 1.0, 6), Err(Error::Degenerate(_))));
    assert!(matches!(ShortScenario::preset("lido"), Err(Error::Usage(_))));
}

#[test]
fn break_even_reports_missing_crossing() {
    let s = ShortScenario::preset("coinbase").unwrap();
    let search = BreakEvenSearch {
        trials: 2000,
        ..BreakEvenSearch::default()
    };
    let err = break_even(&s, 1e6, &search, 1).unwrap_err();
    assert!(matches!(err, Error::NoCrossing { .. }));
    let benchmark = honest_benchmark(100.0, 0.03, 60.0);
    let d = break_even(&s, benchmark, &search, 1).unwrap();
    assert!(d > 0.0 && d < 0.2);
    let at = ShortScenario { degradation: d + search.tolerance, ..s };
    assert!(simulate(&at, 2000, 1).unwrap().mean > benchmark);
}
