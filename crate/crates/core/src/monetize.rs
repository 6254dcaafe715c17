//! Leveraged-short economics: the looped position's profit under a degraded
//! pool, and the degradation at which it beats honest staking.
//!
//! Prices are normalized so the pre-attack LST price is 1 ETH and every
//! profit is in ETH. A positive `Δp` is a price drop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_YEAR: f64 = 365.0;

/// How realized per-side slippage relates to the configured bound `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlippageModel {
    /// Each side pays an independent uniform draw from `[0, s]`.
    #[default]
    UniformWithinBound,
    /// Each side pays exactly `s`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortScenario {
    /// Collateral `C_col` in ETH.
    pub collateral: f64,
    /// Loan-to-value `ρ`.
    pub ltv: f64,
    /// Re-deposit rounds `m`.
    pub rounds: u32,
    /// Return horizon `H` in days the calibration refers to.
    pub horizon_days: u32,
    /// Return-per-APR coefficient `β̂_H`.
    pub beta_hat: f64,
    /// Residual std of `H`-day log returns `σ_H`.
    pub sigma: f64,
    /// APR-equivalent degradation `δ^APR`.
    pub degradation: f64,
    /// Annualized borrow rate `r̄`.
    pub borrow_rate: f64,
    /// Holding period `T` in days.
    pub holding_days: f64,
    /// Per-side slippage bound `s`.
    pub slippage: f64,
    /// Liquidation threshold `Δp^liq` (negative: an adverse price rise).
    pub liq_threshold: f64,
    #[serde(default)]
    pub slippage_model: SlippageModel,
}

/// 60-day calibrations `(β̂, σ)` for the three pools with published residuals.
pub const POOL_CALIBRATIONS: [(&str, f64, f64); 3] = [
    ("coinbase", 0.3587, 0.0073),
    ("etherfi", 0.2564, 0.0052),
    ("rocketpool", 0.1389, 0.0076),
];

impl ShortScenario {
    /// Shared attack parameters with a pool's 60-day `(β̂, σ)`.
    pub fn with_calibration(beta_hat: f64, sigma: f64) -> Self {
        ShortScenario {
            collateral: 100.0,
            ltv: 0.93,
            rounds: 6,
            horizon_days: 60,
            beta_hat,
            sigma,
            degradation: 0.04,
            borrow_rate: 0.0217,
            holding_days: 60.0,
            slippage: 0.0005,
            liq_threshold: -0.0215,
            slippage_model: SlippageModel::UniformWithinBound,
        }
    }

    pub fn preset(pool: &str) -> Result<Self> {
        let key = pool.to_ascii_lowercase().replace(['.', '-', '_', ' '], "");
        POOL_CALIBRATIONS
            .iter()
            .find(|(name, _, _)| *name == key)
            .map(|(_, b, s)| Self::with_calibration(*b, *s))
            .ok_or_else(|| Error::usage(format!("no calibration preset for pool `{pool}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.collateral > 0.0 && self.collateral.is_finite()) {
            return Err(Error::param("collateral", "must be positive"));
        }
        if self.ltv == 1.0 {
            return Err(Error::Degenerate("ltv = 1 makes the exposure sum diverge".into()));
        }
        if !(self.ltv > 0.0 && self.ltv < 1.0) {
            return Err(Error::param("ltv", "must lie in (0, 1)"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        if !(self.slippage >= 0.0 && self.slippage < 1.0) {
            return Err(Error::param("slippage", "must lie in [0, 1)"));
        }
        if !(self.liq_threshold < 0.0) {
            return Err(Error::param("liq_threshold", "must be negative"));
        }
        if !(self.borrow_rate >= 0.0 && self.borrow_rate.is_finite()) {
            return Err(Error::param("borrow_rate", "must be non-negative"));
        }
        if !(self.holding_days >= 0.0 && self.holding_days.is_finite()) {
            return Err(Error::param("holding_days", "must be non-negative"));
        }
        if !self.beta_hat.is_finite() {
            return Err(Error::param("beta_hat", "must be finite"));
        }
        if !self.degradation.is_finite() {
            return Err(Error::param("degradation", "must be finite"));
        }
        Ok(())
    }

    pub fn exposure(&self) -> f64 {
        closed_form_exposure(self.collateral, self.ltv, self.rounds)
    }

    pub fn borrow_cost(&self) -> f64 {
        self.exposure() * self.borrow_rate * self.holding_days / DAYS_PER_YEAR
    }
}

fn closed_form_exposure(collateral: f64, ltv: f64, rounds: u32) -> f64 {
    ltv * collateral * (1.0 - ltv.powi(rounds as i32 + 1)) / (1.0 - ltv)
}

/// Notional short exposure `N = ρC(1 − ρ^{m+1})/(1 − ρ)`.
pub fn short_exposure(collateral: f64, ltv: f64, rounds: u32) -> Result<f64> {
    if ltv == 1.0 {
        return Err(Error::Degenerate("ltv = 1 makes the exposure sum diverge".into()));
    }
    if !(ltv > 0.0 && ltv < 1.0) {
        return Err(Error::param("ltv", "must lie in (0, 1)"));
    }
    if !(collateral > 0.0) {
        return Err(Error::param("collateral", "must be positive"));
    }
    Ok(closed_form_exposure(collateral, ltv, rounds))
}

/// `Δp = 1 − exp(−β̂ δ + σ ε)` for a standard normal draw `ε`.
pub fn price_shock(s: &ShortScenario, eps: f64) -> f64 {
    let z = -s.beta_hat * s.degradation + s.sigma * eps;
    -z.exp_m1()
}

pub fn sample_price_shock<R: Rng + ?Sized>(s: &ShortScenario, rng: &mut R) -> f64 {
    let eps: f64 = StandardNormal.sample(rng);
    price_shock(s, eps)
}

/// Realized `(sell, buy)` slippage fractions.
pub fn sample_slippage<R: Rng + ?Sized>(s: &ShortScenario, rng: &mut R) -> (f64, f64) {
    match s.slippage_model {
        SlippageModel::Fixed => (s.slippage, s.slippage),
        SlippageModel::UniformWithinBound => (
            s.slippage * rng.random::<f64>(),
            s.slippage * rng.random::<f64>(),
        ),
    }
}

/// Net profit for a given price move and realized slippage. Liquidation, or
/// any loss reaching the collateral, yields exactly `−C_col`.
pub fn profit_at(s: &ShortScenario, delta_p: f64, slips: (f64, f64)) -> f64 {
    if delta_p <= s.liq_threshold {
        return -s.collateral;
    }
    let n = s.exposure();
    let q = n;
    let sell = 1.0 - slips.0;
    let buy = (1.0 - delta_p) * (1.0 + slips.1);
    let pi = q * (sell - buy) - s.borrow_cost();
    pi.max(-s.collateral)
}

/// One trial: draws the shock and slippage, then settles.
pub fn trial_profit<R: Rng + ?Sized>(s: &ShortScenario, rng: &mut R) -> f64 {
    let dp = sample_price_shock(s, rng);
    let slips = sample_slippage(s, rng);
    profit_at(s, dp, slips)
}

fn trial_rng(root: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(k);
    rng
}

/// Per-trial random inputs, fixed so several scenarios can share them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDraw {
    pub eps: f64,
    pub u_sell: f64,
    pub u_buy: f64,
}

pub fn draws(n_trials: usize, seed: u64) -> Vec<TrialDraw> {
    (0..n_trials as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let eps: f64 = StandardNormal.sample(&mut rng);
            TrialDraw {
                eps,
                u_sell: rng.random(),
                u_buy: rng.random(),
            }
        })
        .collect()
}

fn settle(s: &ShortScenario, d: &TrialDraw) -> f64 {
    let slips = match s.slippage_model {
        SlippageModel::Fixed => (s.slippage, s.slippage),
        SlippageModel::UniformWithinBound => (s.slippage * d.u_sell, s.slippage * d.u_buy),
    };
    profit_at(s, price_shock(s, d.eps), slips)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitDistribution {
    pub trials: usize,
    pub mean: f64,
    pub se_mean: f64,
    pub prob_profit: f64,
    pub liquidation_rate: f64,
    /// Sorted `(profit, fraction of trials with profit ≤ x)` pairs, one per
    /// distinct profit value.
    pub ecdf: Vec<(f64, f64)>,
}

impl ProfitDistribution {
    pub fn from_profits(mut profits: Vec<f64>, collateral: f64) -> Self {
        let n = profits.len();
        let nf = n as f64;
        let mean = profits.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            profits.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        let prob_profit = profits.iter().filter(|p| **p > 0.0).count() as f64 / nf;
        let liquidation_rate = profits.iter().filter(|p| **p <= -collateral).count() as f64 / nf;
        profits.sort_by(|a, b| a.total_cmp(b));
        let mut ecdf: Vec<(f64, f64)> = Vec::new();
        for (i, p) in profits.iter().enumerate() {
            let frac = (i + 1) as f64 / nf;
            match ecdf.last_mut() {
                Some(last) if last.0 == *p => last.1 = frac,
                _ => ecdf.push((*p, frac)),
            }
        }
        ProfitDistribution {
            trials: n,
            mean,
            se_mean: (var / nf).sqrt(),
            prob_profit,
            liquidation_rate,
            ecdf,
        }
    }

    /// Fraction of trials with profit ≤ `x`.
    pub fn ecdf_at(&self, x: f64) -> f64 {
        match self.ecdf.partition_point(|(p, _)| *p <= x) {
            0 => 0.0,
            k => self.ecdf[k - 1].1,
        }
    }

    pub fn write_ecdf_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["profit_eth", "cumulative_fraction"])?;
        for (p, f) in &self.ecdf {
            out.write_record([p.to_string(), f.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `n_trials` seeded trials. Trial `k` draws from ChaCha stream `k`
/// keyed by `seed`.
pub fn simulate(s: &ShortScenario, n_trials: usize, seed: u64) -> Result<ProfitDistribution> {
    s.validate()?;
    if n_trials == 0 {
        return Err(Error::usage("simulation needs at least one trial"));
    }
    let profits: Vec<f64> = draws(n_trials, seed).iter().map(|d| settle(s, d)).collect();
    Ok(ProfitDistribution::from_profits(profits, s.collateral))
}

/// Honest staking income of the collateral over the holding period.
pub fn honest_benchmark(collateral: f64, apr: f64, days: f64) -> f64 {
    collateral * apr * days / DAYS_PER_YEAR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenSearch {
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    pub trials: usize,
}

impl Default for BreakEvenSearch {
    fn default() -> Self {
        BreakEvenSearch {
            lo: 0.0,
            hi: 0.2,
            tolerance: 1e-4,
            trials: 10_000,
        }
    }
}

/// Mean profit as a function of degradation on fixed draws.
pub fn mean_profit_curve<'a>(
    template: &'a ShortScenario,
    draws: &'a [TrialDraw],
) -> impl Fn(f64) -> f64 + 'a {
    move |delta| {
        let s = ShortScenario {
            degradation: delta,
            ..*template
        };
        draws.iter().map(|d| settle(&s, d)).sum::<f64>() / draws.len() as f64
    }
}

/// Smallest degradation whose expected profit exceeds `benchmark`, found by
/// bisection with common random numbers.
pub fn break_even(
    template: &ShortScenario,
    benchmark: f64,
    search: &BreakEvenSearch,
    seed: u64,
) -> Result<f64> {
    template.validate()?;
    if !(search.lo < search.hi) || !(search.tolerance > 0.0) || search.trials == 0 {
        return Err(Error::usage("break-even search needs lo < hi, tolerance > 0, trials > 0"));
    }
    let d = draws(search.trials, seed);
    let f = mean_profit_curve(template, &d);
    let (mut lo, mut hi) = (search.lo, search.hi);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo <= benchmark && f_hi > benchmark) {
        return Err(Error::NoCrossing {
            lo,
            hi,
            profit_lo: f_lo,
            profit_hi: f_hi,
            benchmark,
        });
    }
    let probes = 8;
    let mut prev = f_lo;
    for k in 1..=probes {
        let x = lo + (hi - lo) * k as f64 / probes as f64;
        let v = f(x);
        if v + 1e-9 < prev {
            log::warn!("expected profit is not monotone in degradation near {x:.4}");
        }
        prev = v;
    }
    while hi - lo > search.tolerance {
        let mid = 0.5 * (lo + hi);
        if f(mid) > benchmark {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exposure_reference_values() {
        assert!((short_exposure(100.0, 0.5, 0).unwrap() - 50.0).abs() < 1e-12);
        let n = short_exposure(100.0, 0.93, 6).unwrap();
        assert!((n - 529.17).abs() < 0.01, "{n}");
        assert!(short_exposure(100.0, 1e-9, 6).unwrap() < 1e-6);
        assert!(matches!(short_exposure(100.0, 1.0, 3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn borrow_cost_reference() {
        let s = ShortScenario::with_calibration(0.3587, 0.0073);
        assert!((s.borrow_cost() - 1.887).abs() < 1e-3, "{}", s.borrow_cost());
    }

    #[test]
    fn hand_shock_and_trade() {
        let mut s = ShortScenario::with_calibration(0.3587, 0.0);
        assert!((price_shock(&s, 0.0) - 0.014246).abs() < 1e-6);
        s.degradation = 0.0;
        assert_eq!(price_shock(&s, 0.0), 0.0);
        // N = 500 from m = 0 with ltv 0.5 and C = 1000.
        let t = ShortScenario {
            collateral: 1000.0,
            ltv: 0.5,
            rounds: 0,
            slippage: 0.0,
            borrow_rate: 0.0,
            ..s
        };
        assert!((profit_at(&t, 0.01, (0.0, 0.0)) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn liquidation_floor() {
        let s = ShortScenario::with_calibration(0.3587, 0.0073);
        assert_eq!(profit_at(&s, -0.03, (0.0, 0.0)), -100.0);
        assert_eq!(profit_at(&s, -0.0215, (0.0005, 0.0005)), -100.0);
    }

    #[test]
    fn single_trial_ecdf_has_one_step() {
        let s = ShortScenario::with_calibration(0.3587, 0.0073);
        let d = simulate(&s, 1, 3).unwrap();
        assert_eq!(d.ecdf.len(), 1);
        assert_eq!(d.ecdf[0].1, 1.0);
    }

    #[test]
    fn deterministic_without_noise() {
        let s = ShortScenario {
            sigma: 0.0,
            slippage: 0.0,
            borrow_rate: 0.0,
            ..ShortScenario::with_calibration(0.3587, 0.0)
        };
        let d = simulate(&s, 50, 1).unwrap();
        assert_eq!(d.ecdf.len(), 1);
        assert!((d.mean - profit_at(&s, price_shock(&s, 0.0), (0.0, 0.0))).abs() < 1e-9);
    }

    #[test]
    fn zero_sensitivity_has_no_crossing() {
        let s = ShortScenario::with_calibration(0.0, 0.0073);
        let err = break_even(&s, honest_benchmark(100.0, 0.03, 60.0), &BreakEvenSearch::default(), 1)
            .unwrap_err();
        assert!(matches!(err, Error::NoCrossing { .. }));
    }
}
