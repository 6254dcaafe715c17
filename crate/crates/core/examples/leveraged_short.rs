//! Profit distribution of a looped short for each calibrated pool, with the
//! degradation needed to beat honest staking.

use lstsim::monetize::{
    break_even, honest_benchmark, simulate, BreakEvenSearch, ShortScenario, POOL_CALIBRATIONS,
};

fn main() -> lstsim::Result<()> {
    let benchmark = honest_benchmark(100.0, 0.03, 60.0);
    println!("honest benchmark {benchmark:.3} ETH");
    println!("pool         exposure  mean    P(profit)  break-even degradation");
    for (pool, _, _) in POOL_CALIBRATIONS {
        let s = ShortScenario::preset(pool)?;
        let d = simulate(&s, 20_000, 1)?;
        let be = break_even(&s, benchmark, &BreakEvenSearch::default(), 1)?;
        println!(
            "{pool:<12} {:>8.1} {:>7.3} {:>9.3}  {be:.4}",
            s.exposure(),
            d.mean,
            d.prob_profit
        );
    }
    let s = ShortScenario::preset("coinbase")?;
    let d = simulate(&s, 1000, 2)?;
    println!("coinbase ECDF deciles:");
    for q in 1..10 {
        let k = d.ecdf.partition_point(|(_, f)| *f < q as f64 / 10.0);
        println!("  {:>3}%  {:.3} ETH", q * 10, d.ecdf[k].0);
    }
    Ok(())
}
