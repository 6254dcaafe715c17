//! Builds synthetic price and APR files in which every 60-day return loads
//! on APR with a known coefficient, then recovers it with HAC inference.

use std::fmt::Write as _;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use lstsim::calibrate::{calibrate_pool, write_table, PoolFiles, DEFAULT_HORIZONS};

fn main() -> lstsim::Result<()> {
    let dir = std::env::temp_dir().join("lstsim_calibrate_example");
    std::fs::create_dir_all(&dir)?;
    let start = NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date");
    let n = 720;
    let apr: Vec<f64> = (0..n)
        .map(|t| 0.03 + 0.004 * (t as f64 / 45.0).sin() + 0.001 * (t as f64 * 1.7).cos())
        .collect();
    let beta = 0.3;
    let noise = Normal::new(0.0, 0.002).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut log_ratio = vec![0.0; n];
    for t in 60..n {
        log_ratio[t] = log_ratio[t - 60] + beta * apr[t - 60] + noise.sample(&mut rng);
    }
    let (mut lst, mut eth, mut a) = (
        "date,price_usd\n".to_string(),
        "date,price_usd\n".to_string(),
        "date,apr_fraction\n".to_string(),
    );
    for t in 0..n {
        let d = start + Days::new(t as u64);
        let eth_usd = 1800.0 + 300.0 * (t as f64 / 90.0).sin();
        writeln!(lst, "{d},{}", eth_usd * log_ratio[t].exp()).expect("string write");
        writeln!(eth, "{d},{eth_usd}").expect("string write");
        writeln!(a, "{d},{}", apr[t]).expect("string write");
    }
    let files = PoolFiles {
        label: "synthetic".into(),
        lst_prices: dir.join("lst.csv"),
        eth_prices: dir.join("eth.csv"),
        apr: dir.join("apr.csv"),
    };
    std::fs::write(&files.lst_prices, lst)?;
    std::fs::write(&files.eth_prices, eth)?;
    std::fs::write(&files.apr, a)?;

    let rows = DEFAULT_HORIZONS
        .iter()
        .map(|h| calibrate_pool(&files, *h, None))
        .collect::<lstsim::Result<Vec<_>>>()?;
    println!("planted 60-day coefficient {beta}");
    write_table(&rows, std::io::stdout())?;
    Ok(())
}
