//! Offline calibration of the price response to pool performance.
//!
//! Prices are normalized against ETH, turned into forward log returns, and
//! regressed on the contemporaneous APR with Newey-West standard errors.
//! The residual standard deviation of that regression is the `σ_H` used by
//! [`crate::monetize`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZONS: [u32; 3] = [60, 90, 180];

/// A dated series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

pub type PriceSeries = Series;

impl Series {
    pub fn new(label: impl Into<String>, rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::usage(format!(
                    "dates must be strictly increasing ({} after {})",
                    w[1].0, w[0].0
                )));
            }
        }
        let (dates, values) = rows.into_iter().unzip();
        Ok(Series {
            label: label.into(),
            dates,
            values,
        })
    }

    /// A price series: as [`Series::new`] plus strictly positive values.
    pub fn prices(label: impl Into<String>, rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if let Some((d, v)) = rows.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::usage(format!("price on {d} must be positive, got {v}")));
        }
        Self::new(label, rows)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn index(&self) -> HashMap<NaiveDate, usize> {
        self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect()
    }
}

/// Which value column a CSV file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    PriceUsd,
    AprFraction,
}

impl Column {
    fn header(self) -> &'static str {
        match self {
            Column::PriceUsd => "price_usd",
            Column::AprFraction => "apr_fraction",
        }
    }
}

fn data_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a `date,<column>` CSV. Errors carry the file and line.
pub fn read_series(path: &Path, column: Column, label: &str) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, 0, e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| data_err(path, 1, e.to_string()))?
        .clone();
    let expect = ["date", column.header()];
    if headers.len() != 2
        || !headers
            .iter()
            .zip(expect)
            .all(|(h, e)| h.eq_ignore_ascii_case(e))
    {
        return Err(data_err(
            path,
            1,
            format!("expected header `date,{}`", column.header()),
        ));
    }
    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| data_err(path, line, format!("bad date `{}`: {e}", &rec[0])))?;
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| data_err(path, line, format!("bad number `{}`", &rec[1])))?;
        if !value.is_finite() {
            return Err(data_err(path, line, "value must be finite"));
        }
        if column == Column::PriceUsd && value <= 0.0 {
            return Err(data_err(path, line, "price must be positive"));
        }
        if let Some((prev, _)) = rows.last() {
            if date <= *prev {
                return Err(data_err(path, line, format!("date {date} is not after {prev}")));
            }
        }
        rows.push((date, value));
    }
    if rows.is_empty() {
        return Err(data_err(path, 1, "no data rows"));
    }
    Series::new(label, rows)
}

/// Inner join on dates, then `lst / eth` pointwise.
pub fn normalize_prices(lst: &PriceSeries, eth: &PriceSeries) -> Result<PriceSeries> {
    let eth_idx = eth.index();
    let rows: Vec<(NaiveDate, f64)> = lst
        .dates
        .iter()
        .zip(&lst.values)
        .filter_map(|(d, v)| eth_idx.get(d).map(|&j| (*d, v / eth.values[j])))
        .collect();
    if rows.is_empty() {
        return Err(Error::usage(format!(
            "`{}` and `{}` share no dates",
            lst.label, eth.label
        )));
    }
    Series::prices(lst.label.clone(), rows)
}

/// `r_t = ln p_{t+H} − ln p_t`, dated at `t`, for every `t` whose date
/// `H` calendar days later is present.
pub fn forward_log_returns(series: &PriceSeries, horizon: u32) -> Result<Series> {
    if horizon as usize >= series.len() {
        return Err(Error::usage(format!(
            "horizon {horizon} needs more than {} observations",
            series.len()
        )));
    }
    let idx = series.index();
    let rows: Vec<(NaiveDate, f64)> = series
        .dates
        .iter()
        .zip(&series.values)
        .filter_map(|(d, v)| {
            let later = d.checked_add_days(Days::new(horizon as u64))?;
            idx.get(&later)
                .map(|&j| (*d, series.values[j].ln() - v.ln()))
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::usage(format!(
            "no date in `{}` has a partner {horizon} days later",
            series.label
        )));
    }
    Series::new(series.label.clone(), rows)
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics("correlation undefined for a constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, with tied values sharing their mean rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::usage(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::usage(format!("need at least {min} observations")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::usage("observations must be finite"));
    }
    Ok(())
}

/// `(pearson, spearman)`; Spearman is Pearson on midranks.
pub fn correlations(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y, 3)?;
    let p = pearson_unchecked(x, y)?;
    let s = pearson_unchecked(&midranks(x), &midranks(y))?;
    Ok((p, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsHac {
    pub beta: f64,
    pub intercept: f64,
    pub hac_se: f64,
    pub p_value: f64,
    pub resid_sigma: f64,
    pub lag: usize,
    pub n_obs: usize,
}

/// Newey-West automatic lag `⌊4 (n/100)^{2/9}⌋`.
pub fn default_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Two-sided p-value of `z` under the standard normal.
pub fn normal_two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// OLS of `y` on `[1, x]` with a Bartlett-kernel HAC covariance.
pub fn ols_hac(x: &[f64], y: &[f64], lag: Option<usize>) -> Result<OlsHac> {
    check_pair(x, y, 3)?;
    let n = x.len();
    let nf = n as f64;
    let lag = lag.unwrap_or_else(|| default_lag(n)).min(n - 1);

    let sx: f64 = x.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = nf * sxx - sx * sx;
    let mean_x = sx / nf;
    let centered: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    if !(centered > 1e-12 * sxx.max(f64::MIN_POSITIVE)) || det <= 0.0 {
        return Err(Error::Statistics("singular design: regressor is constant".into()));
    }
    let beta = (nf * sxy - sx * sy) / det;
    let intercept = (sy - beta * sx) / nf;
    let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - beta * a).collect();

    // Score vectors g_t = u_t (1, x_t).
    let g: Vec<[f64; 2]> = x.iter().zip(&u).map(|(a, e)| [*e, a * e]).collect();
    let mut s = [[0.0f64; 2]; 2];
    for t in 0..n {
        for r in 0..2 {
            for c in 0..2 {
                s[r][c] += g[t][r] * g[t][c];
            }
        }
    }
    for j in 1..=lag {
        let w = 1.0 - j as f64 / (lag as f64 + 1.0);
        for t in j..n {
            for r in 0..2 {
                for c in 0..2 {
                    s[r][c] += w * (g[t][r] * g[t - j][c] + g[t - j][r] * g[t][c]);
                }
            }
        }
    }
    let inv = [[sxx / det, -sx / det], [-sx / det, nf / det]];
    // Row 1 of inv · S · inv.
    let a = [
        inv[1][0] * s[0][0] + inv[1][1] * s[1][0],
        inv[1][0] * s[0][1] + inv[1][1] * s[1][1],
    ];
    let var = a[0] * inv[0][1] + a[1] * inv[1][1];
    let hac_se = var.max(0.0).sqrt();
    let p_value = if hac_se > 0.0 {
        normal_two_sided_p(beta / hac_se)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    };
    let ssr: f64 = u.iter().map(|e| e * e).sum();
    Ok(OlsHac {
        beta,
        intercept,
        hac_se,
        p_value,
        resid_sigma: (ssr / (nf - 2.0)).sqrt(),
        lag,
        n_obs: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub pool: String,
    pub horizon_days: u32,
    pub pearson: f64,
    pub spearman: f64,
    pub beta: f64,
    pub intercept: f64,
    pub hac_se: f64,
    pub p_value: f64,
    pub resid_sigma: f64,
    pub lag: usize,
    pub n_obs: usize,
}

/// Regresses `H`-day forward returns of `lst/eth` on the APR observed on
/// the return's start date.
pub fn calibrate_series(
    lst: &PriceSeries,
    eth: &PriceSeries,
    apr: &Series,
    horizon: u32,
    lag: Option<usize>,
) -> Result<CalibrationResult> {
    let norm = normalize_prices(lst, eth)?;
    let ret = forward_log_returns(&norm, horizon)?;
    let apr_idx = apr.index();
    let (x, y): (Vec<f64>, Vec<f64>) = ret
        .dates
        .iter()
        .zip(&ret.values)
        .filter_map(|(d, r)| apr_idx.get(d).map(|&j| (apr.values[j], *r)))
        .unzip();
    if x.len() < 3 {
        return Err(Error::usage(format!(
            "only {} return dates have an APR observation",
            x.len()
        )));
    }
    let fit = ols_hac(&x, &y, lag)?;
    let (pearson, spearman) = correlations(&x, &y)?;
    Ok(CalibrationResult {
        pool: lst.label.clone(),
        horizon_days: horizon,
        pearson,
        spearman,
        beta: fit.beta,
        intercept: fit.intercept,
        hac_se: fit.hac_se,
        p_value: fit.p_value,
        resid_sigma: fit.resid_sigma,
        lag: fit.lag,
        n_obs: fit.n_obs,
    })
}

/// File inputs for one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFiles {
    pub label: String,
    pub lst_prices: PathBuf,
    pub eth_prices: PathBuf,
    pub apr: PathBuf,
}

fn with_context(e: Error, path: &Path) -> Error {
    match e {
        Error::Usage(msg) | Error::Statistics(msg) => data_err(path, 0, msg),
        other => other,
    }
}

pub fn calibrate_pool(files: &PoolFiles, horizon: u32, lag: Option<usize>) -> Result<CalibrationResult> {
    let lst = read_series(&files.lst_prices, Column::PriceUsd, &files.label)?;
    let eth = read_series(&files.eth_prices, Column::PriceUsd, "ETH")?;
    let apr = read_series(&files.apr, Column::AprFraction, &files.label)?;
    calibrate_series(&lst, &eth, &apr, horizon, lag).map_err(|e| with_context(e, &files.apr))
}

pub fn write_table<W: std::io::Write>(rows: &[CalibrationResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Days::new(k)
    }

    #[test]
    fn hand_normalization() {
        let lst = Series::prices("x", vec![(day(0), 2.0), (day(1), 3.0)]).unwrap();
        let eth = Series::prices("e", vec![(day(0), 4.0), (day(1), 6.0)]).unwrap();
        assert_eq!(normalize_prices(&lst, &eth).unwrap().values, vec![0.5, 0.5]);
    }

    #[test]
    fn disjoint_dates_error() {
        let lst = Series::prices("x", vec![(day(0), 2.0)]).unwrap();
        let eth = Series::prices("e", vec![(day(5), 4.0)]).unwrap();
        assert!(normalize_prices(&lst, &eth).is_err());
    }

    #[test]
    fn growth_returns() {
        let g = 0.01;
        let s = Series::prices("g", (0..20).map(|t| (day(t), (g * t as f64).exp())).collect()).unwrap();
        let r = forward_log_returns(&s, 5).unwrap();
        assert_eq!(r.len(), 15);
        assert!(r.values.iter().all(|v| (v - 0.05).abs() < 1e-12));
        assert_eq!(forward_log_returns(&s, 19).unwrap().len(), 1);
        assert!(forward_log_returns(&s, 20).is_err());
    }

    #[test]
    fn cubic_ranks() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        let (p, s) = correlations(&x, &y).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(p < 1.0);
    }

    #[test]
    fn perfect_fit() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let f = ols_hac(&x, &y, Some(1)).unwrap();
        assert!((f.beta - 2.0).abs() < 1e-12);
        assert!(f.hac_se < 1e-12);
    }

    #[test]
    fn constant_regressor_is_singular() {
        assert!(ols_hac(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], None).is_err());
    }

    #[test]
    fn lag_formula() {
        assert_eq!(default_lag(100), 4);
        assert_eq!(default_lag(1000), 6);
    }
}
