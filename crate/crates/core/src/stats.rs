//! Return statistics and the stylized-facts report.

use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::RunRecord;
use crate::error::{Error, Result};

/// Log returns sampled at a fixed horizon (in days).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    pub horizon: usize,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn from_prices(prices: &[f64], horizon: usize) -> Result<Self> {
        Ok(Self {
            horizon,
            values: log_returns(prices, horizon)?,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Non-overlapping log returns `ln p(kh + h) - ln p(kh)`.
pub fn log_returns(prices: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::Domain("return horizon must be positive".into()));
    }
    if prices.len() <= horizon {
        return Err(Error::InsufficientData(format!(
            "{} prices cannot form a {horizon}-day return",
            prices.len()
        )));
    }
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Domain(format!("log returns need positive prices, got {p}")));
    }
    Ok(prices
        .iter()
        .step_by(horizon)
        .zip(prices.iter().skip(horizon).step_by(horizon))
        .map(|(a, b)| (b / a).ln())
        .collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelation at lags `0..=max_lag` with the 95% white-noise band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acf {
    pub values: Vec<f64>,
    pub band: f64,
}

impl Acf {
    pub fn inside_band(&self, lag: usize) -> bool {
        self.values[lag].abs() <= self.band
    }
}

pub fn acf(series: &[f64], max_lag: usize) -> Result<Acf> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::InsufficientData(format!(
            "lag {max_lag} needs more than {n} observations"
        )));
    }
    let m = mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::Domain("autocorrelation of a constant series".into()));
    }
    let values = (0..=max_lag)
        .map(|k| dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect();
    Ok(Acf {
        values,
        band: 1.96 / (n as f64).sqrt(),
    })
}

/// Excess kurtosis from population moments, `m4 / m2^2 - 3`.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientData("kurtosis needs two observations".into()));
    }
    let m = mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d2 = (v - m) * (v - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = x.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if !(m2 > 0.0) {
        return Err(Error::Domain("kurtosis of a constant series".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

pub fn skewness(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientData("skewness needs two observations".into()));
    }
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(Error::Domain("skewness of a constant series".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

/// Sample standard deviation (n - 1 denominator) over each trailing window.
/// Output `k` covers `x[k..k + window]`.
pub fn rolling_volatility(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::Domain("rolling window needs at least two points".into()));
    }
    if x.len() < window {
        return Err(Error::InsufficientData(format!(
            "{} points are fewer than the window {window}",
            x.len()
        )));
    }
    // centre first so the running sums stay well conditioned
    let m = mean(x);
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in &x[..window] {
        s1 += v - m;
        s2 += (v - m) * (v - m);
    }
    let w = window as f64;
    let var = |s1: f64, s2: f64| ((s2 - s1 * s1 / w) / (w - 1.0)).max(0.0).sqrt();
    let mut out = Vec::with_capacity(x.len() - window + 1);
    out.push(var(s1, s2));
    for k in window..x.len() {
        let (add, drop) = (x[k] - m, x[k - window] - m);
        s1 += add - drop;
        s2 += add * add - drop * drop;
        out.push(var(s1, s2));
    }
    Ok(out)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("correlation needs two observations".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Domain("correlation with a constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean drawdown and recovery durations (days) over completed episodes.
/// A drawdown runs from a running peak to its trough, the recovery from the
/// trough back to the old peak.
pub fn drawdown_durations(prices: &[f64]) -> (f64, f64, usize) {
    let (mut down, mut up, mut episodes) = (0usize, 0usize, 0usize);
    let mut peak = 0;
    let mut trough = 0;
    for (i, &p) in prices.iter().enumerate() {
        if p >= prices[peak] {
            if trough > peak {
                down += trough - peak;
                up += i - trough;
                episodes += 1;
            }
            peak = i;
            trough = i;
        } else if p < prices[trough] {
            trough = i;
        }
    }
    if episodes == 0 {
        return (0.0, 0.0, 0);
    }
    (down as f64 / episodes as f64, up as f64 / episodes as f64, episodes)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub statistic: f64,
    pub threshold: Value,
    /// `None` for descriptive checks.
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactsOptions {
    /// Leading days dropped before any statistic.
    pub burn_in: usize,
    pub vol_window: usize,
    pub monthly: usize,
    pub yearly: usize,
    pub min_days: usize,
    /// Sampling step of the intermittency series in the report.
    pub intermittency_step: usize,
}

impl Default for FactsOptions {
    fn default() -> Self {
        Self {
            burn_in: 0,
            vol_window: 21,
            monthly: 21,
            yearly: 252,
            min_days: 5000,
            intermittency_step: 21,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactsReport {
    pub days: usize,
    pub checks: Vec<Check>,
}

impl FactsReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when every check with a verdict passes.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Inputs to the stylized-facts checks, decoupled from a run record so that
/// synthetic series can be tested.
#[derive(Debug, Clone, Copy)]
pub struct MarketSeries<'a> {
    /// `T + 1` prices including the initial price.
    pub prices: &'a [f64],
    /// `T` daily volumes.
    pub volumes: &'a [f64],
    /// `T` daily short interest in shares.
    pub short_interest: &'a [f64],
    pub supply: f64,
}

pub fn facts_report(record: &RunRecord, supply: f64, options: &FactsOptions) -> Result<FactsReport> {
    let prices = record.price_path();
    let volumes = record.volumes();
    let shorts: Vec<f64> = record.days.iter().map(|d| d.short_interest).collect();
    facts_from_series(
        &MarketSeries {
            prices: &prices,
            volumes: &volumes,
            short_interest: &shorts,
            supply,
        },
        options,
    )
}

pub fn facts_from_series(series: &MarketSeries<'_>, options: &FactsOptions) -> Result<FactsReport> {
    let b = options.burn_in;
    let days = series.prices.len().saturating_sub(1).saturating_sub(b);
    if days < options.min_days {
        return Err(Error::InsufficientData(format!(
            "{days} days after burn-in; the facts report needs at least {}",
            options.min_days
        )));
    }
    let prices = &series.prices[b..];
    let volumes = &series.volumes[b..];
    let shorts = &series.short_interest[b..];
    let r = log_returns(prices, 1)?;
    let n = r.len() as f64;
    let mut checks = Vec::new();

    let ra = acf(&r, 50)?;
    let inside = (6..=21).filter(|&k| ra.inside_band(k)).count();
    let frac = inside as f64 / 16.0;
    checks.push(Check {
        name: "no_autocorrelation",
        statistic: frac,
        threshold: json!(0.9),
        pass: Some(frac >= 0.9),
        detail: json!({ "band": ra.band, "lags_6_21": ra.values[6..=21].to_vec(), "lag_1": ra.values[1] }),
    });

    // significant positive excess kurtosis; its standard error under normality is sqrt(24 / n)
    let k_daily = excess_kurtosis(&r)?;
    let k_se = (24.0 / n).sqrt();
    checks.push(Check {
        name: "heavy_tails",
        statistic: k_daily,
        threshold: json!(1.96 * k_se),
        pass: Some(k_daily > 1.96 * k_se),
        detail: json!({ "standard_error": k_se }),
    });

    let (down, up, episodes) = drawdown_durations(prices);
    checks.push(Check {
        name: "gain_loss_asymmetry",
        statistic: skewness(&r)?,
        threshold: Value::Null,
        pass: None,
        detail: json!({ "mean_drawdown_days": down, "mean_recovery_days": up, "episodes": episodes }),
    });

    let k_month = excess_kurtosis(&log_returns(prices, options.monthly)?)?;
    let k_year = excess_kurtosis(&log_returns(prices, options.yearly)?)?;
    checks.push(Check {
        name: "aggregational_gaussianity",
        statistic: k_daily - k_year,
        threshold: json!(0.0),
        pass: Some(k_daily > k_month && k_month > k_year),
        detail: json!({ "daily": k_daily, "monthly": k_month, "yearly": k_year }),
    });

    let vol = rolling_volatility(&r, options.vol_window)?;
    let mean_vol = mean(&vol);
    let cv = (vol.iter().map(|v| (v - mean_vol).powi(2)).sum::<f64>() / vol.len() as f64).sqrt() / mean_vol;
    checks.push(Check {
        name: "intermittency",
        statistic: cv,
        threshold: Value::Null,
        pass: None,
        detail: json!({
            "step": options.intermittency_step,
            "rolling_volatility": vol.iter().step_by(options.intermittency_step.max(1)).collect::<Vec<_>>(),
        }),
    });

    let abs_r: Vec<f64> = r.iter().map(|x| x.abs()).collect();
    let aa = acf(&abs_r, 50)?;
    let positive = (1..=50).filter(|&k| aa.values[k] > 0.0).count();
    checks.push(Check {
        name: "volatility_clustering",
        statistic: positive as f64,
        threshold: json!(45),
        pass: Some(positive >= 45),
        detail: json!({ "lag_1": aa.values[1], "lag_50": aa.values[50] }),
    });

    // vol[k] covers r[k..k + w]: the window after return r[k - 1] starts at k
    let w = options.vol_window;
    let lead: Vec<f64> = r[..r.len() - w].to_vec();
    let future_vol: Vec<f64> = vol[1..].to_vec();
    let lev = pearson(&lead, &future_vol)?;
    checks.push(Check {
        name: "leverage_effect",
        statistic: lev,
        threshold: json!(0.0),
        pass: Some(lev < 0.0),
        detail: Value::Null,
    });

    // vol[k] ends at return r[k + w - 1], traded on the same day as volume[k + w - 1]
    let vv = pearson(&volumes[w - 1..r.len()], &vol)?;
    checks.push(Check {
        name: "volume_volatility",
        statistic: vv,
        threshold: json!(0.1),
        pass: Some(vv > 0.1),
        detail: Value::Null,
    });

    let short_ratio = mean(shorts) / series.supply;
    checks.push(Check {
        name: "short_ratio",
        statistic: short_ratio,
        threshold: json!([0.001, 0.05]),
        pass: Some((0.001..=0.05).contains(&short_ratio)),
        detail: Value::Null,
    });

    Ok(FactsReport { days, checks })
}
