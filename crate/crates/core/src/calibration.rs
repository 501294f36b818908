//! Fund-flow panels and ordinary least squares with classical inference.
//!
//! A panel row describes one fund in one period: total net assets, gross
//! inflows and outflows. Net flows are regressed on size-weighted excess
//! returns measured over several trailing windows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::stats::{excess_kurtosis, skewness};
use crate::stochastic::derive_stream;

pub const PANEL_COLUMNS: [&str; 8] = [
    "fund_id",
    "period",
    "tna",
    "inflows",
    "outflows",
    "age_months",
    "style",
    "expense_ratio",
];

/// Net flow as a fraction of assets, `(I - O) / TNA`.
pub fn net_flow(inflows: f64, outflows: f64, tna: f64) -> Result<f64> {
    if !(tna > 0.0) {
        return Err(Error::Domain(format!("net flow needs positive TNA, got {tna}")));
    }
    Ok((inflows - outflows) / tna)
}

/// Growth of assets over the window net of the period's flow.
pub fn flow_adjusted_return(tna_t: f64, tna_tk: f64, flow: f64) -> Result<f64> {
    if !(tna_tk > 0.0) {
        return Err(Error::Domain(format!("flow-adjusted return needs positive lagged TNA, got {tna_tk}")));
    }
    Ok((tna_t - tna_tk) / tna_tk - flow)
}

/// Regressors (without intercept) and response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub names: Vec<String>,
    /// One entry per observation, each holding `names.len()` values.
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

impl Design {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Remove regressors that are identically zero, returning their names.
    pub fn drop_zero_columns(&mut self) -> Vec<String> {
        let keep: Vec<bool> = (0..self.names.len())
            .map(|j| self.rows.iter().any(|r| r[j] != 0.0))
            .collect();
        let dropped = self
            .names
            .iter()
            .zip(&keep)
            .filter(|(_, k)| !**k)
            .map(|(n, _)| n.clone())
            .collect();
        self.names = self.names.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| n.clone()).collect();
        for r in self.rows.iter_mut() {
            *r = r.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| *v).collect();
        }
        dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsResult {
    /// "const" followed by the regressor names.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub conf_low: Vec<f64>,
    pub conf_high: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub durbin_watson: f64,
    pub resid_skew: f64,
    pub resid_excess_kurtosis: f64,
    pub covariance_type: String,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ols result serializes")
    }
}

/// Names of columns that are (numerically) linear combinations of the
/// columns before them.
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let rest = v.norm();
        if !(norm > 0.0) || rest <= 1e-10 * norm {
            bad.push(names[j].clone());
        } else {
            basis.push(v / rest);
        }
    }
    bad
}

/// OLS with an intercept and classical standard errors.
pub fn ols_fit(design: &Design) -> Result<OlsResult> {
    let n = design.rows.len();
    let k = design.names.len() + 1;
    if design.response.len() != n {
        return Err(Error::Domain("response length differs from design rows".into()));
    }
    if let Some(r) = design.rows.iter().find(|r| r.len() != k - 1) {
        return Err(Error::Domain(format!("design row has {} values, expected {}", r.len(), k - 1)));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} observations for {k} coefficients")));
    }
    let mut names = vec!["const".to_string()];
    names.extend(design.names.iter().cloned());
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { design.rows[i][j - 1] });
    let y = DVector::from_column_slice(&design.response);

    let bad = collinear_columns(&x, &names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }

    // least squares through QR, which solves the normal equations without
    // squaring the condition number
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: names.clone() })?;
    let fitted = &x * &beta;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();

    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let y_mean = design.response.iter().sum::<f64>() / n as f64;
    let sst: f64 = design.response.iter().map(|v| (v - y_mean).powi(2)).sum();
    let df_resid = n - k;
    let df_model = k - 1;
    let sigma2 = ssr / df_resid as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient { columns: names.clone() })?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let t_dist = StudentsT::new(0.0, 1.0, df_resid as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let t_crit = t_dist.inverse_cdf(0.975);
    let mut std_errors = Vec::with_capacity(k);
    let mut t_values = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    let mut conf_low = Vec::with_capacity(k);
    let mut conf_high = Vec::with_capacity(k);
    for j in 0..k {
        let se = (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt();
        let t = beta[j] / se;
        let p = if t.is_nan() {
            f64::NAN
        } else {
            2.0 * (1.0 - t_dist.cdf(t.abs()))
        };
        std_errors.push(se);
        t_values.push(t);
        p_values.push(p);
        conf_low.push(beta[j] - t_crit * se);
        conf_high.push(beta[j] + t_crit * se);
    }

    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else if ssr == 0.0 { 1.0 } else { 0.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df_resid as f64;
    let (f_statistic, f_p_value) = if df_model == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let f = ((sst - ssr) / df_model as f64) / sigma2;
        let p = FisherSnedecor::new(df_model as f64, df_resid as f64)
            .map(|d| if f.is_finite() { 1.0 - d.cdf(f) } else if f > 0.0 { 0.0 } else { f64::NAN })
            .unwrap_or(f64::NAN);
        (f, p)
    };
    let nf = n as f64;
    let log_likelihood = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (ssr / nf).ln() + 1.0);
    let aic = -2.0 * log_likelihood + 2.0 * k as f64;
    let bic = -2.0 * log_likelihood + k as f64 * nf.ln();
    let durbin_watson = resid.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / ssr;

    Ok(OlsResult {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_values,
        p_values,
        conf_low,
        conf_high,
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value,
        log_likelihood,
        aic,
        bic,
        n_obs: n,
        df_resid,
        durbin_watson,
        resid_skew: skewness(&resid).unwrap_or(f64::NAN),
        resid_excess_kurtosis: excess_kurtosis(&resid).unwrap_or(f64::NAN),
        covariance_type: "nonrobust".into(),
        residuals: resid,
    })
}

/// Plain-text regression table.
pub fn format_table(res: &OlsResult, title: &str, dep: &str) -> String {
    let rule = "=".repeat(78);
    let thin = "-".repeat(78);
    let mut s = String::new();
    let _ = writeln!(s, "{:^78}", title);
    let _ = writeln!(s, "{rule}");
    let pair = |s: &mut String, a: &str, av: String, b: &str, bv: String| {
        let _ = writeln!(s, "{:<20}{:>18}   {:<20}{:>17}", a, av, b, bv);
    };
    pair(&mut s, "Dep. Variable:", dep.into(), "R-squared:", format!("{:.3}", res.r_squared));
    pair(&mut s, "Model:", "OLS".into(), "Adj. R-squared:", format!("{:.3}", res.adj_r_squared));
    pair(&mut s, "Method:", "Least Squares".into(), "F-statistic:", format!("{:.4}", res.f_statistic));
    pair(&mut s, "No. Observations:", res.n_obs.to_string(), "Prob (F-statistic):", format!("{:.3e}", res.f_p_value));
    pair(&mut s, "Df Residuals:", res.df_resid.to_string(), "Log-Likelihood:", format!("{:.2}", res.log_likelihood));
    pair(&mut s, "Df Model:", (res.names.len() - 1).to_string(), "AIC:", format!("{:.4e}", res.aic));
    pair(&mut s, "Covariance Type:", res.covariance_type.clone(), "BIC:", format!("{:.4e}", res.bic));
    let _ = writeln!(s, "{rule}");
    let _ = writeln!(
        s,
        "{:<16}{:>10}{:>11}{:>10}{:>9}{:>11}{:>11}",
        "", "coef", "std err", "t", "P>|t|", "[0.025", "0.975]"
    );
    let _ = writeln!(s, "{thin}");
    for i in 0..res.names.len() {
        let _ = writeln!(
            s,
            "{:<16}{:>10.4}{:>11.4}{:>10.3}{:>9.3}{:>11.4}{:>11.4}",
            res.names[i],
            res.coefficients[i],
            res.std_errors[i],
            res.t_values[i],
            res.p_values[i],
            res.conf_low[i],
            res.conf_high[i]
        );
    }
    let _ = writeln!(s, "{rule}");
    pair(&mut s, "Skew:", format!("{:.3}", res.resid_skew), "Durbin-Watson:", format!("{:.3}", res.durbin_watson));
    pair(&mut s, "Kurtosis (excess):", format!("{:.3}", res.resid_excess_kurtosis), "", String::new());
    let _ = writeln!(s, "{rule}");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub fund_id: String,
    pub period: i64,
    pub tna: f64,
    pub inflows: f64,
    pub outflows: f64,
    pub age_months: Option<f64>,
    pub style: Option<String>,
    pub expense_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FundPanel {
    pub rows: Vec<PanelRow>,
}

impl FundPanel {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let missing: Vec<&str> = PANEL_COLUMNS
            .iter()
            .copied()
            .filter(|c| !headers.iter().any(|h| h == *c))
            .collect();
        if !missing.is_empty() {
            return Err(Error::config("data", format!("missing columns: {}", missing.join(", "))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<PanelRow>().enumerate() {
            rows.push(rec.map_err(|e| Error::config(format!("data.row[{}]", i + 1), e.to_string()))?);
        }
        Ok(Self { rows })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_reader(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows grouped by fund and sorted by period.
    fn by_fund(&self) -> Result<BTreeMap<&str, Vec<&PanelRow>>> {
        let mut map: BTreeMap<&str, Vec<&PanelRow>> = BTreeMap::new();
        for r in &self.rows {
            map.entry(r.fund_id.as_str()).or_default().push(r);
        }
        for (id, rows) in map.iter_mut() {
            rows.sort_by_key(|r| r.period);
            if rows.windows(2).any(|w| w[1].period != w[0].period + 1) {
                return Err(Error::Domain(format!("fund {id} has non-contiguous periods")));
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Control {
    AgeMonths,
    LogTna,
    ExpenseRatio,
}

impl Control {
    fn name(self) -> &'static str {
        match self {
            Control::AgeMonths => "age_months",
            Control::LogTna => "log_tna",
            Control::ExpenseRatio => "expense_ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRegressionOptions {
    /// Trailing return windows in periods.
    pub lags: Vec<usize>,
    pub min_tna: f64,
    pub min_age_months: f64,
    pub controls: Vec<Control>,
}

impl Default for FlowRegressionOptions {
    fn default() -> Self {
        Self {
            lags: vec![1, 6, 12, 24, 36, 48, 60, 120],
            min_tna: 15e6,
            min_age_months: 36.0,
            controls: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCounts {
    pub total: usize,
    pub screened: usize,
    pub incomplete: usize,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRegression {
    pub design: Design,
    pub counts: RowCounts,
}

pub fn lag_name(k: usize) -> String {
    format!("excess_{k}")
}

/// Per-fund TNA and flow series on a common period grid. `None` where the
/// fund has no row or non-positive assets.
struct Grid {
    periods: Vec<i64>,
    tna: Vec<Vec<Option<f64>>>,
    flow: Vec<Vec<Option<f64>>>,
}

impl Grid {
    fn new(periods: Vec<i64>, n_funds: usize) -> Self {
        let t = periods.len();
        Self {
            periods,
            tna: vec![vec![None; t]; n_funds],
            flow: vec![vec![None; t]; n_funds],
        }
    }

    /// Flow-adjusted return of fund `i` over the `k` periods ending at `t`.
    fn window_return(&self, i: usize, t: usize, k: usize) -> Option<f64> {
        let start = t.checked_sub(k)?;
        let (a, b, f) = (self.tna[i][t]?, self.tna[i][start]?, self.flow[i][t]?);
        flow_adjusted_return(a, b, f).ok()
    }

    /// Excess return of every fund over the window ending at `t`; the
    /// benchmark weights funds by assets at the start of the window.
    fn excess(&self, t: usize, k: usize) -> Vec<Option<f64>> {
        let n = self.tna.len();
        let raw: Vec<Option<f64>> = (0..n).map(|i| self.window_return(i, t, k)).collect();
        let (mut num, mut den, mut count) = (0.0, 0.0, 0);
        for i in 0..n {
            if let Some(r) = raw[i] {
                count += 1;
                let w = self.tna[i][t - k].unwrap_or(0.0);
                num += w * r;
                den += w;
            }
        }
        if count == 1 {
            // a lone fund is its own benchmark
            return raw.iter().map(|r| r.map(|_| 0.0)).collect();
        }
        let bench = if den > 0.0 { num / den } else { 0.0 };
        raw.iter().map(|r| r.map(|r| r - bench)).collect()
    }
}

/// Response: net flow in period `t`. Regressors: excess flow-adjusted return
/// over each trailing window ending at `t - 1`, plus optional controls.
pub fn build_flow_regression(panel: &FundPanel, options: &FlowRegressionOptions) -> Result<FlowRegression> {
    if options.lags.is_empty() || options.lags.contains(&0) {
        return Err(Error::config("lags", "lags must be positive"));
    }
    let funds = panel.by_fund()?;
    let ids: Vec<&str> = funds.keys().copied().collect();
    let mut periods: Vec<i64> = panel.rows.iter().map(|r| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let (lo, hi) = match (periods.first(), periods.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InsufficientData("empty panel".into())),
    };
    let periods: Vec<i64> = (lo..=hi).collect();
    let mut grid = Grid::new(periods, ids.len());
    let mut row_at: Vec<Vec<Option<&PanelRow>>> = vec![vec![None; grid.periods.len()]; ids.len()];
    for (i, id) in ids.iter().enumerate() {
        for r in &funds[id] {
            let t = (r.period - lo) as usize;
            row_at[i][t] = Some(r);
            if r.tna > 0.0 {
                grid.tna[i][t] = Some(r.tna);
                grid.flow[i][t] = net_flow(r.inflows, r.outflows, r.tna).ok();
            }
        }
    }

    let n_t = grid.periods.len();
    let excess: Vec<Vec<Vec<Option<f64>>>> = options
        .lags
        .iter()
        .map(|&k| (0..n_t).map(|t| if t >= k { grid.excess(t, k) } else { vec![None; ids.len()] }).collect())
        .collect();

    let mut names: Vec<String> = options.lags.iter().map(|&k| lag_name(k)).collect();
    names.extend(options.controls.iter().map(|c| c.name().to_string()));
    let mut design = Design {
        names,
        ..Design::default()
    };
    let mut counts = RowCounts {
        total: panel.rows.len(),
        screened: 0,
        incomplete: 0,
        used: 0,
    };
    for t in 0..n_t {
        for i in 0..ids.len() {
            let Some(row) = row_at[i][t] else { continue };
            let age_ok = row.age_months.is_some_and(|a| a >= options.min_age_months) || options.min_age_months <= 0.0;
            if !(row.tna >= options.min_tna && row.tna > 0.0) || !age_ok {
                counts.screened += 1;
                continue;
            }
            let Some(y) = grid.flow[i][t] else {
                counts.incomplete += 1;
                continue;
            };
            let mut x = Vec::with_capacity(design.names.len());
            let mut complete = t >= 1;
            if complete {
                for lag in &excess {
                    match lag[t - 1][i] {
                        Some(v) => x.push(v),
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
            }
            if complete {
                for c in &options.controls {
                    let v = match c {
                        Control::AgeMonths => row.age_months,
                        Control::LogTna => Some(row.tna.ln()),
                        Control::ExpenseRatio => row.expense_ratio,
                    };
                    match v {
                        Some(v) => x.push(v),
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
            }
            if !complete {
                counts.incomplete += 1;
                continue;
            }
            design.rows.push(x);
            design.response.push(y);
            counts.used += 1;
        }
    }
    if counts.used == 0 {
        return Err(Error::InsufficientData("no panel rows survive screening and lag windows".into()));
    }
    Ok(FlowRegression { design, counts })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub counts: RowCounts,
    pub dropped_columns: Vec<String>,
    pub options: FlowRegressionOptions,
    pub result: OlsResult,
}

/// Build and fit the flow regression. Regressors that are identically zero
/// (a one-fund panel benchmarks against itself) are dropped and reported.
pub fn calibrate(panel: &FundPanel, options: &FlowRegressionOptions) -> Result<CalibrationReport> {
    let FlowRegression { mut design, counts } = build_flow_regression(panel, options)?;
    let dropped_columns = design.drop_zero_columns();
    let result = ols_fit(&design)?;
    Ok(CalibrationReport {
        counts,
        dropped_columns,
        options: options.clone(),
        result,
    })
}

/// Settings of the synthetic panel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub n_funds: usize,
    pub n_periods: usize,
    pub intercept: f64,
    /// Planted coefficient per lag window.
    pub coefficients: Vec<(usize, f64)>,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Panel whose flows follow the planted linear rule exactly (plus optional
/// noise), generated period by period so each flow only sees past returns.
pub fn synthetic_panel(settings: &SyntheticPanel) -> FundPanel {
    let n = settings.n_funds;
    let mut rng = derive_stream(settings.seed, "synthetic-panel");
    let mut grid = Grid::new((0..settings.n_periods as i64).collect(), n);
    let mut rows = Vec::with_capacity(n * settings.n_periods);
    let mut tna: Vec<f64> = (0..n).map(|_| 2e9 * (1.0 + rng.uniform())).collect();
    let skill: Vec<f64> = (0..n).map(|_| 0.004 * rng.normal()).collect();
    for t in 0..settings.n_periods {
        for i in 0..n {
            let mut f = settings.intercept;
            for &(k, c) in &settings.coefficients {
                if t >= 1 && t - 1 >= k {
                    if let Some(e) = grid.excess(t - 1, k)[i] {
                        f += c * e;
                    }
                }
            }
            if settings.noise_sd > 0.0 {
                f += settings.noise_sd * rng.normal();
            }
            let g = 0.006 + skill[i] + 0.04 * rng.normal();
            if t > 0 {
                // f is a fraction of end-of-period assets
                tna[i] = tna[i] * (1.0 + g) / (1.0 - f);
            }
            let net = f * tna[i];
            let inflows = net.max(0.0) + 0.01 * tna[i];
            let outflows = inflows - net;
            grid.tna[i][t] = Some(tna[i]);
            grid.flow[i][t] = net_flow(inflows, outflows, tna[i]).ok();
            rows.push(PanelRow {
                fund_id: format!("F{i:04}"),
                period: t as i64,
                tna: tna[i],
                inflows,
                outflows,
                age_months: Some(48.0 + t as f64),
                style: Some("equity".into()),
                expense_ratio: Some(0.01),
            });
        }
    }
    FundPanel { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design(names: &[&str], rows: Vec<Vec<f64>>, y: Vec<f64>) -> Design {
        Design {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows,
            response: y,
        }
    }

    #[test]
    fn flow_and_return_arithmetic() {
        assert_eq!(net_flow(5.0, 5.0, 100.0).unwrap(), 0.0);
        assert!((net_flow(10.0, 0.0, 100.0).unwrap() - 0.10).abs() < 1e-15);
        assert!((net_flow(0.0, 5.0, 200.0).unwrap() + 0.025).abs() < 1e-15);
        assert!(net_flow(1.0, 0.0, 0.0).is_err());
        assert!((flow_adjusted_return(110.0, 100.0, 0.05).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(flow_adjusted_return(100.0, 100.0, 0.0).unwrap(), 0.0);
        assert!((flow_adjusted_return(90.0, 100.0, -0.05).unwrap() + 0.05).abs() < 1e-15);
        assert!(flow_adjusted_return(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn perfect_line() {
        let d = design(&["x"], vec![vec![1.0], vec![2.0], vec![3.0]], vec![2.0, 4.0, 6.0]);
        let r = ols_fit(&d).unwrap();
        assert!(r.coefficients[0].abs() < 1e-12);
        assert!((r.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_named() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let d = design(&["x", "two_x"], rows, vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        match ols_fit(&d) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["two_x".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn noisy_slope_within_three_standard_errors() {
        let mut rng = derive_stream(3, "ols-mc");
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = xs.iter().map(|x| x + 0.5 * rng.normal()).collect();
        let d = design(&["x"], xs.iter().map(|x| vec![*x]).collect(), y);
        let r = ols_fit(&d).unwrap();
        assert!((r.coefficients[1] - 1.0).abs() < 3.0 * r.std_errors[1]);
        assert!(r.p_values[1] < 1e-10);
        assert!((0.0..=1.0).contains(&r.r_squared));
    }

    #[test]
    fn matches_hand_computed_inference() {
        // x = 0..4, y = (2, 1, 2, 5): slope = Sxy/Sxx = 5/5, intercept = 2.5 - 1.5
        let d = design(
            &["x"],
            (0..4).map(|i| vec![i as f64]).collect(),
            vec![2.0, 1.0, 2.0, 5.0],
        );
        let r = ols_fit(&d).unwrap();
        assert!((r.coefficients[1] - 1.0).abs() < 1e-12);
        assert!((r.coefficients[0] - 1.0).abs() < 1e-12);
        // residuals (1, -1, -1, 1): SSR = 4, sigma2 = 2, SST = 9
        assert!((r.std_errors[1] - (2.0f64 / 5.0).sqrt()).abs() < 1e-12);
        assert!((r.std_errors[0] - (2.0f64 * 14.0 / 20.0).sqrt()).abs() < 1e-12);
        assert!((r.r_squared - (1.0 - 4.0 / 9.0)).abs() < 1e-12);
        assert!((r.durbin_watson - 2.0).abs() < 1e-12);
        // two-sided p for t = sqrt(2.5) on 2 degrees of freedom
        let t: f64 = 2.5f64.sqrt();
        let p = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((r.p_values[1] - p).abs() < 1e-10);
    }

    #[test]
    fn single_fund_panel_gives_mean_flow() {
        let settings = SyntheticPanel {
            n_funds: 1,
            n_periods: 40,
            intercept: -0.01,
            coefficients: vec![],
            noise_sd: 0.002,
            seed: 1,
        };
        let panel = synthetic_panel(&settings);
        let opts = FlowRegressionOptions {
            lags: vec![1, 3],
            ..Default::default()
        };
        let reg = build_flow_regression(&panel, &opts).unwrap();
        assert!(reg.design.rows.iter().flatten().all(|v| v.abs() < 1e-15));
        let rep = calibrate(&panel, &opts).unwrap();
        assert_eq!(rep.dropped_columns, vec!["excess_1", "excess_3"]);
        let mean = reg.design.response.iter().sum::<f64>() / reg.design.response.len() as f64;
        assert!((rep.result.coefficients[0] - mean).abs() < 1e-14);
    }

    #[test]
    fn planted_coefficients_are_recovered() {
        let settings = SyntheticPanel {
            n_funds: 30,
            n_periods: 160,
            intercept: -0.02,
            coefficients: vec![(120, 0.005)],
            noise_sd: 0.0,
            seed: 7,
        };
        let panel = synthetic_panel(&settings);
        let opts = FlowRegressionOptions {
            lags: vec![120],
            ..Default::default()
        };
        let rep = calibrate(&panel, &opts).unwrap();
        let r = &rep.result;
        assert!(((r.coefficients[0] + 0.02) / 0.02).abs() < 1e-10, "{:?}", r.coefficients);
        assert!(((r.coefficients[1] - 0.005) / 0.005).abs() < 1e-10, "{:?}", r.coefficients);
        assert!((r.r_squared - 1.0).abs() < 1e-10);
        assert_eq!(rep.counts.used, 30 * (160 - 121));
        assert_eq!(rep.counts.total, rep.counts.used + rep.counts.screened + rep.counts.incomplete);
    }

    #[test]
    fn lag_longer_than_panel_is_empty() {
        let settings = SyntheticPanel {
            n_funds: 3,
            n_periods: 10,
            intercept: 0.0,
            coefficients: vec![],
            noise_sd: 0.0,
            seed: 0,
        };
        let opts = FlowRegressionOptions {
            lags: vec![20],
            ..Default::default()
        };
        assert!(matches!(
            build_flow_regression(&synthetic_panel(&settings), &opts),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn screening_counts_are_exact() {
        let mut panel = synthetic_panel(&SyntheticPanel {
            n_funds: 4,
            n_periods: 12,
            intercept: 0.0,
            coefficients: vec![],
            noise_sd: 0.001,
            seed: 2,
        });
        // make one fund too young and shrink another below the floor
        for r in panel.rows.iter_mut() {
            if r.fund_id == "F0000" {
                r.age_months = Some(10.0);
            }
            if r.fund_id == "F0001" && r.period >= 6 {
                r.tna = 1e6;
            }
        }
        let opts = FlowRegressionOptions {
            lags: vec![2],
            ..Default::default()
        };
        let reg = build_flow_regression(&panel, &opts).unwrap();
        // fund 0: 12 screened; fund 1: 6 screened, periods 0..=2 incomplete;
        // funds 2, 3: periods 0..=2 incomplete
        assert_eq!(reg.counts.screened, 18);
        assert_eq!(reg.counts.incomplete, 9);
        assert_eq!(reg.counts.used, 48 - 27);
        assert_eq!(reg.design.rows.len(), reg.counts.used);
    }

    #[test]
    fn csv_round_trip_and_missing_columns() {
        let panel = synthetic_panel(&SyntheticPanel {
            n_funds: 2,
            n_periods: 5,
            intercept: 0.0,
            coefficients: vec![],
            noise_sd: 0.0,
            seed: 0,
        });
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = FundPanel::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back, panel);

        let bad = "fund_id,period,tna,inflows\nA,0,1,0\n";
        let err = FundPanel::from_reader(bad.as_bytes()).unwrap_err();
        let msg = err.to_string();
        for c in ["outflows", "age_months", "style", "expense_ratio"] {
            assert!(msg.contains(c), "{msg}");
        }
    }

    #[test]
    fn table_lists_every_coefficient() {
        let d = design(&["x"], (0..6).map(|i| vec![i as f64]).collect(), vec![1.0, 3.0, 2.0, 5.0, 4.0, 6.0]);
        let t = format_table(&ols_fit(&d).unwrap(), "OLS Regression Results", "flow");
        assert!(t.contains("const") && t.contains("x") && t.contains("R-squared"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn noiseless_fits_are_exact(
            beta in prop::collection::vec(-5.0f64..5.0, 3),
            seed in 0u64..1000,
        ) {
            let mut rng = derive_stream(seed, "prop-ols");
            let n = 40;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal(), rng.uniform_range(-3.0, 3.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| beta[0] + beta[1] * r[0] + beta[2] * r[1]).collect();
            let r = ols_fit(&design(&["a", "b"], rows, y)).unwrap();
            for j in 0..3 {
                prop_assert!((r.coefficients[j] - beta[j]).abs() <= 1e-10 * beta[j].abs().max(1.0));
            }
            prop_assert!((r.r_squared - 1.0).abs() < 1e-10);
        }

        #[test]
        fn residuals_are_orthogonal(seed in 0u64..1000) {
            let mut rng = derive_stream(seed, "prop-orth");
            let n = 200;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal(), rng.normal() * 10.0]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 0.3 * r[0] - r[1] + rng.normal()).collect();
            let d = design(&["a", "b"], rows, y);
            let r = ols_fit(&d).unwrap();
            let e = &r.residuals;
            prop_assert!((e.iter().sum::<f64>() / n as f64).abs() <= 1e-10);
            for j in 0..2 {
                let dot: f64 = d.column(j).iter().zip(e).map(|(x, e)| x * e).sum();
                prop_assert!((dot / n as f64).abs() <= 1e-10);
            }
            prop_assert!((0.0..=1.0).contains(&r.r_squared));
        }
    }
}
