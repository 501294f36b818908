//! Simulation configuration and its strict JSON representation.
//!
//! Every key has a documented default; unknown keys are rejected. The
//! defaults describe the reference validation run: seed 0, equal initial
//! wealth shares, 1% annual interest and no external investment flows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::FlowModel;
use crate::error::{Error, Result};
use crate::market::ClearingParams;
use crate::strategies::{annual_growth, TRADING_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub population: PopulationConfig,
    pub processes: ProcessConfig,
    pub market: MarketConfig,
    pub flows: FlowConfig,
    pub solvency: SolvencyConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_nt: usize,
    pub n_vi: usize,
    pub n_tf: usize,
    /// Initial wealth shares of NT, VI and TF.
    pub initial_shares: [f64; 3],
    /// Per-year discount rate range for VI and NT valuations.
    pub discount_rate_range: [f64; 2],
    /// Trend horizon range in days, inclusive.
    pub horizon_range: [usize; 2],
    /// Fraction of initial wealth held in the asset.
    pub initial_stock_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub dividend: DividendConfig,
    pub ou: OuConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DividendConfig {
    pub delta0: f64,
    pub growth_annual: f64,
    pub sigma_daily: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub supply_q: f64,
    pub interest_annual: f64,
    pub leverage: f64,
    pub aggression: f64,
    pub clearing_tol: f64,
    pub clearing_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub enabled: bool,
    pub intercept_annual: f64,
    pub coef_10y: f64,
    pub period_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolvencyConfig {
    pub liquidation_rate: f64,
    pub split_factor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_max_days: usize,
    pub master_seed: u64,
    /// Record the fund panel every this many days; 0 disables it.
    pub panel_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            population: PopulationConfig::default(),
            processes: ProcessConfig::default(),
            market: MarketConfig::default(),
            flows: FlowConfig::default(),
            solvency: SolvencyConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_nt: 10,
            n_vi: 10,
            n_tf: 10,
            initial_shares: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            discount_rate_range: [0.015, 0.025],
            horizon_range: [5, 252],
            initial_stock_fraction: 0.5,
        }
    }
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            dividend: DividendConfig::default(),
            ou: OuConfig::default(),
        }
    }
}

impl Default for DividendConfig {
    fn default() -> Self {
        Self {
            delta0: 0.003465,
            growth_annual: 0.01,
            sigma_daily: 0.01,
            rho: 0.1,
        }
    }
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            theta: 0.01,
            sigma: 0.03,
            mu: 1.0,
        }
    }
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            supply_q: 1000.0,
            interest_annual: 0.01,
            leverage: 1.0,
            aggression: 0.2,
            clearing_tol: 1e-8,
            clearing_max_iter: 200,
        }
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        let m = FlowModel::default();
        Self {
            enabled: false,
            intercept_annual: m.intercept,
            coef_10y: m.coef_10y,
            period_days: m.period_days,
        }
    }
}

impl Default for SolvencyConfig {
    fn default() -> Self {
        Self {
            liquidation_rate: 0.05,
            split_factor: 2,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_max_days: 50_000,
            master_seed: 0,
            panel_stride: 1,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Per-day log growth of the dividend.
    pub fn dividend_growth_daily(&self) -> f64 {
        (1.0 + self.processes.dividend.growth_annual).ln() / TRADING_DAYS
    }

    pub fn daily_interest(&self) -> f64 {
        self.market.interest_annual / TRADING_DAYS
    }

    pub fn clearing_params(&self) -> ClearingParams {
        ClearingParams {
            tolerance: self.market.clearing_tol,
            max_iterations: self.market.clearing_max_iter,
        }
    }

    pub fn flow_model(&self) -> FlowModel {
        FlowModel {
            intercept: self.flows.intercept_annual,
            coef_10y: self.flows.coef_10y,
            period_days: self.flows.period_days,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.master_seed = seed;
        self
    }

    pub fn with_days(mut self, days: usize) -> Self {
        self.run.t_max_days = days;
        self
    }

    pub fn with_shares(mut self, shares: [f64; 3]) -> Self {
        self.population.initial_shares = shares;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, path: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::config(path, msg))
            }
        }
        let pop = &self.population;
        validate_simplex(pop.initial_shares, "population.initial_shares")?;
        let counts = [pop.n_nt, pop.n_vi, pop.n_tf];
        for (i, name) in ["n_nt", "n_vi", "n_tf"].iter().enumerate() {
            check(
                pop.initial_shares[i] == 0.0 || counts[i] > 0,
                &format!("population.{name}"),
                "a style with positive initial wealth needs at least one fund",
            )?;
        }
        let [k_lo, k_hi] = pop.discount_rate_range;
        let g = annual_growth(self.dividend_growth_daily());
        check(
            k_lo <= k_hi && k_lo > g,
            "population.discount_rate_range",
            "range must be ordered and exceed annual dividend growth",
        )?;
        let [h_lo, h_hi] = pop.horizon_range;
        check(h_lo >= 2 && h_lo <= h_hi, "population.horizon_range", "horizons must be ordered and at least 2")?;
        check(
            pop.initial_stock_fraction > 0.0 && pop.initial_stock_fraction < 1.0,
            "population.initial_stock_fraction",
            "must lie in (0, 1)",
        )?;

        let d = &self.processes.dividend;
        check(d.delta0 > 0.0, "processes.dividend.delta0", "must be positive")?;
        check(d.growth_annual > -1.0, "processes.dividend.growth_annual", "must exceed -1")?;
        check(d.sigma_daily >= 0.0, "processes.dividend.sigma_daily", "must be non-negative")?;
        check((0.0..1.0).contains(&d.rho), "processes.dividend.rho", "must lie in [0, 1)")?;
        let ou = &self.processes.ou;
        check(ou.theta > 0.0, "processes.ou.theta", "must be positive")?;
        check(ou.sigma >= 0.0, "processes.ou.sigma", "must be non-negative")?;
        check(ou.mu > 0.0, "processes.ou.mu", "must be positive")?;

        let m = &self.market;
        check(m.supply_q > 0.0, "market.supply_q", "must be positive")?;
        check(m.interest_annual > -TRADING_DAYS, "market.interest_annual", "out of range")?;
        check(m.leverage >= 1.0, "market.leverage", "must be at least 1")?;
        check(m.aggression > 0.0, "market.aggression", "must be positive")?;
        check(m.clearing_tol > 0.0, "market.clearing_tol", "must be positive")?;
        check(m.clearing_max_iter >= 1, "market.clearing_max_iter", "must be at least 1")?;

        check(self.flows.period_days >= 1, "flows.period_days", "must be at least 1")?;
        let s = &self.solvency;
        check(
            s.liquidation_rate > 0.0 && s.liquidation_rate <= 1.0,
            "solvency.liquidation_rate",
            "must lie in (0, 1]",
        )?;
        check(s.split_factor >= 2, "solvency.split_factor", "must be at least 2")?;
        Ok(())
    }
}

pub fn validate_simplex(shares: [f64; 3], path: &str) -> Result<()> {
    if shares.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::config(path, "wealth shares must be non-negative"));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::config(path, format!("wealth shares sum to {sum}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(SimConfig::from_json("{}").unwrap(), SimConfig::default());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = SimConfig::from_json(r#"{"run": {"t_max_days": 10}, "market": {"leverage": 2.0}}"#).unwrap();
        assert_eq!(c.run.t_max_days, 10);
        assert_eq!(c.market.leverage, 2.0);
        assert_eq!(c.market.supply_q, 1000.0);
    }

    #[test]
    fn unknown_key_reports_path() {
        let err = SimConfig::from_json(r#"{"market": {"levrage": 2.0}}"#).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(path.starts_with("market"), "{path}");
                assert!(message.contains("levrage"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_simplex_rejected() {
        let err = SimConfig::from_json(r#"{"population": {"initial_shares": [0.5, 0.5, 0.5]}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "population.initial_shares"));
        assert!(validate_simplex([1.0, -0.0, 0.0], "x").is_ok());
        assert!(validate_simplex([1.1, -0.1, 0.0], "x").is_err());
    }

    #[test]
    fn round_trip_through_json() {
        let c = SimConfig::default().with_seed(42).with_days(123);
        assert_eq!(SimConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn discount_must_exceed_growth() {
        let err = SimConfig::from_json(r#"{"processes": {"dividend": {"growth_annual": 0.05}}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "population.discount_rate_range"));
    }
}
