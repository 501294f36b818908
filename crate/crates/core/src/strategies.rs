//! Fund agents and the three base trading signals.
//!
//! Signals are base-2 log ratios: a value investor compares its dividend
//! valuation to the price, a noise trader does the same with the valuation
//! scaled by its sentiment level, and a trend follower compares yesterday's
//! price to the price `horizon` days ago.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::{OuProcess, RngStream};

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Style {
    Nt,
    Vi,
    Tf,
    Adaptive,
}

impl Style {
    pub const BASE: [Style; 3] = [Style::Nt, Style::Vi, Style::Tf];

    pub fn label(self) -> &'static str {
        match self {
            Style::Nt => "NT",
            Style::Vi => "VI",
            Style::Tf => "TF",
            Style::Adaptive => "ADAPTIVE",
        }
    }

    /// Position in the NT/VI/TF ordering used by wealth-share vectors.
    pub fn base_index(self) -> Option<usize> {
        match self {
            Style::Nt => Some(0),
            Style::Vi => Some(1),
            Style::Tf => Some(2),
            Style::Adaptive => None,
        }
    }
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Style-specific heterogeneity. Only the parameters a style uses exist.
#[derive(Debug, Clone)]
pub enum Strategy {
    Noise {
        discount_rate: f64,
        sentiment: OuProcess,
        noise: RngStream,
    },
    Value {
        discount_rate: f64,
    },
    Trend {
        horizon: usize,
    },
    /// Externally driven bounded signal; see the optimize module.
    Adaptive,
}

impl Strategy {
    pub fn style(&self) -> Style {
        match self {
            Strategy::Noise { .. } => Style::Nt,
            Strategy::Value { .. } => Style::Vi,
            Strategy::Trend { .. } => Style::Tf,
            Strategy::Adaptive => Style::Adaptive,
        }
    }

    pub fn discount_rate(&self) -> Option<f64> {
        match self {
            Strategy::Noise { discount_rate, .. } | Strategy::Value { discount_rate } => {
                Some(*discount_rate)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fund {
    pub id: usize,
    pub strategy: Strategy,
    pub cash: f64,
    pub shares: f64,
    pub loans: f64,
    pub leverage: f64,
    pub aggression: f64,
    pub active: bool,
    /// Day on which the fund entered the market (0 for the initial population).
    pub created_day: usize,
    /// End-of-day wealth, one entry per day since creation.
    pub wealth_history: Vec<f64>,
    /// Flow-free performance index, one entry per simulated day (inherited on splits).
    pub performance: Vec<f64>,
    /// Wealth after the previous day's flows; the base of today's performance step.
    pub last_wealth: f64,
    /// Today's valuation (VI/NT only).
    pub valuation: f64,
    /// Bounded signal traded on the most recent day.
    pub bounded_signal: f64,
    /// Net external flow applied on the most recent day.
    pub last_flow: f64,
}

impl Fund {
    pub fn new(id: usize, strategy: Strategy, leverage: f64, aggression: f64) -> Self {
        Self {
            id,
            strategy,
            cash: 0.0,
            shares: 0.0,
            loans: 0.0,
            leverage,
            aggression,
            active: true,
            created_day: 0,
            wealth_history: Vec::new(),
            performance: vec![1.0],
            last_wealth: 0.0,
            valuation: 0.0,
            bounded_signal: 0.0,
            last_flow: 0.0,
        }
    }

    pub fn style(&self) -> Style {
        self.strategy.style()
    }

    pub fn wealth(&self, price: f64) -> f64 {
        crate::accounting::wealth(self, price)
    }
}

/// Convert a per-day log growth rate into an annual simple growth rate.
pub fn annual_growth(daily_log_growth: f64) -> f64 {
    (TRADING_DAYS * daily_log_growth).exp_m1()
}

/// Gordon-growth valuation of the annualized dividend stream.
pub fn value_asset(dividend: f64, daily_growth: f64, discount_rate: f64) -> Result<f64> {
    let g = annual_growth(daily_growth);
    if discount_rate <= g {
        return Err(Error::config(
            "strategies.discount_rate",
            format!("discount rate {discount_rate} must exceed annual dividend growth {g}"),
        ));
    }
    Ok(TRADING_DAYS * dividend * (1.0 + g) / (discount_rate - g))
}

fn log2_ratio(num: f64, den: f64) -> Result<f64> {
    if !(num > 0.0 && den > 0.0) {
        return Err(Error::Domain(format!(
            "log ratio needs positive inputs, got {num} / {den}"
        )));
    }
    Ok((num / den).log2())
}

pub fn signal_vi(valuation: f64, price: f64) -> Result<f64> {
    log2_ratio(valuation, price)
}

pub fn signal_nt(sentiment: f64, valuation: f64, price: f64) -> Result<f64> {
    if !(sentiment > 0.0) {
        return Err(Error::Domain(format!("sentiment level must be positive, got {sentiment}")));
    }
    log2_ratio(sentiment * valuation, price)
}

/// Trend signal from past prices. `history` holds `p(0), ..., p(t-1)`; the
/// signal is zero until `horizon` prices are available.
pub fn signal_tf(history: &[f64], horizon: usize) -> f64 {
    let n = history.len();
    if horizon == 0 || n < horizon {
        return 0.0;
    }
    let (recent, past) = (history[n - 1], history[n - horizon]);
    if recent > 0.0 && past > 0.0 {
        (recent / past).log2()
    } else {
        0.0
    }
}
