//! Wealth, dividends and interest, external investment flows, and the
//! insolvency / administrator / split mechanics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::RngStream;
use crate::strategies::{Fund, Strategy, Style, TRADING_DAYS};

/// Trading days in the ten-year return window used by the flow model.
pub const TEN_YEARS: usize = 2520;
/// Administrator positions smaller than this are sold off in full.
pub const ADMIN_FLUSH: f64 = 1e-6;

pub fn wealth(fund: &Fund, price: f64) -> f64 {
    fund.cash + price * fund.shares - fund.loans
}

/// Credit one day of interest on cash (charged on negative cash) and the
/// dividend on the post-trade position (paid by shorts).
pub fn accrue(fund: &mut Fund, dividend: f64, daily_rate: f64) {
    fund.cash = fund.cash * (1.0 + daily_rate) + dividend * fund.shares;
}

/// Return of each fund minus the weighted mean return.
pub fn excess_return(returns: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != weights.len() {
        return Err(Error::Domain("returns and weights differ in length".into()));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Domain("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData("all benchmark weights are zero".into()));
    }
    let bench = returns.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>() / total;
    Ok(returns.iter().map(|r| r - bench).collect())
}

/// Linear flow-performance relationship on annual flow fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    /// Annual flow fraction at zero excess return.
    pub intercept: f64,
    /// Annual flow fraction per percentage point of ten-year excess return.
    pub coef_10y: f64,
    /// Days between flow applications.
    pub period_days: usize,
}

impl Default for FlowModel {
    fn default() -> Self {
        // Annual aggregate regression: -2.4610 % constant, 0.0053 % per point.
        Self {
            intercept: -0.024610,
            coef_10y: 0.000053,
            period_days: 21,
        }
    }
}

impl FlowModel {
    /// Annual flow fraction for a ten-year excess return in percentage points.
    pub fn annual_flow(&self, excess_10y_pct: f64) -> f64 {
        self.intercept + self.coef_10y * excess_10y_pct
    }
}

/// Ten-year-equivalent performance of a fund from its flow-free index. Funds
/// with a shorter history compound their since-inception annualized return
/// over ten years.
pub fn ten_year_return(performance: &[f64]) -> f64 {
    let n = performance.len();
    if n < 2 {
        return 0.0;
    }
    let window = (n - 1).min(TEN_YEARS);
    let (end, start) = (performance[n - 1], performance[n - 1 - window]);
    if !(start > 0.0) || !(end > 0.0) {
        return -1.0;
    }
    let growth = end / start;
    if window == TEN_YEARS {
        growth - 1.0
    } else {
        growth.powf(TEN_YEARS as f64 / window as f64) - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowRecord {
    pub fund_id: usize,
    pub excess_10y: f64,
    pub flow: f64,
}

/// Apply one period of performance-driven flows to all active base funds at
/// `price`. Cash moves by `W * f_a * period / 252`.
pub fn apply_flows(funds: &mut [Fund], model: &FlowModel, price: f64) -> Vec<FlowRecord> {
    let idx: Vec<usize> = funds
        .iter()
        .enumerate()
        .filter(|(_, f)| f.active && f.style() != Style::Adaptive)
        .map(|(i, _)| i)
        .collect();
    let returns: Vec<f64> = idx.iter().map(|&i| ten_year_return(&funds[i].performance)).collect();
    let weights: Vec<f64> = idx.iter().map(|&i| funds[i].wealth(price).max(0.0)).collect();
    let excess = excess_return(&returns, &weights).unwrap_or_else(|_| vec![0.0; idx.len()]);
    let scale = model.period_days as f64 / TRADING_DAYS;
    idx.iter()
        .zip(excess)
        .map(|(&i, ex)| {
            let fund = &mut funds[i];
            let w = fund.wealth(price).max(0.0);
            let flow = w * model.annual_flow(100.0 * ex) * scale;
            fund.cash += flow;
            fund.last_flow += flow;
            FlowRecord {
                fund_id: fund.id,
                excess_10y: ex,
                flow,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsolvencyLedger {
    /// Shares held by the administrator; negative when it must cover shorts
    /// left by insolvent funds.
    pub admin_position: f64,
    pub liquidation_rate: f64,
    pub vacancy_count: usize,
    pub removed: usize,
    pub splits: usize,
}

impl InsolvencyLedger {
    pub fn new(liquidation_rate: f64) -> Self {
        Self {
            admin_position: 0.0,
            liquidation_rate,
            vacancy_count: 0,
            removed: 0,
            splits: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolvencyOutcome {
    pub removed: usize,
    /// Net cash (cash minus loans) removed with insolvent funds.
    pub written_off: f64,
}

/// Retire every active fund with strictly negative wealth. Its shares pass to
/// the administrator and its cash and loans are written off.
pub fn check_solvency(funds: &mut [Fund], price: f64, ledger: &mut InsolvencyLedger) -> SolvencyOutcome {
    let mut out = SolvencyOutcome::default();
    for fund in funds.iter_mut().filter(|f| f.active) {
        if fund.wealth(price) < 0.0 {
            fund.active = false;
            ledger.admin_position += fund.shares;
            out.written_off += fund.cash - fund.loans;
            fund.shares = 0.0;
            fund.cash = 0.0;
            fund.loans = 0.0;
            out.removed += 1;
            if fund.style() != Style::Adaptive {
                ledger.vacancy_count += 1;
                ledger.removed += 1;
            }
        }
    }
    out
}

/// Shares the administrator sells into today's clearing. Small remainders are
/// sold in full so the position reaches exactly zero.
pub fn administer_liquidation(ledger: &InsolvencyLedger, rate: f64) -> f64 {
    let pos = ledger.admin_position;
    if pos == 0.0 {
        0.0
    } else if pos.abs() < ADMIN_FLUSH {
        pos
    } else {
        rate.clamp(0.0, 1.0) * pos
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEvent {
    pub parent: usize,
    pub children: Vec<usize>,
}

/// Fill vacancies by splitting the wealthiest active base fund into equal
/// parts (at most `split_factor`, and never more than the open vacancies plus
/// one). Ties go to the lowest id. `fresh_noise` supplies the new sentiment
/// stream for a noise-trader child given its id.
pub fn split_wealthiest(
    funds: &mut Vec<Fund>,
    ledger: &mut InsolvencyLedger,
    price: f64,
    day: usize,
    split_factor: usize,
    mut fresh_noise: impl FnMut(usize) -> RngStream,
) -> Result<Vec<SplitEvent>> {
    let mut events = Vec::new();
    while ledger.vacancy_count > 0 {
        let parent = funds
            .iter()
            .enumerate()
            .filter(|(_, f)| f.active && f.style() != Style::Adaptive)
            .map(|(i, f)| (i, f.wealth(price), f.id))
            .filter(|(_, w, _)| *w > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)))
            .map(|(i, _, _)| i)
            .ok_or(Error::TotalCollapse { day })?;

        let parts = split_factor.max(2).min(ledger.vacancy_count + 1);
        let share = |x: f64| if parts == 2 { x / 2.0 } else { x / parts as f64 };
        let p = &funds[parent];
        let (cash, shares, loans, last) = (share(p.cash), share(p.shares), share(p.loans), share(p.last_wealth));
        let mut children = Vec::with_capacity(parts - 1);
        let mut next_id = funds.iter().map(|f| f.id).max().unwrap_or(0) + 1;
        for _ in 1..parts {
            let p = &funds[parent];
            let strategy = match &p.strategy {
                Strategy::Noise {
                    discount_rate,
                    sentiment,
                    ..
                } => Strategy::Noise {
                    discount_rate: *discount_rate,
                    sentiment: *sentiment,
                    noise: fresh_noise(next_id),
                },
                other => other.clone(),
            };
            let mut child = Fund::new(next_id, strategy, p.leverage, p.aggression);
            child.cash = cash;
            child.shares = shares;
            child.loans = loans;
            child.last_wealth = last;
            child.created_day = day;
            child.valuation = p.valuation;
            child.bounded_signal = p.bounded_signal;
            child.performance = p.performance.clone();
            children.push(next_id);
            funds.push(child);
            next_id += 1;
        }
        let k = (parts - 1) as f64;
        let p = &mut funds[parent];
        // The parent keeps the remainder so totals are preserved.
        p.cash -= k * cash;
        p.shares -= k * shares;
        p.loans -= k * loans;
        p.last_wealth -= k * last;
        ledger.vacancy_count -= parts - 1;
        ledger.splits += 1;
        events.push(SplitEvent {
            parent: p.id,
            children,
        });
    }
    Ok(events)
}
