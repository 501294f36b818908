//! The daily simulation loop, run records and parallel ensembles.
//!
//! Each day runs, in order: exogenous processes, trading signals, demand
//! curves, market clearing with order execution and administrator sales,
//! dividends and interest, investment flows, solvency with splits, and
//! recording.

use rayon::prelude::*;
use serde::Serialize;

use crate::accounting::{
    accrue, administer_liquidation, apply_flows, check_solvency, split_wealthiest, FlowModel, InsolvencyLedger,
    SplitEvent,
};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::market::{clear_market, execute_cleared, ClearingParams, DemandCurve};
use crate::stochastic::{derive_stream, step_dividend, step_ou, DividendProcess, OuProcess, RngStream};
use crate::strategies::{value_asset, Fund, Strategy, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Processes,
    Signals,
    Demand,
    Clearing,
    Accrual,
    Investment,
    Solvency,
    Record,
}

impl Phase {
    pub const DAY: [Phase; 8] = [
        Phase::Processes,
        Phase::Signals,
        Phase::Demand,
        Phase::Clearing,
        Phase::Accrual,
        Phase::Investment,
        Phase::Solvency,
        Phase::Record,
    ];
}

/// Read-only market information available before today's clearing.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    /// Day being simulated, starting at 1.
    pub day: usize,
    /// Prices `p(0), ..., p(day - 1)`.
    pub price_history: &'a [f64],
    pub dividend: f64,
    pub fundamental: f64,
    pub daily_interest: f64,
}

/// Extension points for external decision makers. All methods have no-op
/// defaults.
pub trait DayHooks {
    fn on_phase(&mut self, _phase: Phase) {}

    /// Bounded signal in `[-1, 1]` for an adaptive fund.
    fn adaptive_signal(&mut self, _fund_id: usize, _view: &MarketView<'_>) -> f64 {
        0.0
    }

    /// Cash amounts to invest (positive) or redeem (negative) per fund id,
    /// called on flow days after performance-driven flows.
    fn invest(&mut self, _day: usize, _price: f64, _funds: &[Fund]) -> Result<Vec<(usize, f64)>> {
        Ok(Vec::new())
    }

    /// Called after fund splits so holders can follow the parent into the child.
    fn on_split(&mut self, _event: &SplitEvent) {}

    fn end_of_day(&mut self, _day: usize, _price: f64, _funds: &[Fund]) {}
}

pub struct NoHooks;

impl DayHooks for NoHooks {}

/// Records phase order, for loop-order checks.
#[derive(Debug, Default)]
pub struct PhaseLog(pub Vec<Phase>);

impl DayHooks for PhaseLog {
    fn on_phase(&mut self, phase: Phase) {
        self.0.push(phase);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DayRecord {
    pub t: usize,
    pub price: f64,
    pub fundamental_value: f64,
    pub dividend: f64,
    pub volume: f64,
    /// NT, VI, TF shares of positive base-fund wealth.
    pub wealth_shares: [f64; 3],
    pub style_wealth: [f64; 3],
    pub admin_position: f64,
    pub clearing_iters: usize,
    pub clearing_residual: f64,
    /// Aggregate short position across funds, in shares (non-negative).
    pub short_interest: f64,
    pub interest_paid: f64,
    pub dividends_paid: f64,
    pub admin_proceeds: f64,
    pub flows: f64,
    pub written_off: f64,
    /// Sum of fund cash at end of day.
    pub total_cash: f64,
    /// Sum of fund shares at end of day.
    pub total_shares: f64,
    pub insolvencies: usize,
    pub splits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PanelRow {
    pub t: usize,
    pub fund_id: usize,
    pub style: Style,
    pub wealth: f64,
    pub cash: f64,
    pub shares: f64,
    pub signal: f64,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Termination {
    pub day: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub initial_price: f64,
    pub initial_style_wealth: [f64; 3],
    pub initial_total_cash: f64,
    pub days: Vec<DayRecord>,
    pub panel: Vec<PanelRow>,
    pub termination: Option<Termination>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.price).collect()
    }

    /// Prices including the initial price.
    pub fn price_path(&self) -> Vec<f64> {
        std::iter::once(self.initial_price).chain(self.days.iter().map(|d| d.price)).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.volume).collect()
    }

    pub fn wealth_shares(&self) -> Vec<[f64; 3]> {
        self.days.iter().map(|d| d.wealth_shares).collect()
    }

    /// Wealth path of one fund from the panel (requires a panel stride of 1).
    pub fn fund_wealth(&self, fund_id: usize) -> Vec<f64> {
        self.panel.iter().filter(|r| r.fund_id == fund_id).map(|r| r.wealth).collect()
    }

    pub fn fund_signals(&self, fund_id: usize) -> Vec<f64> {
        self.panel.iter().filter(|r| r.fund_id == fund_id).map(|r| r.signal).collect()
    }
}

/// Adaptive fund inserted into the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AdaptiveSlot {
    /// A new all-cash fund holding this fraction of initial wealth.
    Added { wealth_share: f64, leverage: f64 },
    /// An existing base fund (by id) whose signal is taken over.
    Replace { fund_id: usize },
}

pub struct Simulation {
    config: SimConfig,
    day: usize,
    price: f64,
    price_history: Vec<f64>,
    dividend: DividendProcess,
    dividend_stream: RngStream,
    funds: Vec<Fund>,
    ledger: InsolvencyLedger,
    flow_model: FlowModel,
    clearing: ClearingParams,
    record: RunRecord,
    adaptive_id: Option<usize>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        Self::with_adaptive(config, None)
    }

    pub fn with_adaptive(config: SimConfig, adaptive: Option<AdaptiveSlot>) -> Result<Self> {
        config.validate()?;
        let seed = config.run.master_seed;
        let pop = &config.population;
        let growth = config.dividend_growth_daily();
        let d = &config.processes.dividend;
        let dividend = DividendProcess::new(d.delta0, growth, d.sigma_daily, d.rho);
        let ou = &config.processes.ou;
        let (lev, beta) = (config.market.leverage, config.market.aggression);

        let mut het = derive_stream(seed, "heterogeneity");
        let [k_lo, k_hi] = pop.discount_rate_range;
        let [h_lo, h_hi] = pop.horizon_range;
        let mut funds = Vec::with_capacity(pop.n_nt + pop.n_vi + pop.n_tf + 1);
        for _ in 0..pop.n_nt {
            let id = funds.len();
            let strategy = Strategy::Noise {
                discount_rate: het.uniform_range(k_lo, k_hi),
                sentiment: OuProcess::new(ou.mu, ou.mu, ou.theta, ou.sigma),
                noise: derive_stream(seed, &format!("ou:nt:{id}")),
            };
            funds.push(Fund::new(id, strategy, lev, beta));
        }
        for _ in 0..pop.n_vi {
            let discount_rate = het.uniform_range(k_lo, k_hi);
            funds.push(Fund::new(funds.len(), Strategy::Value { discount_rate }, lev, beta));
        }
        for _ in 0..pop.n_tf {
            let horizon = het.uniform_int(h_lo as u32, h_hi as u32) as usize;
            funds.push(Fund::new(funds.len(), Strategy::Trend { horizon }, lev, beta));
        }
        for f in funds.iter_mut() {
            if let Some(k) = f.strategy.discount_rate() {
                f.valuation = value_asset(dividend.dividend, growth, k)?;
            }
        }

        let added_share = match adaptive {
            Some(AdaptiveSlot::Added { wealth_share, .. }) => {
                if !(0.0..1.0).contains(&wealth_share) {
                    return Err(Error::config("adaptive.wealth_share", "must lie in [0, 1)"));
                }
                wealth_share
            }
            _ => 0.0,
        };
        let counts = [pop.n_nt, pop.n_vi, pop.n_tf];
        let weights: Vec<f64> = funds
            .iter()
            .map(|f| {
                let s = f.style().base_index().expect("base style");
                pop.initial_shares[s] * (1.0 - added_share) / counts[s] as f64
            })
            .collect();

        let fundamental = fundamental_value(&funds, &weights, &config, dividend.dividend)?;
        let s = pop.initial_stock_fraction;
        let price0 = initial_price(&funds, &weights, s, fundamental);
        let invested: f64 = funds
            .iter()
            .zip(&weights)
            .map(|(f, w)| w * initial_bounded(f, price0))
            .sum();
        let invested = if invested > 0.0 { invested } else { s };
        let q = config.market.supply_q;
        let total_wealth = q * price0 / invested;
        // every fund starts at its day-one target, so the market opens cleared
        let any_invested = funds.iter().zip(&weights).any(|(f, w)| w * initial_bounded(f, price0) > 0.0);
        let base_total: f64 = weights.iter().sum();
        for (f, w) in funds.iter_mut().zip(&weights) {
            f.shares = if any_invested {
                w * total_wealth * initial_bounded(f, price0) / price0
            } else if base_total > 0.0 {
                q * w / base_total
            } else {
                0.0
            };
            f.cash = w * total_wealth - price0 * f.shares;
            f.last_wealth = f.wealth(price0);
        }

        let mut adaptive_id = None;
        match adaptive {
            Some(AdaptiveSlot::Added { wealth_share, leverage }) => {
                let id = funds.len();
                let mut f = Fund::new(id, Strategy::Adaptive, leverage, beta);
                f.cash = wealth_share * total_wealth;
                f.last_wealth = f.cash;
                funds.push(f);
                adaptive_id = Some(id);
            }
            Some(AdaptiveSlot::Replace { fund_id }) => {
                let f = funds
                    .get_mut(fund_id)
                    .ok_or_else(|| Error::config("adaptive.fund_id", format!("no fund {fund_id}")))?;
                f.strategy = Strategy::Adaptive;
                adaptive_id = Some(fund_id);
            }
            None => {}
        }

        let mut initial_style_wealth = [0.0; 3];
        for f in &funds {
            if let Some(s) = f.style().base_index() {
                initial_style_wealth[s] += f.wealth(price0).max(0.0);
            }
        }
        let initial_total_cash = funds.iter().map(|f| f.cash).sum();
        let days_hint = config.run.t_max_days.min(1 << 20);
        Ok(Self {
            flow_model: config.flow_model(),
            clearing: config.clearing_params(),
            ledger: InsolvencyLedger::new(config.solvency.liquidation_rate),
            dividend_stream: derive_stream(seed, "dividend"),
            record: RunRecord {
                initial_price: price0,
                initial_style_wealth,
                initial_total_cash,
                days: Vec::with_capacity(days_hint),
                panel: Vec::new(),
                termination: None,
            },
            price_history: {
                let mut h = Vec::with_capacity(days_hint + 1);
                h.push(price0);
                h
            },
            config,
            day: 0,
            price: price0,
            dividend,
            funds,
            adaptive_id,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn price_history(&self) -> &[f64] {
        &self.price_history
    }

    pub fn funds(&self) -> &[Fund] {
        &self.funds
    }

    pub fn ledger(&self) -> &InsolvencyLedger {
        &self.ledger
    }

    pub fn dividend(&self) -> f64 {
        self.dividend.dividend
    }

    pub fn adaptive_id(&self) -> Option<usize> {
        self.adaptive_id
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn into_record(self) -> RunRecord {
        self.record
    }

    /// Shares held by funds plus the administrator's inventory.
    pub fn share_total(&self) -> f64 {
        self.funds.iter().map(|f| f.shares).sum::<f64>() + self.ledger.admin_position
    }

    pub fn step_day(&mut self) -> Result<()> {
        self.step_day_with(&mut NoHooks)
    }

    pub fn step_day_with(&mut self, hooks: &mut dyn DayHooks) -> Result<()> {
        let t = self.day + 1;
        let growth = self.config.dividend_growth_daily();
        let r_d = self.config.daily_interest();

        // (1) exogenous processes and valuations
        self.dividend = step_dividend(self.dividend, self.dividend_stream.normal());
        let dividend = self.dividend.dividend;
        for f in self.funds.iter_mut().filter(|f| f.active) {
            if let Strategy::Noise { sentiment, noise, .. } = &mut f.strategy {
                *sentiment = step_ou(*sentiment, noise.normal());
            }
            if let Some(k) = f.strategy.discount_rate() {
                f.valuation = value_asset(dividend, growth, k)?;
            }
        }
        let fundamental = self.current_fundamental(dividend);
        hooks.on_phase(Phase::Processes);

        // (2) signals for funds whose signal does not depend on today's price
        let view = MarketView {
            day: t,
            price_history: &self.price_history,
            dividend,
            fundamental,
            daily_interest: r_d,
        };
        let active: Vec<usize> = (0..self.funds.len()).filter(|&i| self.funds[i].active).collect();
        let adaptive_signals: Vec<Option<f64>> = active
            .iter()
            .map(|&i| {
                let f = &self.funds[i];
                (f.style() == Style::Adaptive).then(|| hooks.adaptive_signal(f.id, &view))
            })
            .collect();
        hooks.on_phase(Phase::Signals);

        // (3) demand curves
        let curves = active
            .iter()
            .zip(&adaptive_signals)
            .map(|(&i, sig)| match sig {
                Some(b) => Ok(DemandCurve::fixed(&self.funds[i], *b)),
                None => DemandCurve::for_fund(&self.funds[i], &self.price_history),
            })
            .collect::<Result<Vec<_>>>()?;
        hooks.on_phase(Phase::Demand);

        // (4) clearing, execution and administrator sales
        let admin_sell = administer_liquidation(&self.ledger, self.ledger.liquidation_rate);
        let retained = self.ledger.admin_position - admin_sell;
        let q = self.config.market.supply_q;
        let clearing = clear_market(&curves, q, retained, self.price, self.clearing, t)?;
        let price = clearing.price;
        let volume = {
            let mut refs: Vec<&mut Fund> = self.funds.iter_mut().filter(|f| f.active).collect();
            execute_cleared(&mut refs, &curves, price, admin_sell, q - retained)
        };
        self.ledger.admin_position = retained;
        let admin_proceeds = price * admin_sell;
        hooks.on_phase(Phase::Clearing);

        // (5) dividends and interest on post-trade positions
        let (mut interest_paid, mut dividends_paid) = (0.0, 0.0);
        for f in self.funds.iter_mut().filter(|f| f.active) {
            interest_paid += f.cash * r_d;
            dividends_paid += dividend * f.shares;
            accrue(f, dividend, r_d);
            let w = f.wealth(price);
            let step = if f.last_wealth > 0.0 && w > 0.0 { w / f.last_wealth } else if f.last_wealth > 0.0 { 0.0 } else { 1.0 };
            let last = *f.performance.last().expect("performance starts at 1");
            f.performance.push(last * step);
            f.last_flow = 0.0;
        }
        hooks.on_phase(Phase::Accrual);

        // (6) external investment
        let mut flows = 0.0;
        if t % self.flow_model.period_days == 0 {
            if self.config.flows.enabled {
                flows += apply_flows(&mut self.funds, &self.flow_model, price)
                    .iter()
                    .map(|r| r.flow)
                    .sum::<f64>();
            }
            for (id, amount) in hooks.invest(t, price, &self.funds)? {
                if let Some(f) = self.funds.iter_mut().find(|f| f.id == id && f.active) {
                    f.cash += amount;
                    f.last_flow += amount;
                    flows += amount;
                }
            }
        }
        hooks.on_phase(Phase::Investment);

        // (7) solvency and splits
        let outcome = check_solvency(&mut self.funds, price, &mut self.ledger);
        let seed = self.config.run.master_seed;
        let factor = self.config.solvency.split_factor;
        let splits = split_wealthiest(&mut self.funds, &mut self.ledger, price, t, factor, |id| {
            derive_stream(seed, &format!("ou:nt:{id}"))
        })?;
        for event in &splits {
            hooks.on_split(event);
        }
        hooks.on_phase(Phase::Solvency);

        // (8) records
        self.price = price;
        self.price_history.push(price);
        self.day = t;
        let mut style_wealth = [0.0; 3];
        let (mut short_interest, mut total_cash, mut total_shares) = (0.0, 0.0, 0.0);
        let stride = self.config.run.panel_stride;
        let record_panel = stride > 0 && t % stride == 0;
        for f in self.funds.iter_mut() {
            total_cash += f.cash;
            total_shares += f.shares;
            if !f.active {
                continue;
            }
            let w = f.wealth(price);
            f.last_wealth = w;
            f.wealth_history.push(w);
            if f.shares < 0.0 {
                short_interest -= f.shares;
            }
            if let Some(s) = f.style().base_index() {
                style_wealth[s] += w.max(0.0);
            }
            if record_panel {
                self.record.panel.push(PanelRow {
                    t,
                    fund_id: f.id,
                    style: f.style(),
                    wealth: w,
                    cash: f.cash,
                    shares: f.shares,
                    signal: f.bounded_signal,
                    flow: f.last_flow,
                });
            }
        }
        let total: f64 = style_wealth.iter().sum();
        let wealth_shares = if total > 0.0 {
            style_wealth.map(|w| w / total)
        } else {
            [0.0; 3]
        };
        self.record.days.push(DayRecord {
            t,
            price,
            fundamental_value: fundamental,
            dividend,
            volume,
            wealth_shares,
            style_wealth,
            admin_position: self.ledger.admin_position,
            clearing_iters: clearing.iterations,
            clearing_residual: clearing.residual,
            short_interest,
            interest_paid,
            dividends_paid,
            admin_proceeds,
            flows,
            written_off: outcome.written_off,
            total_cash,
            total_shares,
            insolvencies: outcome.removed,
            splits: splits.len(),
        });
        hooks.end_of_day(t, price, &self.funds);
        hooks.on_phase(Phase::Record);
        Ok(())
    }

    /// Run until `t_max_days`. On failure the partial record keeps every
    /// completed day and notes the termination reason.
    pub fn run_with(&mut self, hooks: &mut dyn DayHooks) -> Result<()> {
        while self.day < self.config.run.t_max_days {
            if let Err(e) = self.step_day_with(hooks) {
                self.record.termination = Some(Termination {
                    day: self.day + 1,
                    reason: e.to_string(),
                });
                return Err(e);
            }
        }
        Ok(())
    }

    fn current_fundamental(&self, dividend: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut plain = (0.0, 0usize);
        for f in self.funds.iter().filter(|f| f.active) {
            if let Strategy::Value { .. } = f.strategy {
                let w = f.wealth(self.price).max(0.0);
                num += w * f.valuation;
                den += w;
                plain.0 += f.valuation;
                plain.1 += 1;
            }
        }
        if den > 0.0 {
            num / den
        } else if plain.1 > 0 {
            plain.0 / plain.1 as f64
        } else {
            midrange_value(&self.config, dividend)
        }
    }
}

fn midrange_value(config: &SimConfig, dividend: f64) -> f64 {
    let [lo, hi] = config.population.discount_rate_range;
    value_asset(dividend, config.dividend_growth_daily(), 0.5 * (lo + hi)).unwrap_or(f64::NAN)
}

/// Wealth-weighted mean valuation of the value investors.
fn fundamental_value(funds: &[Fund], weights: &[f64], config: &SimConfig, dividend: f64) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (f, w) in funds.iter().zip(weights) {
        if let Strategy::Value { .. } = f.strategy {
            num += w * f.valuation;
            den += w;
        }
    }
    if den > 0.0 {
        return Ok(num / den);
    }
    let value_funds: Vec<f64> = funds
        .iter()
        .filter(|f| matches!(f.strategy, Strategy::Value { .. }))
        .map(|f| f.valuation)
        .collect();
    if !value_funds.is_empty() {
        return Ok(value_funds.iter().sum::<f64>() / value_funds.len() as f64);
    }
    Ok(midrange_value(config, dividend))
}

fn initial_bounded(f: &Fund, price: f64) -> f64 {
    match &f.strategy {
        Strategy::Value { .. } => ((f.valuation / price).log2() * f.aggression).tanh(),
        Strategy::Noise { sentiment, .. } => ((sentiment.level * f.valuation / price).log2() * f.aggression).tanh(),
        _ => 0.0,
    }
}

/// Price at which the valuation-driven funds want to hold `stock_fraction`
/// of their wealth in the asset. Falls back to `fallback` when they carry no
/// wealth.
fn initial_price(funds: &[Fund], weights: &[f64], stock_fraction: f64, fallback: f64) -> f64 {
    let valuation_weight: f64 = funds
        .iter()
        .zip(weights)
        .filter(|(f, _)| matches!(f.strategy, Strategy::Value { .. } | Strategy::Noise { .. }))
        .map(|(_, w)| w)
        .sum();
    if !(valuation_weight > 0.0) {
        return fallback;
    }
    let goal = stock_fraction * valuation_weight;
    let gap = |p: f64| -> f64 {
        funds
            .iter()
            .zip(weights)
            .map(|(f, w)| w * initial_bounded(f, p))
            .sum::<f64>()
            - goal
    };
    let (mut lo, mut hi) = ((fallback * 1e-6).ln(), (fallback * 1e6).ln());
    if gap(lo.exp()) < 0.0 || gap(hi.exp()) > 0.0 {
        return fallback;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Build a simulation from `config`.
pub fn initialize(config: SimConfig) -> Result<Simulation> {
    Simulation::new(config)
}

pub fn run(config: SimConfig) -> Result<RunRecord> {
    let mut sim = Simulation::new(config)?;
    sim.run_with(&mut NoHooks)?;
    Ok(sim.into_record())
}

/// Map `job` over `items` on a pool of `workers` threads, preserving order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, job: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let workers = workers.max(1);
    if workers == 1 {
        return items.iter().map(job).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&job).collect()),
        Err(_) => items.iter().map(job).collect(),
    }
}

/// Run every configuration; failures are returned in place, never fatal to
/// the ensemble. Output does not depend on `workers`.
pub fn run_ensemble(configs: &[SimConfig], workers: usize) -> Vec<Result<RunRecord>> {
    par_map(configs, workers, |c| run(c.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(days: usize) -> SimConfig {
        let mut c = SimConfig::default().with_days(days);
        c.population.n_nt = 3;
        c.population.n_vi = 3;
        c.population.n_tf = 3;
        c
    }

    #[test]
    fn equal_shares_split_wealth_by_style() {
        let sim = Simulation::new(small(0)).unwrap();
        let p = sim.price();
        let mut by_style = [0.0; 3];
        for f in sim.funds() {
            by_style[f.style().base_index().unwrap()] += f.wealth(p);
        }
        let total: f64 = by_style.iter().sum();
        for w in by_style {
            assert!((w / total - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((sim.share_total() - 1000.0).abs() < 1e-9);
        assert!(sim.funds().iter().all(|f| f.cash >= 0.0));
    }

    #[test]
    fn simplex_corner_leaves_other_styles_empty() {
        let mut sim = Simulation::new(small(50).with_shares([1.0, 0.0, 0.0])).unwrap();
        for f in sim.funds() {
            if f.style() != Style::Nt {
                assert_eq!(f.wealth(sim.price()), 0.0);
            }
        }
        sim.run_with(&mut NoHooks).unwrap();
        let last = sim.record().days.last().unwrap();
        assert_eq!(last.wealth_shares, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn initialization_is_deterministic() {
        let a = Simulation::new(small(0)).unwrap();
        let b = Simulation::new(small(0)).unwrap();
        assert_eq!(a.price().to_bits(), b.price().to_bits());
        for (x, y) in a.funds().iter().zip(b.funds()) {
            assert_eq!((x.cash.to_bits(), x.shares.to_bits()), (y.cash.to_bits(), y.shares.to_bits()));
        }
    }

    #[test]
    fn day_follows_the_phase_order() {
        let mut sim = Simulation::new(small(3)).unwrap();
        let mut log = PhaseLog::default();
        sim.run_with(&mut log).unwrap();
        let expected: Vec<Phase> = Phase::DAY.iter().copied().cycle().take(24).collect();
        assert_eq!(log.0, expected);
    }

    #[test]
    fn empty_run_is_empty() {
        let rec = run(small(0)).unwrap();
        assert!(rec.is_empty());
        assert!(rec.termination.is_none());
    }

    #[test]
    fn shares_and_wealth_shares_hold_daily() {
        let mut sim = Simulation::new(small(500)).unwrap();
        while sim.day() < 500 {
            sim.step_day().unwrap();
            assert!((sim.share_total() - 1000.0).abs() < 1e-9);
            let d = sim.record().days.last().unwrap();
            assert!((d.wealth_shares.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.clearing_residual <= 1e-8);
        }
    }

    #[test]
    fn cash_changes_only_by_income_without_flows() {
        let rec = run(small(1000)).unwrap();
        let mut prev = rec.initial_total_cash;
        for d in &rec.days {
            let expected = prev + d.interest_paid + d.dividends_paid - d.admin_proceeds + d.flows - d.written_off;
            assert!((d.total_cash - expected).abs() < 1e-6, "day {}", d.t);
            assert_eq!(d.flows, 0.0);
            prev = d.total_cash;
        }
    }

    #[test]
    fn deterministic_fixed_point_keeps_price_constant() {
        // One value investor; negative interest exactly offsets the dividend
        // so wealth, targets and price stay put.
        let mut c = SimConfig::default().with_days(0).with_shares([0.0, 1.0, 0.0]);
        c.population.n_nt = 0;
        c.population.n_tf = 0;
        c.population.n_vi = 1;
        c.processes.dividend.sigma_daily = 0.0;
        c.processes.dividend.growth_annual = 0.0;
        c.processes.ou.sigma = 0.0;
        let sim = Simulation::new(c.clone()).unwrap();
        let f = &sim.funds()[0];
        let r_d = -c.processes.dividend.delta0 * f.shares / f.cash;
        c.market.interest_annual = r_d * 252.0;
        c.run.t_max_days = 200;
        let rec = run(c).unwrap();
        let p0 = rec.initial_price;
        for d in &rec.days {
            assert!((d.price / p0 - 1.0).abs() < 1e-9, "day {} price {}", d.t, d.price);
        }
    }

    #[test]
    fn ensemble_matches_sequential_and_isolates_failures() {
        let mut configs: Vec<SimConfig> = (0..4).map(|s| small(200).with_seed(s)).collect();
        let mut bad = small(200).with_shares([0.0, 0.0, 1.0]);
        bad.population.n_nt = 0;
        bad.population.n_vi = 0;
        configs.insert(2, bad);
        let seq = run_ensemble(&configs, 1);
        let par = run_ensemble(&configs, 4);
        assert_eq!(seq.len(), 5);
        assert!(seq[2].is_err());
        assert_eq!(seq.iter().filter(|r| r.is_ok()).count(), 4);
        for (a, b) in seq.iter().zip(&par) {
            match (a, b) {
                (Ok(x), Ok(y)) => assert_eq!(x, y),
                (Err(x), Err(y)) => assert_eq!(x, y),
                _ => panic!("mismatched outcomes"),
            }
        }
        assert!(run_ensemble(&[], 8).is_empty());
    }
}
