//! Environments for adaptive trading and investment strategies, performance
//! measures, and a (1+λ) evolution strategy over bounded parameter vectors.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::SplitEvent;
use crate::config::SimConfig;
use crate::engine::{par_map, AdaptiveSlot, DayHooks, MarketView, RunRecord, Simulation};
use crate::error::{Error, Result};
use crate::stochastic::derive_stream;
use crate::strategies::{Fund, Style, TRADING_DAYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    SharpeDaily,
    SharpeAnnualized,
    WealthMultiplier,
    CumulativeReturn,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "sharpedaily" | "sharpe" => Ok(Measure::SharpeDaily),
            "sharpeannualized" | "sharpeannual" => Ok(Measure::SharpeAnnualized),
            "wealthmultiplier" | "wealth" => Ok(Measure::WealthMultiplier),
            "cumulativereturn" | "return" => Ok(Measure::CumulativeReturn),
            _ => Err(Error::config(
                "measure",
                format!("unknown measure `{s}` (sharpe-daily, sharpe-annualized, wealth-multiplier, cumulative-return)"),
            )),
        }
    }
}

impl Measure {
    /// Value of the measure on a wealth path; `None` when undefined
    /// (a Sharpe ratio of constant returns).
    pub fn evaluate(self, wealth: &[f64]) -> Result<Option<f64>> {
        match self {
            Measure::WealthMultiplier => wealth_multiplier(wealth).map(Some),
            Measure::CumulativeReturn => wealth_multiplier(wealth).map(|m| Some(m - 1.0)),
            Measure::SharpeDaily | Measure::SharpeAnnualized => {
                if wealth.first().map_or(true, |w| !(*w > 0.0)) {
                    return Err(Error::Domain("wealth path must start positive".into()));
                }
                let returns = simple_returns(wealth);
                sharpe(&returns, TRADING_DAYS, self == Measure::SharpeAnnualized)
            }
        }
    }
}

/// Period returns of a wealth path; once wealth hits zero the path stays flat.
pub fn simple_returns(wealth: &[f64]) -> Vec<f64> {
    wealth
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1].max(0.0) / w[0] - 1.0 } else { 0.0 })
        .collect()
}

/// Geometric mean return over sample standard deviation; `None` when the
/// returns do not vary.
pub fn sharpe(returns: &[f64], periods_per_year: f64, annualize: bool) -> Result<Option<f64>> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData("Sharpe ratio needs two returns".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 1e-14 * mean.abs().max(1e-3)) {
        return Ok(None);
    }
    let log_growth: f64 = returns.iter().map(|r| (1.0 + r).max(0.0).ln()).sum::<f64>() / n;
    let geo = log_growth.exp() - 1.0;
    let s = geo / sd;
    Ok(Some(if annualize { s * periods_per_year.sqrt() } else { s }))
}

pub fn wealth_multiplier(wealth: &[f64]) -> Result<f64> {
    match (wealth.first(), wealth.last()) {
        (Some(&w0), Some(&wt)) if w0 > 0.0 => Ok(wt.max(0.0) / w0),
        _ => Err(Error::Domain("wealth multiplier needs a positive initial wealth".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSchedule {
    pub values: Vec<f64>,
}

impl SignalSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!("schedule entry {i} = {} outside [-1, 1]", values[i])));
        }
        Ok(Self { values })
    }

    pub fn constant(value: f64, days: usize) -> Result<Self> {
        Self::new(vec![value; days])
    }
}

/// Low-dimensional signal rules searched in static mode. Parameters live in
/// [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaticFamily {
    /// `[c]`: a constant bounded signal.
    Constant,
    /// `[c, w_v, w_t, z]`: a bias plus value and trend terms; `z` selects
    /// the trend horizon between 5 and 252 days.
    Mixed,
}

impl StaticFamily {
    pub fn dimension(self) -> usize {
        match self {
            StaticFamily::Constant => 1,
            StaticFamily::Mixed => 4,
        }
    }

    pub fn trend_horizon(z: f64) -> usize {
        5 + (((z.clamp(-1.0, 1.0) + 1.0) / 2.0) * 247.0).round() as usize
    }

    pub fn signal(self, params: &[f64], view: &MarketView<'_>) -> f64 {
        match self {
            StaticFamily::Constant => params[0].clamp(-1.0, 1.0),
            StaticFamily::Mixed => {
                let hist = view.price_history;
                let p = *hist.last().expect("price history starts with the initial price");
                let value = if view.fundamental > 0.0 { (view.fundamental / p).log2().tanh() } else { 0.0 };
                let h = Self::trend_horizon(params[3]).min(hist.len() - 1);
                let trend = if h > 0 { (p / hist[hist.len() - 1 - h]).log2().tanh() } else { 0.0 };
                (params[0] + params[1] * value + params[2] * trend).clamp(-1.0, 1.0)
            }
        }
    }
}

/// What drives the adaptive fund.
#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    Schedule(SignalSchedule),
    Static { family: StaticFamily, params: Vec<f64> },
}

struct AdaptiveHooks<'a> {
    controller: &'a Controller,
}

impl DayHooks for AdaptiveHooks<'_> {
    fn adaptive_signal(&mut self, _fund_id: usize, view: &MarketView<'_>) -> f64 {
        match self.controller {
            Controller::Schedule(s) => s.values.get(view.day - 1).copied().unwrap_or(0.0),
            Controller::Static { family, params } => family.signal(params, view),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradingEnv {
    pub config: SimConfig,
    pub slot: AdaptiveSlot,
    pub measure: Measure,
}

impl TradingEnv {
    /// A small added fund holding `wealth_share` of initial wealth.
    pub fn new(config: SimConfig, wealth_share: f64, measure: Measure) -> Self {
        Self {
            config,
            slot: AdaptiveSlot::Added {
                wealth_share,
                leverage: 1.0,
            },
            measure,
        }
    }

    pub fn days(&self) -> usize {
        self.config.run.t_max_days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    /// `None` when undefined or the episode is infeasible.
    pub measure: Option<f64>,
    pub wealth: Vec<f64>,
    pub infeasible: Option<String>,
    /// Measure of each base style's aggregate wealth in the same episode.
    pub base: [Option<f64>; 3],
}

impl EpisodeResult {
    fn infeasible(reason: String) -> Self {
        Self {
            measure: None,
            wealth: Vec::new(),
            infeasible: Some(reason),
            base: [None; 3],
        }
    }

    pub fn best_base(&self) -> Option<f64> {
        self.base.iter().flatten().copied().reduce(f64::max)
    }
}

/// Wealth path of one fund: initial wealth followed by each end-of-day
/// wealth, closed with zero if the fund was removed.
fn fund_path(sim: &Simulation, id: usize, initial: f64) -> Vec<f64> {
    let f = &sim.funds()[id];
    let mut path = Vec::with_capacity(f.wealth_history.len() + 2);
    path.push(initial);
    path.extend(&f.wealth_history);
    if !f.active {
        path.push(0.0);
    }
    path
}

fn style_measures(record: &RunRecord, measure: Measure) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    for (s, slot) in out.iter_mut().enumerate() {
        let mut path = vec![record.initial_style_wealth[s]];
        path.extend(record.days.iter().map(|d| d.style_wealth[s]));
        *slot = measure.evaluate(&path).ok().flatten();
    }
    out
}

/// One episode with the adaptive fund under `controller`.
pub fn evaluate_controller(controller: &Controller, env: &TradingEnv) -> EpisodeResult {
    if let Controller::Schedule(s) = controller {
        if s.values.len() != env.days() {
            return EpisodeResult::infeasible(format!(
                "schedule has {} entries for a {}-day episode",
                s.values.len(),
                env.days()
            ));
        }
    }
    let mut sim = match Simulation::with_adaptive(env.config.clone(), Some(env.slot)) {
        Ok(s) => s,
        Err(e) => return EpisodeResult::infeasible(e.to_string()),
    };
    let id = sim.adaptive_id().expect("adaptive slot was requested");
    let initial = sim.funds()[id].wealth(sim.price());
    let mut hooks = AdaptiveHooks { controller };
    if let Err(e) = sim.run_with(&mut hooks) {
        return EpisodeResult::infeasible(e.to_string());
    }
    let wealth = fund_path(&sim, id, initial);
    let (measure, infeasible) = match env.measure.evaluate(&wealth) {
        Ok(m) => (m, None),
        Err(e) => (None, Some(e.to_string())),
    };
    EpisodeResult {
        measure,
        base: style_measures(sim.record(), env.measure),
        wealth,
        infeasible,
    }
}

pub fn evaluate_schedule(schedule: &SignalSchedule, env: &TradingEnv) -> EpisodeResult {
    evaluate_controller(&Controller::Schedule(schedule.clone()), env)
}

/// Features an investor sees for one fund.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundFeatures {
    pub fund_id: usize,
    pub style: Style,
    /// Returns over 21, 252 and 2520 days (since inception when shorter).
    pub returns: [f64; 3],
    pub tna: f64,
}

pub const FEATURE_LAGS: [usize; 3] = [21, 252, 2520];

impl FundFeatures {
    fn of(f: &Fund, price: f64) -> Self {
        let perf = &f.performance;
        let last = *perf.last().expect("performance starts at 1");
        let returns = FEATURE_LAGS.map(|lag| {
            let base = perf[perf.len().saturating_sub(lag + 1)];
            if base > 0.0 {
                last / base - 1.0
            } else {
                0.0
            }
        });
        Self {
            fund_id: f.id,
            style: f.style(),
            returns,
            tna: f.wealth(price),
        }
    }

    /// `[r21, r252, r2520, ln TNA, is_nt, is_vi, is_tf]`.
    pub fn vector(&self) -> [f64; 7] {
        let one = |s: Style| if self.style == s { 1.0 } else { 0.0 };
        [
            self.returns[0],
            self.returns[1],
            self.returns[2],
            self.tna.max(1e-12).ln(),
            one(Style::Nt),
            one(Style::Vi),
            one(Style::Tf),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    Null,
    /// Everything into the best trailing one-year performer.
    ReturnChasing,
    /// Amount per fund `budget * clamp(w . x, -1, 1) / n_funds`.
    Linear { weights: Vec<f64> },
    /// The same allocation every period.
    Fixed { allocations: Vec<(usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestorPolicy {
    pub kind: PolicyKind,
    /// Maximum total absolute allocation per period.
    pub budget: f64,
}

impl InvestorPolicy {
    pub fn allocate(&self, features: &[FundFeatures], cash: f64) -> Vec<(usize, f64)> {
        match &self.kind {
            PolicyKind::Null => Vec::new(),
            PolicyKind::ReturnChasing => {
                let best = features
                    .iter()
                    .filter(|f| f.tna > 0.0)
                    .fold(None::<&FundFeatures>, |acc, f| match acc {
                        Some(b) if b.returns[1] >= f.returns[1] => Some(b),
                        _ => Some(f),
                    });
                match best {
                    Some(b) if cash > 0.0 => vec![(b.fund_id, self.budget.min(cash))],
                    _ => Vec::new(),
                }
            }
            PolicyKind::Linear { weights } => {
                let n = features.len().max(1) as f64;
                features
                    .iter()
                    .map(|f| {
                        let score: f64 = weights.iter().zip(f.vector()).map(|(w, x)| w * x).sum();
                        (f.fund_id, self.budget * score.clamp(-1.0, 1.0) / n)
                    })
                    .filter(|(_, a)| *a != 0.0)
                    .collect()
            }
            PolicyKind::Fixed { allocations } => allocations.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestorEnv {
    pub config: SimConfig,
    /// Investor's starting cash.
    pub capital: f64,
    pub measure: Measure,
}

struct InvestorHooks<'a> {
    policy: &'a InvestorPolicy,
    daily_rate: f64,
    cash: f64,
    units: BTreeMap<usize, f64>,
    path: Vec<f64>,
    violation: Option<String>,
}

fn nav(f: &Fund) -> f64 {
    *f.performance.last().expect("performance starts at 1")
}

impl DayHooks for InvestorHooks<'_> {
    fn invest(&mut self, day: usize, price: f64, funds: &[Fund]) -> Result<Vec<(usize, f64)>> {
        if self.violation.is_some() {
            return Ok(Vec::new());
        }
        let features: Vec<FundFeatures> = funds
            .iter()
            .filter(|f| f.active && f.style().base_index().is_some())
            .map(|f| FundFeatures::of(f, price))
            .collect();
        let wanted = self.policy.allocate(&features, self.cash);
        let gross: f64 = wanted.iter().map(|(_, a)| a.abs()).sum();
        if gross > self.policy.budget * (1.0 + 1e-12) {
            self.violation = Some(format!("day {day}: allocations {gross} exceed budget {}", self.policy.budget));
            return Ok(Vec::new());
        }
        let mut done = Vec::with_capacity(wanted.len());
        for (id, amount) in wanted {
            let Some(f) = funds.iter().find(|f| f.id == id && f.active && f.style().base_index().is_some()) else {
                continue;
            };
            let per_unit = nav(f);
            if !(per_unit > 0.0) {
                continue;
            }
            let held = self.units.entry(id).or_insert(0.0);
            // redemptions are capped by the holding, purchases by cash on hand
            let amount = amount.max(-*held * per_unit).min(self.cash.max(0.0));
            if amount == 0.0 {
                continue;
            }
            *held += amount / per_unit;
            self.cash -= amount;
            done.push((id, amount));
        }
        Ok(done)
    }

    fn on_split(&mut self, event: &SplitEvent) {
        if let Some(u) = self.units.get(&event.parent).copied() {
            let parts = (event.children.len() + 1) as f64;
            self.units.insert(event.parent, u / parts);
            for c in &event.children {
                self.units.insert(*c, u / parts);
            }
        }
    }

    fn end_of_day(&mut self, _day: usize, _price: f64, funds: &[Fund]) {
        self.cash *= 1.0 + self.daily_rate;
        let held: f64 = self
            .units
            .iter()
            .map(|(id, u)| match funds.get(*id) {
                Some(f) if f.active => u * nav(f),
                _ => 0.0,
            })
            .sum();
        self.path.push(self.cash + held);
    }
}

/// One episode with an external investor allocating on top of any
/// configured baseline flows. Portfolio value is cash plus fund units marked
/// at each fund's performance index.
pub fn evaluate_investor(policy: &InvestorPolicy, env: &InvestorEnv) -> EpisodeResult {
    if !(policy.budget > 0.0) {
        return EpisodeResult::infeasible("investor budget must be positive".into());
    }
    if !(env.capital > 0.0) {
        return EpisodeResult::infeasible("investor capital must be positive".into());
    }
    let mut sim = match Simulation::new(env.config.clone()) {
        Ok(s) => s,
        Err(e) => return EpisodeResult::infeasible(e.to_string()),
    };
    let mut hooks = InvestorHooks {
        policy,
        daily_rate: env.config.daily_interest(),
        cash: env.capital,
        units: BTreeMap::new(),
        path: vec![env.capital],
        violation: None,
    };
    if let Err(e) = sim.run_with(&mut hooks) {
        return EpisodeResult::infeasible(e.to_string());
    }
    let base = style_measures(sim.record(), env.measure);
    if let Some(v) = hooks.violation {
        let mut r = EpisodeResult::infeasible(v);
        r.base = base;
        return r;
    }
    let (measure, infeasible) = match env.measure.evaluate(&hooks.path) {
        Ok(m) => (m, None),
        Err(e) => (None, Some(e.to_string())),
    };
    EpisodeResult {
        measure,
        wealth: hooks.path,
        infeasible,
        base,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchMode {
    /// Gaussian steps on every coordinate of a low-dimensional vector.
    Static,
    /// Gaussian steps on a random contiguous block of a long schedule.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    pub mode: SearchMode,
    pub lambda: usize,
    pub initial_step: f64,
    pub workers: usize,
}

impl SearchOptions {
    pub fn new(budget: usize, seed: u64, mode: SearchMode) -> Self {
        Self {
            budget,
            seed,
            mode,
            lambda: 8,
            initial_step: 0.3,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub evaluation: usize,
    pub candidate_hash: String,
    pub measure: Option<f64>,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best: Vec<f64>,
    pub best_measure: f64,
    pub trace: Vec<TraceRow>,
}

impl SearchResult {
    pub fn write_trace_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["evaluation", "candidate_hash", "measure", "best_so_far"])?;
        for r in &self.trace {
            w.write_record([
                r.evaluation.to_string(),
                r.candidate_hash.clone(),
                r.measure.map_or_else(String::new, |m| m.to_string()),
                r.best_so_far.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn candidate_hash(x: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in x {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// (1+λ) evolution strategy with the one-fifth success rule. Candidates are
/// clamped to [-1, 1]; undefined or infeasible evaluations rank last.
pub fn optimize_search<F>(objective: F, initial: Vec<f64>, options: &SearchOptions) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Option<f64> + Sync + Send,
{
    if options.budget == 0 {
        return Err(Error::config("budget", "must be at least 1"));
    }
    if initial.is_empty() {
        return Err(Error::config("initial", "candidate must have at least one entry"));
    }
    let score = |m: Option<f64>| m.filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY);
    let mut parent: Vec<f64> = initial.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let first = objective(&parent);
    let mut best = score(first);
    let mut trace = vec![TraceRow {
        evaluation: 0,
        candidate_hash: candidate_hash(&parent),
        measure: first,
        best_so_far: best,
    }];
    let mut rng = derive_stream(options.seed, "search");
    let mut step = options.initial_step;
    let dim = parent.len();
    let block = (dim / 16).max(1);
    let lambda = options.lambda.max(1);
    while trace.len() < options.budget {
        let count = lambda.min(options.budget - trace.len());
        let children: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                let mut c = parent.clone();
                match options.mode {
                    SearchMode::Static => {
                        for v in c.iter_mut() {
                            *v = (*v + step * rng.normal()).clamp(-1.0, 1.0);
                        }
                    }
                    SearchMode::Dynamic => {
                        let start = rng.uniform_int(0, (dim - block) as u32) as usize;
                        for v in &mut c[start..start + block] {
                            *v = (*v + step * rng.normal()).clamp(-1.0, 1.0);
                        }
                    }
                }
                c
            })
            .collect();
        let values = par_map(&children, options.workers, |c| objective(c));
        let mut successes = 0;
        let mut winner: Option<(usize, f64)> = None;
        for (i, (c, v)) in children.iter().zip(&values).enumerate() {
            let s = score(*v);
            if s > best {
                successes += 1;
            }
            if s > winner.map_or(f64::NEG_INFINITY, |w| w.1) {
                winner = Some((i, s));
            }
            trace.push(TraceRow {
                evaluation: trace.len(),
                candidate_hash: candidate_hash(c),
                measure: *v,
                best_so_far: best.max(winner.map_or(f64::NEG_INFINITY, |w| w.1)),
            });
        }
        if let Some((i, s)) = winner {
            if s > best {
                best = s;
                parent = children[i].clone();
            }
        }
        let rate = successes as f64 / count as f64;
        step = (step * ((rate - 0.2) / 0.8).exp()).clamp(1e-6, 2.0);
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Infeasible("every evaluation was infeasible or undefined".into()));
    }
    Ok(SearchResult {
        best: parent,
        best_measure: best,
        trace,
    })
}

/// Objective for static-family trading search in `env`.
pub fn static_objective(env: &TradingEnv, family: StaticFamily) -> impl Fn(&[f64]) -> Option<f64> + Sync + Send + '_ {
    move |x: &[f64]| {
        let c = Controller::Static {
            family,
            params: x.to_vec(),
        };
        evaluate_controller(&c, env).measure
    }
}

/// Objective for schedule search in `env`.
pub fn dynamic_objective(env: &TradingEnv) -> impl Fn(&[f64]) -> Option<f64> + Sync + Send + '_ {
    move |x: &[f64]| evaluate_controller(&Controller::Schedule(SignalSchedule { values: x.to_vec() }), env).measure
}

/// Objective for linear investor policies in `env`.
pub fn investor_objective(env: &InvestorEnv, budget: f64) -> impl Fn(&[f64]) -> Option<f64> + Sync + Send + '_ {
    move |x: &[f64]| {
        let p = InvestorPolicy {
            kind: PolicyKind::Linear { weights: x.to_vec() },
            budget,
        };
        evaluate_investor(&p, env).measure
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(days: usize, seed: u64, measure: Measure) -> TradingEnv {
        let mut c = SimConfig::default().with_days(days).with_seed(seed);
        c.population.n_nt = 3;
        c.population.n_vi = 3;
        c.population.n_tf = 3;
        TradingEnv::new(c, 0.01, measure)
    }

    #[test]
    fn sharpe_examples() {
        assert_eq!(sharpe(&[0.01; 10], 252.0, false).unwrap(), None);
        let s = sharpe(&[0.1, -1.0 / 11.0], 252.0, false).unwrap().unwrap();
        assert!(s.abs() < 1e-15, "{s}");
        let r = [0.01, -0.005, 0.02, 0.0, 0.003];
        let d = sharpe(&r, 252.0, false).unwrap().unwrap();
        let a = sharpe(&r, 252.0, true).unwrap().unwrap();
        assert!((a - d * 252f64.sqrt()).abs() < 1e-12);
        assert!(sharpe(&[0.1], 252.0, false).is_err());
    }

    #[test]
    fn multiplier_examples() {
        assert_eq!(wealth_multiplier(&[5.0, 7.0, 5.0]).unwrap(), 1.0);
        assert_eq!(wealth_multiplier(&[5.0, 10.0]).unwrap(), 2.0);
        assert_eq!(wealth_multiplier(&[5.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(wealth_multiplier(&[0.0, 1.0]).is_err());
        assert!(wealth_multiplier(&[]).is_err());
    }

    #[test]
    fn schedule_bounds() {
        assert!(SignalSchedule::new(vec![0.5, -1.0, 1.0]).is_ok());
        assert!(SignalSchedule::new(vec![1.5]).is_err());
    }

    #[test]
    fn cash_only_schedule_earns_interest() {
        let e = env(300, 1, Measure::WealthMultiplier);
        let r = evaluate_schedule(&SignalSchedule::constant(0.0, 300).unwrap(), &e);
        assert!(r.infeasible.is_none(), "{:?}", r.infeasible);
        let expect = (1.0 + e.config.daily_interest()).powi(300);
        assert!((r.measure.unwrap() - expect).abs() < 1e-12);
        let sharpe = Measure::SharpeDaily.evaluate(&r.wealth).unwrap();
        assert_eq!(sharpe, None);
    }

    #[test]
    fn schedule_length_must_match() {
        let e = env(10, 1, Measure::WealthMultiplier);
        let r = evaluate_schedule(&SignalSchedule::constant(0.0, 9).unwrap(), &e);
        assert!(r.infeasible.is_some());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let e = env(200, 2, Measure::SharpeAnnualized);
        let s = SignalSchedule::new((0..200).map(|i| ((i as f64) * 0.1).sin()).collect()).unwrap();
        assert_eq!(evaluate_schedule(&s, &e), evaluate_schedule(&s, &e));
    }

    #[test]
    fn replaying_a_value_fund_reproduces_it() {
        let days = 400;
        let mut c = env(days, 3, Measure::WealthMultiplier).config;
        c.market.clearing_tol = 1e-13;
        let base = crate::engine::run(c.clone()).unwrap();
        let vi = c.population.n_nt; // first value investor
        let signals = base.fund_signals(vi);
        let mut path = vec![base.initial_style_wealth[1] / c.population.n_vi as f64];
        path.extend(base.fund_wealth(vi));
        let e = TradingEnv {
            config: c,
            slot: AdaptiveSlot::Replace { fund_id: vi },
            measure: Measure::WealthMultiplier,
        };
        let r = evaluate_schedule(&SignalSchedule::new(signals).unwrap(), &e);
        assert_eq!(r.wealth.len(), path.len());
        for (a, b) in r.wealth.iter().zip(&path) {
            assert!(((a - b) / b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_share_adaptive_fund_leaves_market_untouched() {
        let c = env(300, 4, Measure::WealthMultiplier).config;
        let plain = crate::engine::run(c.clone()).unwrap();
        let mut sim = Simulation::with_adaptive(
            c,
            Some(AdaptiveSlot::Added {
                wealth_share: 0.0,
                leverage: 1.0,
            }),
        )
        .unwrap();
        let ctl = Controller::Static {
            family: StaticFamily::Constant,
            params: vec![0.7],
        };
        sim.run_with(&mut AdaptiveHooks { controller: &ctl }).unwrap();
        let with = sim.into_record();
        assert_eq!(plain.days, with.days);
    }

    #[test]
    fn search_with_budget_one_returns_initial() {
        let res = optimize_search(|x| Some(-x[0]), vec![0.25], &SearchOptions::new(1, 0, SearchMode::Static)).unwrap();
        assert_eq!(res.best, vec![0.25]);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn search_finds_known_optimum() {
        let obj = |x: &[f64]| Some(-(x[0] - 0.3).powi(2));
        for seed in 0..5 {
            let res = optimize_search(obj, vec![0.0], &SearchOptions::new(200, seed, SearchMode::Static)).unwrap();
            assert!((res.best[0] - 0.3).abs() < 0.01, "seed {seed}: {:?}", res.best);
            assert_eq!(res.trace.len(), 200);
            assert!(res.trace.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far));
        }
    }

    #[test]
    fn dynamic_search_respects_bounds_and_is_deterministic() {
        let target: Vec<f64> = (0..64).map(|i| (i as f64 / 10.0).sin()).collect();
        let obj = |x: &[f64]| Some(-x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        let mut o = SearchOptions::new(300, 9, SearchMode::Dynamic);
        o.initial_step = 1.5;
        let a = optimize_search(obj, vec![0.0; 64], &o).unwrap();
        assert!(a.best.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(a.best_measure > obj(&[0.0; 64]).unwrap());
        o.workers = 3;
        assert_eq!(a, optimize_search(obj, vec![0.0; 64], &o).unwrap());
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let r = optimize_search(|_| None, vec![0.0], &SearchOptions::new(20, 0, SearchMode::Static));
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    fn investor_env(days: usize, seed: u64) -> InvestorEnv {
        let mut c = env(days, seed, Measure::WealthMultiplier).config;
        c.run.panel_stride = 0;
        InvestorEnv {
            config: c,
            capital: 1000.0,
            measure: Measure::WealthMultiplier,
        }
    }

    #[test]
    fn null_investor_earns_interest() {
        let e = investor_env(250, 5);
        let p = InvestorPolicy {
            kind: PolicyKind::Null,
            budget: 100.0,
        };
        let r = evaluate_investor(&p, &e);
        let expect = (1.0 + e.config.daily_interest()).powi(250);
        assert!((r.measure.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn return_chasing_runs_and_is_deterministic() {
        let e = investor_env(600, 6);
        let p = InvestorPolicy {
            kind: PolicyKind::ReturnChasing,
            budget: 50.0,
        };
        let a = evaluate_investor(&p, &e);
        assert!(a.infeasible.is_none(), "{:?}", a.infeasible);
        assert!(a.measure.unwrap() > 0.0);
        assert_eq!(a, evaluate_investor(&p, &e));
    }

    #[test]
    fn over_budget_policy_is_infeasible() {
        let e = investor_env(100, 7);
        let p = InvestorPolicy {
            kind: PolicyKind::Fixed {
                allocations: vec![(0, 80.0), (1, 80.0)],
            },
            budget: 100.0,
        };
        assert!(evaluate_investor(&p, &e).infeasible.is_some());
    }

    #[test]
    fn measure_names_parse() {
        assert_eq!("wealth-multiplier".parse::<Measure>().unwrap(), Measure::WealthMultiplier);
        assert_eq!("sharpe_annualized".parse::<Measure>().unwrap(), Measure::SharpeAnnualized);
        assert!("bogus".parse::<Measure>().is_err());
    }
}
