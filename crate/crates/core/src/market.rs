//! Demand functions, market clearing and order execution.
//!
//! A fund's demand at a candidate price `p` is the target holding
//! `tanh(beta * phi(p)) * lambda * W(p) / p`, where `W(p) = C + p S - L`.
//! Value and noise signals depend on `p`; trend and adaptive signals are fixed
//! for the day. The clearing price makes aggregate target holdings plus the
//! administrator's retained inventory equal the fixed supply.

use crate::error::{Error, Result};
use crate::strategies::{signal_nt, signal_tf, signal_vi, Fund, Strategy};

pub fn smooth_signal(signal: f64, aggression: f64) -> f64 {
    (aggression * signal).tanh()
}

pub fn target_position(bounded: f64, leverage: f64, wealth: f64, price: f64) -> f64 {
    bounded * leverage * wealth / price
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SignalShape {
    /// `tanh(aggression * log2(anchor / p))`.
    LogRatio { anchor: f64, aggression: f64 },
    /// Price-independent bounded signal.
    Fixed(f64),
}

/// One fund's target holdings as a function of the unknown clearing price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandCurve {
    pub fund_id: usize,
    shape: SignalShape,
    leverage: f64,
    net_cash: f64,
    shares: f64,
}

impl DemandCurve {
    /// Curve for a base-strategy fund. `history` holds prices up to yesterday.
    pub fn for_fund(fund: &Fund, history: &[f64]) -> Result<Self> {
        let shape = match &fund.strategy {
            Strategy::Value { .. } => {
                signal_vi(fund.valuation, 1.0)?;
                SignalShape::LogRatio {
                    anchor: fund.valuation,
                    aggression: fund.aggression,
                }
            }
            Strategy::Noise { sentiment, .. } => {
                signal_nt(sentiment.level, fund.valuation, 1.0)?;
                SignalShape::LogRatio {
                    anchor: sentiment.level * fund.valuation,
                    aggression: fund.aggression,
                }
            }
            Strategy::Trend { horizon } => SignalShape::Fixed(smooth_signal(
                signal_tf(history, *horizon),
                fund.aggression,
            )),
            Strategy::Adaptive => {
                return Err(Error::Domain(format!(
                    "fund {} is adaptive; its bounded signal must be supplied",
                    fund.id
                )))
            }
        };
        Ok(Self::with_shape(fund, shape))
    }

    /// Curve for a fund whose bounded signal is chosen externally.
    pub fn fixed(fund: &Fund, bounded: f64) -> Self {
        Self::with_shape(fund, SignalShape::Fixed(bounded.clamp(-1.0, 1.0)))
    }

    /// Curve with a constant bounded signal, detached from any fund.
    pub fn constant(fund_id: usize, bounded: f64, leverage: f64, cash: f64, shares: f64, loans: f64) -> Self {
        Self {
            fund_id,
            shape: SignalShape::Fixed(bounded),
            leverage,
            net_cash: cash - loans,
            shares,
        }
    }

    fn with_shape(fund: &Fund, shape: SignalShape) -> Self {
        Self {
            fund_id: fund.id,
            shape,
            leverage: fund.leverage,
            net_cash: fund.cash - fund.loans,
            shares: fund.shares,
        }
    }

    pub fn bounded_signal(&self, price: f64) -> f64 {
        match self.shape {
            SignalShape::LogRatio { anchor, aggression } => {
                smooth_signal((anchor / price).log2(), aggression)
            }
            SignalShape::Fixed(b) => b,
        }
    }

    pub fn wealth(&self, price: f64) -> f64 {
        self.net_cash + price * self.shares
    }

    pub fn target(&self, price: f64) -> f64 {
        let b = self.bounded_signal(price);
        if b == 0.0 {
            return 0.0;
        }
        target_position(b, self.leverage, self.wealth(price), price)
    }

    pub fn excess(&self, price: f64) -> f64 {
        self.target(price) - self.shares
    }

    pub fn holdings(&self) -> f64 {
        self.shares
    }
}

/// Excess demand of a base-strategy fund at a candidate price.
pub fn excess_demand(fund: &Fund, price: f64, history: &[f64]) -> Result<f64> {
    if !(price > 0.0) {
        return Err(Error::Domain(format!("candidate price must be positive, got {price}")));
    }
    Ok(DemandCurve::for_fund(fund, history)?.excess(price))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingParams {
    /// Relative tolerance on `|sum targets + retained - Q| / Q`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ClearingParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clearing {
    pub price: f64,
    /// Aggregate-demand evaluations spent on bracketing and refinement.
    pub iterations: usize,
    pub residual: f64,
}

const MAX_PRICE_RATIO_LOG: f64 = 23.025850929940457; // ln(1e10)
const FIRST_BRACKET_STEP: f64 = 0.01;

/// Relative clearing residual at `price`.
pub fn clearing_residual(curves: &[DemandCurve], supply: f64, retained: f64, price: f64) -> f64 {
    let total: f64 = curves.iter().map(|c| c.target(price)).sum();
    (total + retained - supply) / supply
}

/// Find the price at which aggregate target holdings equal the supply not
/// retained by the administrator. The bracket grows geometrically around the
/// previous price; refinement is Brent's hybrid of bisection, secant and
/// inverse quadratic steps on log-price.
pub fn clear_market(
    curves: &[DemandCurve],
    supply: f64,
    retained: f64,
    prev_price: f64,
    params: ClearingParams,
    day: usize,
) -> Result<Clearing> {
    let mut evals = 0usize;
    let mut f = |x: f64| {
        evals += 1;
        clearing_residual(curves, supply, retained, x.exp())
    };

    let x0 = prev_price.ln();
    let f0 = f(x0);
    if f0.abs() <= params.tolerance {
        return Ok(Clearing {
            price: prev_price,
            iterations: evals,
            residual: f0.abs(),
        });
    }

    let mut samples = vec![(prev_price, f0)];
    let mut bracket = None;
    // Positive excess demand pushes the price up; search that way first.
    let first_dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    'outer: for dir in [first_dir, -first_dir] {
        let (mut x_in, mut f_in) = (x0, f0);
        let mut step = FIRST_BRACKET_STEP;
        loop {
            let reach = step.min(MAX_PRICE_RATIO_LOG);
            let x = x0 + dir * reach;
            let fx = f(x);
            samples.push((x.exp(), fx));
            if fx.is_finite() && fx.signum() != f_in.signum() {
                bracket = Some(if x < x_in { (x, fx, x_in, f_in) } else { (x_in, f_in, x, fx) });
                break 'outer;
            }
            if reach >= MAX_PRICE_RATIO_LOG {
                break;
            }
            x_in = x;
            f_in = fx;
            step *= 2.0;
        }
    }
    let Some((a, fa, b, fb)) = bracket else {
        return Err(Error::NoBracket { day, samples });
    };

    let (x, fx, iters) = brent(&mut f, a, fa, b, fb, params.tolerance, params.max_iterations);
    if fx.abs() > params.tolerance || !fx.is_finite() {
        return Err(Error::NoConvergence {
            day,
            iterations: iters,
            residual: fx.abs(),
        });
    }
    Ok(Clearing {
        price: x.exp(),
        iterations: evals,
        residual: fx.abs(),
    })
}

/// Brent's method on a sign-changing bracket; stops on `|f| <= ftol` or when
/// the bracket collapses to floating-point resolution.
fn brent(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    ftol: f64,
    max_iter: usize,
) -> (f64, f64, usize) {
    let (mut a, mut fa, mut b, mut fb) = (a, fa, b, fb);
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 0..max_iter {
        if fb.abs() <= ftol {
            return (b, fb, iter);
        }
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs().max(1.0);
        let m = 0.5 * (c - b);
        if m.abs() <= tol {
            return (b, fb, iter);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    (b, fb, max_iter)
}

/// Trade every fund to its target at the clearing price. `funds[i]` pairs with
/// `curves[i]`. Returns traded volume: half the gross turnover, counting the
/// administrator's sale as one side.
pub fn execute_orders(funds: &mut [&mut Fund], curves: &[DemandCurve], price: f64, admin_sell: f64) -> f64 {
    let deltas: Vec<f64> = funds.iter().zip(curves).map(|(f, c)| c.target(price) - f.shares).collect();
    apply_trades(funds, curves, price, admin_sell, &deltas)
}

/// Like [`execute_orders`], but rations the clearing residual so that fund
/// holdings after trading sum to exactly `float` shares. The adjustment is
/// spread over orders in proportion to their size and is bounded by the
/// clearing tolerance.
pub fn execute_cleared(
    funds: &mut [&mut Fund],
    curves: &[DemandCurve],
    price: f64,
    admin_sell: f64,
    float: f64,
) -> f64 {
    let mut deltas: Vec<f64> = funds.iter().zip(curves).map(|(f, c)| c.target(price) - f.shares).collect();
    let held: f64 = funds.iter().map(|f| f.shares).sum();
    let gap = float - held - deltas.iter().sum::<f64>();
    if gap != 0.0 && !deltas.is_empty() {
        let gross: f64 = deltas.iter().map(|d| d.abs()).sum();
        if gross > 0.0 {
            for d in deltas.iter_mut() {
                *d += gap * d.abs() / gross;
            }
        } else {
            let each = gap / deltas.len() as f64;
            for d in deltas.iter_mut() {
                *d += each;
            }
        }
    }
    apply_trades(funds, curves, price, admin_sell, &deltas)
}

fn apply_trades(funds: &mut [&mut Fund], curves: &[DemandCurve], price: f64, admin_sell: f64, deltas: &[f64]) -> f64 {
    let mut turnover = admin_sell.abs();
    for ((fund, curve), &delta) in funds.iter_mut().zip(curves).zip(deltas) {
        debug_assert_eq!(fund.id, curve.fund_id);
        fund.shares += delta;
        fund.cash -= price * delta;
        fund.bounded_signal = curve.bounded_signal(price);
        turnover += delta.abs();
    }
    0.5 * turnover
}
