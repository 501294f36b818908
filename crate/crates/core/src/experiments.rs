//! Sweeps over the initial wealth distribution of the three base styles.

use serde::Serialize;

use crate::config::{validate_simplex, SimConfig};
use crate::engine::{par_map, run, RunRecord};
use crate::error::{Error, Result};
use crate::stochastic::{derive_seed, derive_stream};
use crate::strategies::TRADING_DAYS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplexPoint {
    pub shares: [f64; 3],
}

impl SimplexPoint {
    pub fn new(shares: [f64; 3]) -> Result<Self> {
        validate_simplex(shares, "point")?;
        Ok(Self { shares })
    }

    /// Every coordinate at least `floor`.
    pub fn is_interior(&self, floor: f64) -> bool {
        self.shares.iter().all(|&w| w >= floor)
    }

    fn key(&self) -> String {
        let [a, b, c] = self.shares.map(f64::to_bits);
        format!("{a:016x}:{b:016x}:{c:016x}")
    }
}

/// Uniform points on the 2-simplex from normalized exponential draws.
pub fn sample_simplex(n: usize, seed: u64) -> Vec<SimplexPoint> {
    let mut rng = derive_stream(seed, "simplex");
    (0..n)
        .map(|_| {
            let e = [rng.exponential(), rng.exponential(), rng.exponential()];
            let s: f64 = e.iter().sum();
            let mut shares = e.map(|x| x / s);
            // absorb rounding so the coordinates sum to one
            shares[2] = 1.0 - shares[0] - shares[1];
            SimplexPoint { shares: shares.map(|x| x.max(0.0)) }
        })
        .collect()
}

/// Window used for terminal averages: the last 10,000 days, or the final
/// fifth of shorter runs.
pub fn terminal_window(days: usize) -> usize {
    (days / 5).clamp(1, 10_000)
}

/// Mean daily wealth shares over the last `window` days. The flag is set
/// when the run was shorter than the window and the whole run was used.
pub fn terminal_wealth_share(record: &RunRecord, window: usize) -> Result<([f64; 3], bool)> {
    if record.days.is_empty() {
        return Err(Error::InsufficientData("empty run".into()));
    }
    let window = window.max(1);
    let short = record.days.len() < window;
    let start = record.days.len().saturating_sub(window);
    let tail = &record.days[start..];
    let mut m = [0.0; 3];
    for d in tail {
        for (acc, w) in m.iter_mut().zip(d.wealth_shares) {
            *acc += w;
        }
    }
    Ok((m.map(|x| x / tail.len() as f64), short))
}

/// Seed of one sweep run, keyed by the point's coordinates and the
/// repetition so reordering or extending the sweep never reshuffles runs.
pub fn run_seed(master_seed: u64, point: &SimplexPoint, rep: usize) -> u64 {
    derive_seed(master_seed, &format!("sweep:{}:{rep}", point.key()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub point: SimplexPoint,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub completed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub reps: usize,
    pub days: usize,
    pub window: usize,
    pub points: Vec<PointSummary>,
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "w_nt", "w_vi", "w_tf", "mean_nt", "mean_vi", "mean_tf", "std_nt", "std_vi", "std_tf", "completed", "failed",
        ])?;
        for p in &self.points {
            let mut row: Vec<String> = Vec::with_capacity(11);
            row.extend(p.point.shares.iter().map(|v| v.to_string()));
            row.extend(p.mean.iter().map(|v| v.to_string()));
            row.extend(p.std.iter().map(|v| v.to_string()));
            row.push(p.completed.to_string());
            row.push(p.failed.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(point: SimplexPoint, outcomes: &[std::result::Result<[f64; 3], String>]) -> PointSummary {
    let ok: Vec<[f64; 3]> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    let failures: Vec<String> = outcomes.iter().filter_map(|o| o.as_ref().err().cloned()).collect();
    let n = ok.len();
    let mut mean = [f64::NAN; 3];
    let mut std = [f64::NAN; 3];
    if n > 0 {
        for s in 0..3 {
            let m = ok.iter().map(|v| v[s]).sum::<f64>() / n as f64;
            mean[s] = m;
            std[s] = if n > 1 {
                (ok.iter().map(|v| (v[s] - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
        }
    }
    PointSummary {
        point,
        mean,
        std,
        completed: n,
        failed: failures.len(),
        failures,
    }
}

/// Run `reps` simulations of `years` trading years at every point and
/// aggregate terminal wealth shares. Failed runs are excluded and counted.
pub fn run_sweep(points: &[SimplexPoint], reps: usize, years: usize, base: &SimConfig, workers: usize) -> Result<SweepResult> {
    if reps == 0 {
        return Err(Error::config("reps", "must be at least 1"));
    }
    for p in points {
        validate_simplex(p.shares, "point")?;
    }
    let days = years * TRADING_DAYS as usize;
    let window = terminal_window(days);
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let outcomes = par_map(&jobs, workers, |&(i, rep)| {
        let point = points[i];
        let mut c = base.clone().with_shares(point.shares).with_days(days);
        c.run.master_seed = run_seed(base.run.master_seed, &point, rep);
        c.run.panel_stride = 0;
        run(c)
            .map_err(|e| e.to_string())
            .and_then(|rec| terminal_wealth_share(&rec, window).map(|(s, _)| s).map_err(|e| e.to_string()))
    });
    let points = points
        .iter()
        .enumerate()
        .map(|(i, p)| summarize(*p, &outcomes[i * reps..(i + 1) * reps]))
        .collect();
    Ok(SweepResult {
        reps,
        days,
        window,
        points,
    })
}
