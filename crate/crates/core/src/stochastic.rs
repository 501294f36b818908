//! Seeded random streams and the two exogenous processes driving the market:
//! an autocorrelated geometric dividend process and a log-space
//! Ornstein-Uhlenbeck sentiment process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A named random stream derived from a master seed.
///
/// The generator seed is the SHA-256 digest of the little-endian master seed
/// followed by the UTF-8 stream id, so streams are stable across platforms and
/// independent of the order in which they are created.
#[derive(Debug, Clone)]
pub struct RngStream {
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in the inclusive range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> u32 {
        self.rng.random_range(lo..=hi)
    }

    pub fn exponential(&mut self) -> f64 {
        // 1 - U lies in (0, 1], so the log is finite.
        -(1.0 - self.uniform()).ln()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }
}

pub fn derive_stream(master_seed: u64, stream_id: &str) -> RngStream {
    RngStream {
        stream_id: stream_id.to_owned(),
        rng: ChaCha8Rng::from_seed(derive_seed_bytes(master_seed, stream_id)),
    }
}

/// 64-bit seed derived from a master seed and a label; used for per-run seeds
/// in ensembles and sweeps.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    let bytes = derive_seed_bytes(master_seed, label);
    u64::from_le_bytes(bytes[..8].try_into().expect("digest is 32 bytes"))
}

fn derive_seed_bytes(master_seed: u64, label: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.finalize().into()
}

/// Daily dividend following a geometric process whose log-shocks are AR(1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DividendProcess {
    pub dividend: f64,
    /// Per-day log growth rate.
    pub growth: f64,
    /// Per-day volatility of the log dividend.
    pub volatility: f64,
    /// Autocorrelation of the standardized shock carrier, in `[0, 1)`.
    pub autocorrelation: f64,
    /// AR(1) shock carrier.
    pub noise_state: f64,
}

impl DividendProcess {
    pub fn new(dividend: f64, growth: f64, volatility: f64, autocorrelation: f64) -> Self {
        Self {
            dividend,
            growth,
            volatility,
            autocorrelation,
            noise_state: 0.0,
        }
    }
}

pub fn step_dividend(proc: DividendProcess, shock: f64) -> DividendProcess {
    debug_assert!(proc.dividend > 0.0);
    let rho = proc.autocorrelation;
    let noise_state = rho * proc.noise_state + (1.0 - rho * rho).sqrt() * shock;
    DividendProcess {
        dividend: proc.dividend * (proc.growth + proc.volatility * noise_state).exp(),
        noise_state,
        ..proc
    }
}

/// Mean-reverting sentiment level `X > 0`, with OU dynamics on `ln X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuProcess {
    pub level: f64,
    pub mean: f64,
    /// Per-day reversion speed, strictly positive.
    pub reversion: f64,
    /// Per-day volatility of `ln X`.
    pub volatility: f64,
}

impl OuProcess {
    pub fn new(level: f64, mean: f64, reversion: f64, volatility: f64) -> Self {
        Self {
            level,
            mean,
            reversion,
            volatility,
        }
    }

    /// Standard deviation of `ln X` under the stationary law.
    pub fn stationary_std(&self) -> f64 {
        self.volatility / (2.0 * self.reversion).sqrt()
    }
}

/// Exact one-day transition of the OU process on `ln X`.
pub fn step_ou(proc: OuProcess, shock: f64) -> OuProcess {
    debug_assert!(proc.level > 0.0 && proc.reversion > 0.0);
    let theta = proc.reversion;
    let decay = (-theta).exp();
    let log_mean = proc.mean.ln();
    let diffusion = proc.volatility * ((1.0 - (-2.0 * theta).exp()) / (2.0 * theta)).sqrt();
    let y = log_mean + (proc.level.ln() - log_mean) * decay + diffusion * shock;
    OuProcess {
        level: y.exp(),
        ..proc
    }
}
