//! Synthetic OHLCV generators for experiments and tests.
//!
//! [`momentum_series`] trends up and down in regimes of fixed length, so the
//! next day's direction is predictable from the recent chart and the turn
//! points are predictable from a long enough window.
//! [`random_walk_series`] is a zero-drift geometric walk with no signal.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::market_data::{Bar, Series};

/// `n` consecutive weekdays starting at `start` (or the next weekday after it).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Parameters of the regime-switching drift generator.
#[derive(Debug, Clone, Copy)]
pub struct MomentumParams {
    /// Absolute daily log drift inside a regime.
    pub amplitude: f64,
    /// Daily log-return noise.
    pub noise: f64,
    /// Regime length range in trading days, inclusive.
    pub min_run: usize,
    pub max_run: usize,
}

impl Default for MomentumParams {
    fn default() -> Self {
        MomentumParams { amplitude: 0.01, noise: 0.004, min_run: 12, max_run: 12 }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct BarMaker {
    rng: ChaCha8Rng,
    volume: LogNormal<f64>,
    close: f64,
    dates: std::vec::IntoIter<NaiveDate>,
}

impl BarMaker {
    fn new(seed: u64, n: usize) -> Self {
        BarMaker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            volume: LogNormal::new(13.8, 0.4).expect("valid lognormal"),
            close: 100.0,
            dates: business_days(default_start(), n).into_iter(),
        }
    }

    fn next_bar(&mut self, log_return: f64) -> Bar {
        let prev = self.close;
        let close = prev * log_return.exp();
        let open = prev * (0.002 * gauss(&mut self.rng)).exp();
        let high = open.max(close) * (0.004 * gauss(&mut self.rng).abs()).exp();
        let low = open.min(close) * (-0.004 * gauss(&mut self.rng).abs()).exp();
        let volume = self.volume.sample(&mut self.rng).round() as u64;
        self.close = close;
        let date = self.dates.next().expect("enough dates");
        Bar { date, open, high, low, close, volume }
    }
}

/// Prices whose drift alternates between `+amplitude` and `-amplitude`
/// in runs of `min_run..=max_run` days, starting at a random point of a run.
///
/// Returns the series and the drift in force on each day, which the
/// acceptance suite uses to report the best achievable accuracy.
pub fn momentum_series_with_drift(ticker: &str, n: usize, seed: u64, params: MomentumParams) -> (Series, Vec<f64>) {
    assert!(params.min_run >= 1 && params.min_run <= params.max_run, "invalid run range");
    let mut maker = BarMaker::new(seed, n);
    let mut sign = if maker.rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut left = maker.rng.random_range(1..=params.max_run);
    let mut bars = Vec::with_capacity(n);
    let mut drifts = Vec::with_capacity(n);
    for _ in 0..n {
        let drift = sign * params.amplitude;
        let r = drift + params.noise * gauss(&mut maker.rng);
        bars.push(maker.next_bar(r));
        drifts.push(drift);
        left -= 1;
        if left == 0 {
            sign = -sign;
            left = maker.rng.random_range(params.min_run..=params.max_run);
        }
    }
    (Series::new(ticker, bars).expect("generated bars are valid"), drifts)
}

pub fn momentum_series(ticker: &str, n: usize, seed: u64) -> Series {
    momentum_series_with_drift(ticker, n, seed, MomentumParams::default()).0
}

/// Zero-drift geometric random walk with daily log-return sd `sigma`.
pub fn random_walk_series(ticker: &str, n: usize, seed: u64, sigma: f64) -> Series {
    let mut maker = BarMaker::new(seed, n);
    let bars = (0..n)
        .map(|_| {
            let r = sigma * gauss(&mut maker.rng);
            maker.next_bar(r)
        })
        .collect();
    Series::new(ticker, bars).expect("generated bars are valid")
}
