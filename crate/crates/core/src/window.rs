//! Sliding windows over a series and next-day direction labels.

use std::fmt;
use std::fmt::Write as _;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::{Bar, Series};

/// How samples are cut from a series and drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DatasetSpec {
    /// Trading days per window.
    pub period: usize,
    /// Chart side length in pixels.
    pub dimension: usize,
    pub volume_panel: bool,
    /// Label look-ahead in trading days.
    pub horizon: usize,
}

impl DatasetSpec {
    pub fn new(period: usize, dimension: usize, volume_panel: bool) -> Result<Self> {
        let spec = DatasetSpec { period, dimension, volume_panel, horizon: 1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config(format!("period must be >= 2, got {}", self.period)));
        }
        if self.dimension < self.period {
            return Err(Error::Config(format!("dimension {} smaller than period {}", self.dimension, self.period)));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Up,
    Down,
}

impl Label {
    /// Class index used by the classifiers: Down = 0, Up = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Down => 0,
            Label::Up => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 1 {
            Label::Up
        } else {
            Label::Down
        }
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Up => Label::Down,
            Label::Down => Label::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Up => "up",
            Label::Down => "down",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Up iff the future close is strictly above the last window close.
pub fn label_direction(window_last_close: f64, future_close: f64) -> Label {
    if future_close > window_last_close {
        Label::Up
    } else {
        Label::Down
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub ticker: String,
    pub window: Vec<Bar>,
    pub label: Label,
    pub label_date: NaiveDate,
}

impl LabeledSample {
    pub fn window_start(&self) -> NaiveDate {
        self.window[0].date
    }

    pub fn window_end(&self) -> NaiveDate {
        self.window[self.window.len() - 1].date
    }
}

/// Samples cut from one series. `reason` is set when the series was too short.
#[derive(Debug, Clone, Default)]
pub struct Windows {
    pub samples: Vec<LabeledSample>,
    pub reason: Option<String>,
}

/// Stride-1 windows of `spec.period` bars, each labeled from the bar
/// `spec.horizon` trading days after the window's last bar.
pub fn sliding_windows(series: &Series, spec: &DatasetSpec) -> Windows {
    let bars = series.bars();
    let need = spec.period + spec.horizon;
    if bars.len() < need {
        return Windows {
            samples: Vec::new(),
            reason: Some(format!(
                "{}: {} bars, need at least {} (period {} + horizon {})",
                series.ticker(),
                bars.len(),
                need,
                spec.period,
                spec.horizon
            )),
        };
    }
    let samples = (0..=bars.len() - need)
        .map(|i| {
            let window = bars[i..i + spec.period].to_vec();
            let last = window[spec.period - 1];
            let future = bars[i + spec.period + spec.horizon - 1];
            LabeledSample {
                ticker: series.ticker().to_string(),
                label: label_direction(last.close, future.close),
                label_date: future.date,
                window,
            }
        })
        .collect();
    Windows { samples, reason: None }
}

/// (up, down) counts.
pub fn class_balance(samples: &[LabeledSample]) -> (usize, usize) {
    let up = samples.iter().filter(|s| s.label == Label::Up).count();
    (up, samples.len() - up)
}

/// Audit manifest: `ticker,window_start,window_end,label_date,label`.
pub fn manifest_csv(samples: &[LabeledSample]) -> String {
    let mut out = String::from("ticker,window_start,window_end,label_date,label\n");
    for s in samples {
        let _ = writeln!(out, "{},{},{},{},{}", s.ticker, s.window_start(), s.window_end(), s.label_date, s.label);
    }
    out
}
