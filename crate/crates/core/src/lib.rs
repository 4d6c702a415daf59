//! Candlestick-chart stock direction classification.
//!
//! The pipeline turns OHLCV history into labeled sliding windows
//! ([`window`]), draws each window as a small candlestick chart
//! ([`raster`]) and classifies the charts with a from-scratch CNN ([`nn`])
//! or with Random Forest / K-D-tree kNN baselines ([`classic`]).
//! [`experiment`] runs grids of those configurations and reports the
//! statistics from [`metrics`].

pub mod classic;
pub mod error;
pub mod experiment;
pub mod market_data;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod seed;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use market_data::{parse_csv, split, Bar, Series, SplitSpec};
pub use metrics::{confusion, ConfusionMatrix, Metrics};
pub use raster::{encode_png, render_window, to_tensor, ChartImage, ChartLayout};
pub use window::{label_direction, sliding_windows, DatasetSpec, Label, LabeledSample};
