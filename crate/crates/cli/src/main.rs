//! `candlenet`: data ingest, chart rendering, the experiment grid and a
//! small JSON prediction server.

mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use candlenet_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "candlenet", version, about = "Candlestick-chart direction classifiers")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Flags override the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated training tickers.
    #[arg(long, global = true)]
    pub tickers: Option<String>,
    /// Trading days per window; comma-separated for `grid`.
    #[arg(long, global = true)]
    pub period: Option<String>,
    /// Chart width and height in pixels; comma-separated for `grid`.
    #[arg(long, global = true)]
    pub dim: Option<String>,
    /// Volume panel on/off; comma-separated for `grid`.
    #[arg(long, global = true)]
    pub volume: Option<String>,
    /// cnn, rf or knn; comma-separated for `grid`.
    #[arg(long, global = true)]
    pub classifier: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a raw OHLCV CSV and store it as <data-dir>/<TICKER>.csv.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        ticker: String,
    },
    /// Write a synthetic series as <data-dir>/<TICKER>.csv.
    Synth {
        #[arg(long)]
        ticker: String,
        /// momentum or walk
        #[arg(long, default_value = "momentum")]
        kind: String,
        #[arg(long, default_value_t = 2000)]
        bars: usize,
        /// Daily log-return sd for `walk`.
        #[arg(long, default_value_t = 0.01)]
        sigma: f64,
    },
    /// Render every window of a ticker to PNG plus a label manifest.
    Render {
        #[arg(long)]
        ticker: String,
        /// Also write CFT1 tensor dumps next to the images.
        #[arg(long)]
        tensors: bool,
    },
    /// Train one grid cell and report its test-split metrics.
    Train,
    /// Evaluate a stored checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a stored checkpoint on an independent ticker.
    Independent {
        #[arg(long)]
        ticker: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Predict the direction for one target date.
    Predict {
        #[arg(long)]
        ticker: String,
        /// YYYY-MM-DD
        #[arg(long)]
        date: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve predictions over HTTP from checkpoints in --out-dir.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Run the whole configured grid and write report.csv and report.txt.
    Grid,
}

/// 1 for configuration problems, 2 for bad or missing data, 3 otherwise.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape { .. } => 1,
        Error::Format(_) | Error::Row { .. } | Error::Data(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest { input, ticker } => commands::ingest(&cli.common, &input, &ticker),
        Command::Synth { ticker, kind, bars, sigma } => commands::synth(&cli.common, &ticker, &kind, bars, sigma),
        Command::Render { ticker, tensors } => commands::render(&cli.common, &ticker, tensors),
        Command::Train => commands::train(&cli.common),
        Command::Evaluate { checkpoint } => commands::evaluate(&cli.common, checkpoint),
        Command::Independent { ticker, checkpoint } => commands::independent(&cli.common, ticker, checkpoint),
        Command::Predict { ticker, date, checkpoint } => commands::predict(&cli.common, &ticker, &date, checkpoint),
        Command::Serve { port, host } => serve::run(&cli.common, &host, port),
        Command::Grid => commands::grid(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
