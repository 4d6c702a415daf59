use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candlenet_core::experiment::config::parse_kv;
use candlenet_core::experiment::{
    evaluate_checkpoint, independent_test, load_series, predict_for_date, run_cell, run_experiment, ticker_path, Cell,
    ExperimentConfig, Model, ReportRow, RunReport,
};
use candlenet_core::market_data::{parse_csv, serialize_csv};
use candlenet_core::nn::tensor::write_tensor_dump;
use candlenet_core::raster::{chart_file_name, encode_png, render_window, to_tensor};
use candlenet_core::synth::{momentum_series, random_walk_series};
use candlenet_core::window::{class_balance, manifest_csv, sliding_windows, DatasetSpec};
use candlenet_core::{Error, Result};
use chrono::NaiveDate;
use serde::Serialize;

use crate::CommonArgs;

/// Body of a single prediction, shared by `predict` and the server.
#[derive(Debug, Serialize)]
pub struct Answer {
    pub label: &'static str,
    pub prob: f64,
    pub window_end: String,
}

/// Defaults, then the config file, then command-line flags.
pub fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply(&parse_kv(&text)?)?;
    }
    let mut kv = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.insert(k.to_string(), v);
        }
    };
    put("data_dir", args.data_dir.as_ref().map(|p| p.display().to_string()));
    put("out_dir", args.out_dir.as_ref().map(|p| p.display().to_string()));
    put("tickers", args.tickers.clone());
    put("periods", args.period.clone());
    put("dims", args.dim.clone());
    put("volumes", args.volume.clone());
    put("classifiers", args.classifier.clone());
    put("seed", args.seed.map(|v| v.to_string()));
    put("epochs", args.epochs.map(|v| v.to_string()));
    put("lr", args.lr.map(|v| v.to_string()));
    put("batch", args.batch.map(|v| v.to_string()));
    // paths go in directly so characters like '#' survive
    let data_dir = kv.remove("data_dir");
    let out_dir = kv.remove("out_dir");
    cfg.apply(&kv)?;
    if let Some(d) = data_dir {
        cfg.data_dir = d.into();
    }
    if let Some(d) = out_dir {
        cfg.out_dir = d.into();
    }
    Ok(cfg)
}

pub fn single_cell(cfg: &ExperimentConfig) -> Result<Cell> {
    match cfg.grid[..] {
        [cell] => {
            cell.validate(cfg.horizon)?;
            Ok(cell)
        }
        _ => Err(Error::Config(format!(
            "this command needs exactly one cell; the grid has {} (narrow it with --classifier, --period, --dim, --volume)",
            cfg.grid.len()
        ))),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn ingest(args: &CommonArgs, input: &Path, ticker: &str) -> Result<()> {
    let cfg = load_config(args)?;
    let text = fs::read_to_string(input).map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let parsed = parse_csv(&text, ticker)?;
    let dest = ticker_path(&cfg.data_dir, ticker);
    write(&dest, serialize_csv(&parsed.series))?;
    println!(
        "{ticker}: {} bars {}..{}, {} rows skipped -> {}",
        parsed.series.len(),
        parsed.series.first_date().map(|d| d.to_string()).unwrap_or_default(),
        parsed.series.last_date().map(|d| d.to_string()).unwrap_or_default(),
        parsed.skipped,
        dest.display()
    );
    Ok(())
}

pub fn synth(args: &CommonArgs, ticker: &str, kind: &str, bars: usize, sigma: f64) -> Result<()> {
    let cfg = load_config(args)?;
    if bars == 0 {
        return Err(Error::Config("--bars must be >= 1".into()));
    }
    let series = match kind {
        "momentum" => momentum_series(ticker, bars, cfg.master_seed),
        "walk" => random_walk_series(ticker, bars, cfg.master_seed, sigma),
        other => return Err(Error::Config(format!("unknown synthetic kind '{other}' (momentum, walk)"))),
    };
    let dest = ticker_path(&cfg.data_dir, ticker);
    write(&dest, serialize_csv(&series))?;
    println!("{ticker}: {bars} synthetic {kind} bars -> {}", dest.display());
    Ok(())
}

/// One chart spec from the grid; the classifier axis is irrelevant here.
fn chart_spec(cfg: &ExperimentConfig) -> Result<DatasetSpec> {
    let mut specs: Vec<(usize, usize, bool)> = cfg.grid.iter().map(|c| (c.period, c.dimension, c.volume)).collect();
    specs.sort();
    specs.dedup();
    match specs[..] {
        [(p, d, v)] => {
            let spec = DatasetSpec::new(p, d, v)?.with_horizon(cfg.horizon)?;
            candlenet_core::raster::ChartLayout::new(&spec)?;
            Ok(spec)
        }
        _ => Err(Error::Config(format!(
            "render needs one chart spec; the grid has {} (set --period, --dim and --volume)",
            specs.len()
        ))),
    }
}

pub fn render(args: &CommonArgs, ticker: &str, tensors: bool) -> Result<()> {
    let cfg = load_config(args)?;
    let spec = chart_spec(&cfg)?;
    let series = load_series(&ticker_path(&cfg.data_dir, ticker))?;
    let windows = sliding_windows(&series, &spec);
    if windows.samples.is_empty() {
        return Err(Error::Data(windows.reason.unwrap_or_else(|| "no windows".into())));
    }
    let dir = cfg.out_dir.join("charts").join(ticker);
    fs::create_dir_all(&dir)?;
    let (up, down) = class_balance(&windows.samples);
    for sample in &windows.samples {
        let name = chart_file_name(ticker, sample.window_end(), &spec);
        let img = render_window(&sample.window, &spec)?;
        fs::write(dir.join(&name), encode_png(&img)?)?;
        if tensors {
            let mut f = fs::File::create(dir.join(&name).with_extension("cft"))?;
            write_tensor_dump(&mut f, &to_tensor(&img))?;
        }
    }
    fs::write(dir.join("manifest.csv"), manifest_csv(&windows.samples))?;
    println!("{ticker}: {} charts ({up} up, {down} down) -> {}", windows.samples.len(), dir.display());
    Ok(())
}

fn print_rows(rows: Vec<ReportRow>) {
    let report = RunReport { rows };
    print!("{}", report.to_table());
    for r in &report.rows {
        if let (Some(path), Some(sum)) = (&r.checkpoint, &r.checksum) {
            println!("checkpoint {} sha256 {sum}", path.display());
        }
    }
}

pub fn train(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let cell = single_cell(&cfg)?;
    cfg.validate()?;
    let row = run_cell(&cfg, &cell)?;
    eprintln!("trained {} on {} samples in {:.1}s", cell.key(), row.train_samples, row.seconds);
    print_rows(vec![row]);
    Ok(())
}

fn checkpoint_or_default(cfg: &ExperimentConfig, cell: &Cell, given: Option<PathBuf>) -> PathBuf {
    given.unwrap_or_else(|| cell.checkpoint_path(&cfg.out_dir))
}

pub fn evaluate(args: &CommonArgs, checkpoint: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(args)?;
    let cell = single_cell(&cfg)?;
    if cfg.tickers.is_empty() {
        return Err(Error::Config("no tickers configured".into()));
    }
    let path = checkpoint_or_default(&cfg, &cell, checkpoint);
    print_rows(vec![evaluate_checkpoint(&cfg, &cell, &path)?]);
    Ok(())
}

pub fn independent(args: &CommonArgs, ticker: Option<String>, checkpoint: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(args)?;
    let cell = single_cell(&cfg)?;
    let ticker = ticker
        .or_else(|| cfg.independent_ticker.clone())
        .ok_or_else(|| Error::Config("no independent ticker (use --ticker or independent_ticker)".into()))?;
    let path = checkpoint_or_default(&cfg, &cell, checkpoint);
    let row = independent_test(&path, &ticker_path(&cfg.data_dir, &ticker), &cell, &cfg.split, cfg.horizon)?;
    print_rows(vec![row]);
    Ok(())
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::Config(format!("bad date '{s}' (want YYYY-MM-DD)")))
}

pub fn predict(args: &CommonArgs, ticker: &str, date: &str, checkpoint: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(args)?;
    let cell = single_cell(&cfg)?;
    let target = parse_date(date)?;
    let spec = cell.dataset_spec(cfg.horizon)?;
    let model = Model::load(&cell, &spec, &checkpoint_or_default(&cfg, &cell, checkpoint))?;
    let series = load_series(&ticker_path(&cfg.data_dir, ticker))?;
    let p = predict_for_date(&model, &series, target, &spec)?;
    let answer = Answer { label: p.label.as_str(), prob: p.probability, window_end: p.window_end.to_string() };
    let json = serde_json::to_string(&answer).expect("plain struct serializes");
    let chart = cfg.out_dir.join("predictions").join(chart_file_name(ticker, p.window_end, &spec));
    write(&chart, encode_png(&p.chart)?)?;
    write(&chart.with_extension("json"), format!("{json}\n"))?;
    println!("{json}");
    eprintln!("chart {}", chart.display());
    Ok(())
}

pub fn grid(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let report = run_experiment(&cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("report.csv"), report.to_csv())?;
    fs::write(cfg.out_dir.join("report.txt"), report.to_table())?;
    print!("{}", report.to_table());
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} cells, {failed} failed; report in {}", report.rows.len(), cfg.out_dir.display());
    if failed == report.rows.len() {
        return Err(Error::Data(format!("all {failed} cells failed")));
    }
    Ok(())
}
