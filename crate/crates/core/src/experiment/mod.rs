//! Experiment grid: datasets per split, training, evaluation and reports.

pub mod config;
pub mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;

pub use config::ExperimentConfig;
pub use report::{ReportRow, RunReport};

use crate::classic::container::{decode_model, encode_model, ClassicModel, KnnModel};
use crate::classic::{knn_classify, FeatureMatrix, Forest, ForestParams, KdTree};
use crate::error::{Error, Result};
use crate::market_data::{parse_csv, split, Series, SplitSpec};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::nn::checkpoint::{apply_weights, decode_weights, encode_weights};
use crate::nn::train::{predict, predict_batch};
use crate::nn::{build_table2_network, train, Network, Tensor, TrainConfig};
use crate::raster::{render_window, to_tensor, ChartImage};
use crate::seed::{keyed_seed, mix, sha256_hex};
use crate::window::{sliding_windows, DatasetSpec, Label, LabeledSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Classifier {
    Cnn,
    RandomForest,
    Knn,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Cnn => "cnn",
            Classifier::RandomForest => "rf",
            Classifier::Knn => "knn",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Classifier::Cnn),
            "rf" | "forest" | "random_forest" | "randomforest" => Ok(Classifier::RandomForest),
            "knn" => Ok(Classifier::Knn),
            other => Err(Error::Config(format!("unknown classifier '{other}' (cnn, rf, knn)"))),
        }
    }
}

/// One grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub classifier: Classifier,
    pub period: usize,
    pub dimension: usize,
    pub volume: bool,
}

impl Cell {
    pub fn dataset_spec(&self, horizon: usize) -> Result<DatasetSpec> {
        DatasetSpec::new(self.period, self.dimension, self.volume)?.with_horizon(horizon)
    }

    /// `cnn_20_50_novol`; also the checkpoint file stem.
    pub fn key(&self) -> String {
        format!("{}_{}_{}_{}", self.classifier, self.period, self.dimension, if self.volume { "vol" } else { "novol" })
    }

    pub fn checkpoint_path(&self, out_dir: &Path) -> PathBuf {
        let ext = match self.classifier {
            Classifier::Cnn => "cfw",
            _ => "cfm",
        };
        out_dir.join(format!("{}.{ext}", self.key()))
    }

    /// Seed for this cell alone, so adding cells never changes another cell's results.
    pub fn seed(&self, master: u64) -> u64 {
        keyed_seed(master, &self.key())
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let spec = self.dataset_spec(horizon)?;
        crate::raster::ChartLayout::new(&spec)?;
        if self.classifier == Classifier::Cnn {
            build_table2_network(&spec)?;
        }
        Ok(())
    }
}

pub const PAPER_PERIODS: [usize; 3] = [5, 10, 20];
pub const PAPER_DIMENSIONS: [usize; 2] = [20, 50];

pub fn grid(classifiers: &[Classifier], periods: &[usize], dims: &[usize], volumes: &[bool]) -> Vec<Cell> {
    let mut out = Vec::new();
    for &classifier in classifiers {
        for &period in periods {
            for &dimension in dims {
                for &volume in volumes {
                    out.push(Cell { classifier, period, dimension, volume });
                }
            }
        }
    }
    out
}

/// All classifier × period × dimension × volume combinations (36 cells).
pub fn full_grid() -> Vec<Cell> {
    grid(
        &[Classifier::Cnn, Classifier::RandomForest, Classifier::Knn],
        &PAPER_PERIODS,
        &PAPER_DIMENSIONS,
        &[true, false],
    )
}

/// Rendered samples ready for a classifier.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub inputs: Vec<Tensor<f32>>,
    pub labels: Vec<Label>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn render_samples(samples: Vec<LabeledSample>, spec: &DatasetSpec) -> Result<Dataset> {
    let inputs = samples
        .par_iter()
        .map(|s| render_window(&s.window, spec).map(|img| to_tensor(&img)))
        .collect::<Result<Vec<_>>>()?;
    let labels = samples.iter().map(|s| s.label).collect();
    Ok(Dataset { samples, inputs, labels })
}

pub fn load_series(path: &Path) -> Result<Series> {
    let ticker = path.file_stem().and_then(|s| s.to_str()).unwrap_or("UNKNOWN").to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(parse_csv(&text, &ticker)?.series)
}

pub fn ticker_path(data_dir: &Path, ticker: &str) -> PathBuf {
    data_dir.join(format!("{ticker}.csv"))
}

/// Train and test datasets for one cell, windowed inside each split.
pub struct CellData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Fails if any training sample's label date falls after `train_end`.
pub fn leakage_audit(samples: &[LabeledSample], split: &SplitSpec) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.label_date > split.train_end) {
        return Err(Error::Data(format!(
            "leakage: {} sample ending {} is labeled from {} after train_end {}",
            s.ticker,
            s.window_end(),
            s.label_date,
            split.train_end
        )));
    }
    Ok(())
}

pub fn build_cell_data(series: &[Series], split_spec: &SplitSpec, spec: &DatasetSpec) -> Result<CellData> {
    let mut train_samples = Vec::new();
    let mut test_samples = Vec::new();
    for s in series {
        let parts = split(s, split_spec)?;
        train_samples.extend(sliding_windows(&parts.train, spec).samples);
        test_samples.extend(sliding_windows(&parts.test, spec).samples);
    }
    leakage_audit(&train_samples, split_spec)?;
    if train_samples.is_empty() {
        return Err(Error::Data("no training samples in the train range".into()));
    }
    if test_samples.is_empty() {
        return Err(Error::Data("no test samples in the test range".into()));
    }
    Ok(CellData { train: render_samples(train_samples, spec)?, test: render_samples(test_samples, spec)? })
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cnn(Network<f32>),
    Classic(ClassicModel),
}

/// Training knobs shared by every cell of a run.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub train: TrainConfig,
    pub knn_k: usize,
    pub forest_trees: usize,
}

impl From<&ExperimentConfig> for FitOptions {
    fn from(c: &ExperimentConfig) -> Self {
        FitOptions { train: c.train, knn_k: c.knn_k, forest_trees: c.forest_trees }
    }
}

impl Model {
    pub fn fit(cell: &Cell, spec: &DatasetSpec, data: &Dataset, opts: &FitOptions, seed: u64) -> Result<Model> {
        match cell.classifier {
            Classifier::Cnn => {
                let net = Network::init(&build_table2_network(spec)?, mix(seed, &[1]))?;
                let cfg = TrainConfig { dropout_seed: mix(seed, &[2]), shuffle_seed: mix(seed, &[3]), ..opts.train };
                Ok(Model::Cnn(train(net, &data.inputs, &data.labels, &cfg)?.network))
            }
            Classifier::RandomForest => {
                let x = FeatureMatrix::from_tensors(&data.inputs)?;
                let params = ForestParams { n_trees: opts.forest_trees, ..ForestParams::default() };
                Ok(Model::Classic(ClassicModel::Forest(Forest::fit(&x, &data.labels, &params, mix(seed, &[4]))?)))
            }
            Classifier::Knn => {
                let x = FeatureMatrix::from_tensors(&data.inputs)?;
                let k = opts.knn_k.min(x.rows());
                let tree = KdTree::build(x)?;
                Ok(Model::Classic(ClassicModel::Knn(KnnModel { tree, labels: data.labels.clone(), k })))
            }
        }
    }

    /// Predicted label and the model's confidence in it.
    pub fn predict(&self, input: &Tensor<f32>) -> Result<(Label, f64)> {
        match self {
            Model::Cnn(net) => {
                let (label, p) = predict(net, input)?;
                Ok((label, p[label.index()] as f64))
            }
            Model::Classic(ClassicModel::Forest(f)) => {
                if input.len() != f.n_features {
                    return Err(Error::Shape {
                        expected: format!("{} features", f.n_features),
                        found: format!("{}", input.len()),
                    });
                }
                Ok(f.predict(input.data()))
            }
            Model::Classic(ClassicModel::Knn(m)) => {
                let (label, neighbors) = knn_classify(&m.tree, &m.labels, input.data(), m.k)?;
                let agree = neighbors.iter().filter(|n| m.labels[n.index] == label).count();
                Ok((label, agree as f64 / neighbors.len() as f64))
            }
        }
    }

    pub fn predict_all(&self, inputs: &[Tensor<f32>]) -> Result<Vec<Label>> {
        match self {
            Model::Cnn(net) => Ok(predict_batch(net, inputs)?.into_iter().map(|(l, _)| l).collect()),
            _ => inputs.par_iter().map(|x| self.predict(x).map(|(l, _)| l)).collect(),
        }
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<ConfusionMatrix> {
        if data.is_empty() {
            return Err(Error::Data("nothing to evaluate".into()));
        }
        confusion(&data.labels, &self.predict_all(&data.inputs)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Model::Cnn(net) => encode_weights(net),
            Model::Classic(m) => encode_model(m),
        }
    }

    /// Loads a checkpoint for `cell`, checking it matches the cell's architecture.
    pub fn decode(cell: &Cell, spec: &DatasetSpec, bytes: &[u8]) -> Result<Model> {
        let expected_features = spec.dimension * spec.dimension * 3;
        match cell.classifier {
            Classifier::Cnn => {
                let mut net = Network::init(&build_table2_network(spec)?, 0)?;
                apply_weights(&mut net, decode_weights(bytes)?)?;
                Ok(Model::Cnn(net))
            }
            Classifier::RandomForest | Classifier::Knn => {
                let m = decode_model(bytes)?;
                let (kind_ok, features) = match &m {
                    ClassicModel::Forest(f) => (cell.classifier == Classifier::RandomForest, f.n_features),
                    ClassicModel::Knn(k) => (cell.classifier == Classifier::Knn, k.tree.points().cols()),
                };
                if !kind_ok {
                    return Err(Error::Checkpoint(format!("checkpoint is not a {} model", cell.classifier)));
                }
                if features != expected_features {
                    return Err(Error::Shape {
                        expected: format!("{expected_features} features ({0}x{0}x3)", spec.dimension),
                        found: format!("{features} features"),
                    });
                }
                Ok(Model::Classic(m))
            }
        }
    }

    pub fn load(cell: &Cell, spec: &DatasetSpec, path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        Self::decode(cell, spec, &bytes)
    }
}

/// Trains one cell on the train split, writes its checkpoint and evaluates on the test split.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<ReportRow> {
    let start = Instant::now();
    let spec = cell.dataset_spec(config.horizon)?;
    let series =
        config.tickers.iter().map(|t| load_series(&ticker_path(&config.data_dir, t))).collect::<Result<Vec<_>>>()?;
    let data = build_cell_data(&series, &config.split, &spec)?;
    let model = Model::fit(cell, &spec, &data.train, &FitOptions::from(config), cell.seed(config.master_seed))?;
    let cm = model.evaluate(&data.test)?;
    fs::create_dir_all(&config.out_dir)?;
    let path = cell.checkpoint_path(&config.out_dir);
    let bytes = model.encode();
    fs::write(&path, &bytes)?;
    Ok(ReportRow {
        cell: *cell,
        confusion: Some(cm),
        train_samples: data.train.len(),
        test_samples: data.test.len(),
        seconds: start.elapsed().as_secs_f64(),
        checkpoint: Some(path),
        checksum: Some(sha256_hex(&bytes)),
        error: None,
    })
}

/// Runs every grid cell. Cell failures become error rows; only an invalid
/// configuration aborts before any work.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let run = |cell: &Cell| run_cell(config, cell).unwrap_or_else(|e| ReportRow::failed(*cell, e.to_string()));
    let rows = if config.parallel_cells {
        config.grid.par_iter().map(run).collect()
    } else {
        config.grid.iter().map(run).collect()
    };
    Ok(RunReport { rows })
}

/// Evaluates a stored checkpoint on the test split of the configured tickers.
pub fn evaluate_checkpoint(config: &ExperimentConfig, cell: &Cell, checkpoint: &Path) -> Result<ReportRow> {
    let start = Instant::now();
    let spec = cell.dataset_spec(config.horizon)?;
    let bytes = fs::read(checkpoint).map_err(|e| Error::Data(format!("{}: {e}", checkpoint.display())))?;
    let model = Model::decode(cell, &spec, &bytes)?;
    let mut samples = Vec::new();
    for t in &config.tickers {
        let series = load_series(&ticker_path(&config.data_dir, t))?;
        samples.extend(sliding_windows(&split(&series, &config.split)?.test, &spec).samples);
    }
    let data = render_samples(samples, &spec)?;
    let cm = model.evaluate(&data)?;
    Ok(ReportRow {
        cell: *cell,
        confusion: Some(cm),
        train_samples: 0,
        test_samples: data.len(),
        seconds: start.elapsed().as_secs_f64(),
        checkpoint: Some(checkpoint.to_path_buf()),
        checksum: Some(sha256_hex(&bytes)),
        error: None,
    })
}

/// Evaluates a checkpoint on a series over `[start, end]` without training.
pub fn evaluate_range(
    model: &Model,
    series: &Series,
    spec: &DatasetSpec,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(ConfusionMatrix, usize)> {
    let windows = sliding_windows(&series.range(start, end), spec);
    if windows.samples.is_empty() {
        return Err(Error::Data(format!(
            "empty evaluation: {}",
            windows.reason.unwrap_or_else(|| "no windows in range".into())
        )));
    }
    let data = render_samples(windows.samples, spec)?;
    Ok((model.evaluate(&data)?, data.len()))
}

/// Evaluation-only run of a stored checkpoint on an independent instrument.
pub fn independent_test(
    checkpoint: &Path,
    series_file: &Path,
    cell: &Cell,
    split_spec: &SplitSpec,
    horizon: usize,
) -> Result<ReportRow> {
    let start = Instant::now();
    let spec = cell.dataset_spec(horizon)?;
    let bytes = fs::read(checkpoint).map_err(|e| Error::Data(format!("{}: {e}", checkpoint.display())))?;
    let model = Model::decode(cell, &spec, &bytes)?;
    let series = load_series(series_file)?;
    let (cm, n) = evaluate_range(&model, &series, &spec, split_spec.indep_start, split_spec.indep_end)?;
    Ok(ReportRow {
        cell: *cell,
        confusion: Some(cm),
        train_samples: 0,
        test_samples: n,
        seconds: start.elapsed().as_secs_f64(),
        checkpoint: Some(checkpoint.to_path_buf()),
        checksum: Some(sha256_hex(&bytes)),
        error: None,
    })
}

/// Answer for a single target date.
#[derive(Debug, Clone, PartialEq)]
pub struct DatePrediction {
    pub label: Label,
    pub probability: f64,
    pub window_end: NaiveDate,
    pub chart: ChartImage,
}

/// Predicts the direction for `target` from the `period` trading days before it.
pub fn predict_for_date(
    model: &Model,
    series: &Series,
    target: NaiveDate,
    spec: &DatasetSpec,
) -> Result<DatePrediction> {
    let prior: Vec<_> = series.bars().iter().take_while(|b| b.date < target).copied().collect();
    if prior.len() < spec.period {
        return Err(Error::Data(format!(
            "insufficient history before {target}: need {} trading days, have {}",
            spec.period,
            prior.len()
        )));
    }
    let window = &prior[prior.len() - spec.period..];
    let chart = render_window(window, spec)?;
    let (label, probability) = model.predict(&to_tensor(&chart))?;
    Ok(DatePrediction { label, probability, window_end: window[window.len() - 1].date, chart })
}
