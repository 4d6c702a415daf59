//! Flat `key = value` experiment configuration.
//!
//! `[section]` headers are accepted and ignored; `#` and `;` start comments.
//! List values are comma-separated.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;

use super::{Cell, Classifier};
use crate::error::{Error, Result};
use crate::market_data::SplitSpec;
use crate::nn::{Optimizer, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub tickers: Vec<String>,
    /// Instrument evaluated over the independent date range, if any.
    pub independent_ticker: Option<String>,
    pub split: SplitSpec,
    pub grid: Vec<Cell>,
    pub train: TrainConfig,
    pub master_seed: u64,
    pub horizon: usize,
    pub knn_k: usize,
    pub forest_trees: usize,
    /// Run grid cells on the rayon pool instead of one after another.
    pub parallel_cells: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            tickers: Vec::new(),
            independent_ticker: None,
            split: SplitSpec::taiwan_indonesia(),
            grid: super::full_grid(),
            train: TrainConfig::default(),
            master_seed: 0,
            horizon: 1,
            knn_k: 5,
            forest_trees: 100,
            parallel_cells: false,
        }
    }
}

/// Parsed `key = value` pairs, later keys overriding earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn date(key: &str, v: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| Error::Config(format!("{key}: bad date '{v}'")))
}

pub fn parse_volume_flag(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "1" | "true" | "yes" | "vol" => Ok(true),
        "off" | "0" | "false" | "no" | "novol" => Ok(false),
        other => Err(Error::Config(format!("volume flag '{other}' is not on/off"))),
    }
}

impl ExperimentConfig {
    /// Applies parsed keys on top of `self`. Unknown keys are an error.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        let mut classifiers = None;
        let mut periods = None;
        let mut dims = None;
        let mut volumes = None;
        for (k, v) in kv {
            match k.as_str() {
                "data_dir" => self.data_dir = v.into(),
                "out_dir" => self.out_dir = v.into(),
                "tickers" => self.tickers = list(v),
                "independent_ticker" => self.independent_ticker = Some(v.clone()).filter(|s| !s.is_empty()),
                "train_start" => self.split.train_start = date(k, v)?,
                "train_end" => self.split.train_end = date(k, v)?,
                "test_start" => self.split.test_start = date(k, v)?,
                "test_end" => self.split.test_end = date(k, v)?,
                "indep_start" => self.split.indep_start = date(k, v)?,
                "indep_end" => self.split.indep_end = date(k, v)?,
                "classifiers" => {
                    classifiers = Some(list(v).iter().map(|s| s.parse()).collect::<Result<Vec<Classifier>>>()?)
                }
                "periods" => periods = Some(list(v).iter().map(|s| num(k, s)).collect::<Result<Vec<usize>>>()?),
                "dims" | "dimensions" => {
                    dims = Some(list(v).iter().map(|s| num(k, s)).collect::<Result<Vec<usize>>>()?)
                }
                "volumes" => volumes = Some(list(v).iter().map(|s| parse_volume_flag(s)).collect::<Result<Vec<_>>>()?),
                "epochs" => self.train.epochs = num(k, v)?,
                "lr" | "learning_rate" => self.train.learning_rate = num(k, v)?,
                "batch" | "batch_size" => self.train.batch_size = num(k, v)?,
                "optimizer" => {
                    self.train.optimizer = match v.to_ascii_lowercase().as_str() {
                        "adam" => Optimizer::adam(),
                        "sgd" => Optimizer::Sgd,
                        o => return Err(Error::Config(format!("unknown optimizer '{o}'"))),
                    }
                }
                "seed" | "master_seed" => self.master_seed = num(k, v)?,
                "horizon" => self.horizon = num(k, v)?,
                "knn_k" => self.knn_k = num(k, v)?,
                "trees" | "forest_trees" => self.forest_trees = num(k, v)?,
                "parallel_cells" => self.parallel_cells = parse_volume_flag(v)?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        if classifiers.is_some() || periods.is_some() || dims.is_some() || volumes.is_some() {
            let current = |f: fn(&Cell) -> String| {
                let mut seen: Vec<String> = Vec::new();
                for c in &self.grid {
                    let s = f(c);
                    if !seen.contains(&s) {
                        seen.push(s);
                    }
                }
                seen
            };
            let classifiers = match classifiers {
                Some(c) => c,
                None => current(|c| c.classifier.to_string()).iter().map(|s| s.parse()).collect::<Result<_>>()?,
            };
            let periods = match periods {
                Some(p) => p,
                None => current(|c| c.period.to_string()).iter().map(|s| num("periods", s)).collect::<Result<_>>()?,
            };
            let dims = match dims {
                Some(d) => d,
                None => current(|c| c.dimension.to_string()).iter().map(|s| num("dims", s)).collect::<Result<_>>()?,
            };
            let volumes = match volumes {
                Some(v) => v,
                None => {
                    current(|c| c.volume.to_string()).iter().map(|s| parse_volume_flag(s)).collect::<Result<_>>()?
                }
            };
            self.grid = super::grid(&classifiers, &periods, &dims, &volumes);
        }
        Ok(())
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if self.tickers.is_empty() {
            return Err(Error::Config("no tickers configured".into()));
        }
        self.split.validate()?;
        self.train.validate()?;
        if self.knn_k == 0 || self.forest_trees == 0 {
            return Err(Error::Config("knn_k and trees must be >= 1".into()));
        }
        for cell in &self.grid {
            cell.validate(self.horizon).map_err(|e| Error::Config(format!("cell {}: {e}", cell.key())))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&parse_kv(text)?)?;
        Ok(cfg)
    }
}
