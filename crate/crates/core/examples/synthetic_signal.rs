//! Trains the dimension-20 CNN on a synthetic series and prints test accuracy.
//!
//! cargo run --release -p candlenet-core --example synthetic_signal -- [momentum|walk] [period] [epochs] [seed]

use std::time::Instant;

use candlenet_core::experiment::{build_cell_data, Cell, Classifier, FitOptions, Model};
use candlenet_core::market_data::SplitSpec;
use candlenet_core::nn::TrainConfig;
use candlenet_core::synth::{momentum_series, random_walk_series};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let kind = args.get(1).map(String::as_str).unwrap_or("momentum");
    let (period, epochs, seed) = (arg(2, 20) as usize, arg(3, 5) as usize, arg(4, 11));
    let n = 2000;
    let series = match kind {
        "walk" => random_walk_series("SYN", n, seed, 0.01),
        _ => momentum_series("SYN", n, seed),
    };
    let b = series.bars();
    let cut = n * 4 / 5;
    let split =
        SplitSpec::new((b[0].date, b[cut - 1].date), (b[cut].date, b[n - 1].date), (b[cut].date, b[n - 1].date))
            .unwrap();
    let cell = Cell { classifier: Classifier::Cnn, period, dimension: 20, volume: false };
    let spec = cell.dataset_spec(1).unwrap();
    let data = build_cell_data(&[series], &split, &spec).unwrap();
    let started = Instant::now();
    let opts = FitOptions { train: TrainConfig { epochs, ..TrainConfig::default() }, knn_k: 5, forest_trees: 100 };
    let model = Model::fit(&cell, &spec, &data.train, &opts, seed).unwrap();
    let test = model.evaluate(&data.test).unwrap();
    println!(
        "{kind} period {period}, {epochs} epochs: test accuracy {:.3} on {} samples ({} train), {:.1}s",
        test.accuracy(),
        data.test.len(),
        data.train.len(),
        started.elapsed().as_secs_f64()
    );
}
