//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod gradcheck;

use candlenet_core::market_data::Bar;
use candlenet_core::raster::{ChartImage, BACKGROUND, BEARISH, BULLISH};
use chrono::NaiveDate;

pub fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Two bars over a 90..110 range on a 20x20 chart without volume.
pub fn golden_window() -> Vec<Bar> {
    vec![
        Bar::new(day(2020, 1, 6), 99.0, 110.0, 90.0, 105.0, 1000).unwrap(),
        Bar::new(day(2020, 1, 7), 105.0, 108.0, 95.0, 96.0, 2000).unwrap(),
    ]
}

/// The golden chart worked out by hand: 19 rows span 20 price units, so a
/// price p lands on row round((110 - p) * 0.95). Candles are 9 px wide
/// with a 1 px gap; wicks sit at columns 4 and 14.
///
/// bar 0 (green): body rows 5..=10 (105 -> 4.75, 99 -> 10.45), wick 0..=19.
/// bar 1 (red):   body rows 5..=13 (105 -> 4.75, 96 -> 13.3), wick 2..=14
///                (108 -> 1.9, 95 -> 14.25).
pub fn golden_pixels() -> Vec<[u8; 3]> {
    let mut px = vec![BACKGROUND; 400];
    let mut paint = |rows: std::ops::RangeInclusive<usize>, cols: std::ops::Range<usize>, c: [u8; 3]| {
        for r in rows {
            for col in cols.clone() {
                px[r * 20 + col] = c;
            }
        }
    };
    paint(0..=19, 4..5, BULLISH);
    paint(5..=10, 0..9, BULLISH);
    paint(2..=14, 14..15, BEARISH);
    paint(5..=13, 10..19, BEARISH);
    px
}

pub fn pixels(img: &ChartImage) -> Vec<[u8; 3]> {
    img.raw().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Renders the map as text for failure messages: g, r, k or '.'.
pub fn ascii(px: &[[u8; 3]], width: usize) -> String {
    px.chunks(width)
        .map(|row| {
            row.iter()
                .map(|p| match *p {
                    BULLISH => 'g',
                    BEARISH => 'r',
                    BACKGROUND => '.',
                    _ => 'k',
                })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Naive 3x3 same-padded convolution written straight from the definition.
pub fn naive_conv(
    input: &[f64],
    (h, w, cin): (usize, usize, usize),
    kernels: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for o in 0..cout {
                let mut acc = bias[o];
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let (iy, ix) = (y + ky - 1, x + kx - 1);
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for c in 0..cin {
                            let v = input[(iy as usize * w + ix as usize) * cin + c];
                            let k = kernels[((ky as usize * 3 + kx as usize) * cin + c) * cout + o];
                            acc += v * k;
                        }
                    }
                }
                out[(y as usize * w + x as usize) * cout + o] = acc;
            }
        }
    }
    out
}

/// Brute-force 2x2 block max with floor semantics.
pub fn naive_pool(input: &[f64], (h, w, c): (usize, usize, usize)) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(input[((2 * y + dy) * w + 2 * x + dx) * c + ch]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

/// k nearest by linear scan, ties by lower index.
pub fn linear_knn(points: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d: f64 = p.iter().zip(query).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            (i, d)
        })
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

use candlenet_core::nn::{build_table2_network, predict, Network, Tensor, TrainConfig, Trainer};
use candlenet_core::raster::{render_window, to_tensor};
use candlenet_core::synth::random_walk_series;
use candlenet_core::window::{sliding_windows, DatasetSpec, Label};

/// 16 up and 16 down rendered 20x20 samples from a random walk.
pub fn balanced_32() -> (Vec<Tensor<f32>>, Vec<Label>) {
    let spec = DatasetSpec::new(5, 20, false).unwrap();
    let s = random_walk_series("FIT", 200, 21, 0.01);
    let samples = sliding_windows(&s, &spec).samples;
    let mut out = (Vec::new(), Vec::new());
    for want in [Label::Up, Label::Down] {
        for s in samples.iter().filter(|s| s.label == want).take(16) {
            out.0.push(to_tensor(&render_window(&s.window, &spec).unwrap()));
            out.1.push(s.label);
        }
    }
    assert_eq!(out.1.len(), 32);
    out
}

pub fn eval_accuracy(net: &Network<f32>, inputs: &[Tensor<f32>], labels: &[Label]) -> f64 {
    let hits = inputs.iter().zip(labels).filter(|(x, &y)| predict(net, x).unwrap().0 == y).count();
    hits as f64 / labels.len() as f64
}

/// Trains the dimension-20 network on [`balanced_32`] and returns the first
/// epoch (1-based) at which eval-mode training accuracy reaches 100%.
pub fn overfit_smoke(max_epochs: usize) -> Result<(usize, Network<f32>), String> {
    let (inputs, labels) = balanced_32();
    let spec = DatasetSpec::new(5, 20, false).unwrap();
    let net = Network::init(&build_table2_network(&spec).unwrap(), 3).unwrap();
    let cfg =
        TrainConfig { batch_size: 8, epochs: max_epochs, dropout_seed: 4, shuffle_seed: 5, ..TrainConfig::default() };
    let mut trainer = Trainer::new(net, cfg).map_err(|e| e.to_string())?;
    let mut last = 0.0;
    for epoch in 1..=max_epochs {
        trainer.run_epoch(&inputs, &labels).map_err(|e| e.to_string())?;
        last = eval_accuracy(trainer.network(), &inputs, &labels);
        if last == 1.0 {
            return Ok((epoch, trainer.into_network()));
        }
    }
    Err(format!("training accuracy {last} after {max_epochs} epochs"))
}

use candlenet_core::classic::{DecisionTree, FeatureMatrix, Forest, ForestParams, KdTree, MaxFeatures, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, grid: bool) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| if grid { rng.random_range(0..4) as f32 } else { rng.random::<f32>() }).collect())
        .collect()
}

pub fn matrix(points: &[Vec<f32>]) -> FeatureMatrix {
    FeatureMatrix::new(points.len(), points[0].len(), points.concat()).unwrap()
}

/// Compares tree queries with a linear scan; returns the number of queries checked.
pub fn knn_equivalence(n: usize, queries: usize, d: usize, grid: bool, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = random_points(&mut rng, n, d, grid);
    let tree = KdTree::build(matrix(&points)).map_err(|e| e.to_string())?;
    let mut qs = random_points(&mut rng, queries, d, grid);
    // stored points must come back as their own nearest neighbor
    qs.extend(points.iter().take(5).cloned());
    let mut checked = 0;
    for q in &qs {
        for k in [1, 5] {
            let got: Vec<(usize, f64)> = tree
                .nearest(q, k)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|nb| (nb.index, nb.squared_distance))
                .collect();
            let want = linear_knn(&points, q, k);
            if got != want {
                return Err(format!("d={d} k={k} grid={grid}: tree {got:?} vs scan {want:?}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn labeled_set(seed: u64, n: usize, d: usize) -> (FeatureMatrix, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = random_points(&mut rng, n, d, false);
    let labels = points
        .iter()
        .map(|p| if p[0] + 0.5 * p[1 % d] + 0.3 * rng.random::<f32>() > 0.9 { Label::Up } else { Label::Down })
        .collect();
    (matrix(&points), labels)
}

/// A single unbagged all-feature tree must equal a standalone decision tree,
/// and a fixed-seed default forest must refit node-for-node.
pub fn forest_reduction(seed: u64) -> Result<(), String> {
    let (x, y) = labeled_set(seed, 200, 6);
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        tree: TreeParams { max_features: MaxFeatures::All, ..TreeParams::default() },
    };
    let forest = Forest::fit(&x, &y, &params, seed).map_err(|e| e.to_string())?;
    let tree = DecisionTree::fit(&x, &y, &params.tree).map_err(|e| e.to_string())?;
    if forest.trees[0].tree != tree {
        return Err("single-tree forest differs structurally from the decision tree".into());
    }
    let (probe, _) = labeled_set(seed + 1, 200, 6);
    for i in 0..200 {
        for m in [&x, &probe] {
            if forest.predict(m.row(i)).0 != tree.predict(m.row(i)) {
                return Err(format!("prediction differs on sample {i}"));
            }
        }
    }
    let defaults = ForestParams { n_trees: 20, ..ForestParams::default() };
    let a = Forest::fit(&x, &y, &defaults, seed).map_err(|e| e.to_string())?;
    let b = Forest::fit(&x, &y, &defaults, seed).map_err(|e| e.to_string())?;
    if a != b {
        return Err("fixed-seed refit differs".into());
    }
    Ok(())
}

use candlenet_core::metrics::ConfusionMatrix;

/// tp=5, fp=2, tn=3, fn=1 evaluated by hand as fractions.
pub const HAND_SENS: f64 = 5.0 / 6.0;
pub const HAND_SPEC: f64 = 3.0 / 5.0;
pub const HAND_ACC: f64 = 8.0 / 11.0;
pub const HAND_F: f64 = 10.0 / 13.0;
/// (5·3 − 2·1) / sqrt(7·6·5·4) = 13 / sqrt(840)
pub fn hand_mcc() -> f64 {
    13.0 / 840f64.sqrt()
}

pub fn hand_example_errors() -> [f64; 5] {
    let m = ConfusionMatrix::new(5, 2, 3, 1).metrics();
    [
        (m.sensitivity - HAND_SENS).abs(),
        (m.specificity - HAND_SPEC).abs(),
        (m.accuracy - HAND_ACC).abs(),
        (m.mcc - hand_mcc()).abs(),
        (m.f_measure - HAND_F).abs(),
    ]
}

/// Checks acc = (sens·P + spec·N)/(P+N) on `n` random matrices; returns the worst gap.
pub fn accuracy_identity(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let max = [10u64, 1_000, 1_000_000][rng.random_range(0..3)];
        let cm = ConfusionMatrix::new(
            rng.random_range(0..max),
            rng.random_range(0..max),
            rng.random_range(0..max),
            rng.random_range(0..max),
        );
        if cm.total() == 0 {
            continue;
        }
        let (p, nn) = ((cm.tp + cm.fn_) as f64, (cm.tn + cm.fp) as f64);
        let rhs = (cm.sensitivity() * p + cm.specificity() * nn) / (p + nn);
        worst = worst.max((cm.accuracy() - rhs).abs());
    }
    worst
}

use std::path::Path;

use candlenet_core::experiment::{run_experiment, Cell, Classifier, ExperimentConfig};
use candlenet_core::market_data::{serialize_csv, Series, SplitSpec};
use candlenet_core::nn::Optimizer;

pub fn write_series(dir: &Path, series: &Series) {
    std::fs::write(dir.join(format!("{}.csv", series.ticker())), serialize_csv(series)).unwrap();
}

/// Splits a series at 80% of its bars; the independent range repeats the test range.
pub fn split_at_80(series: &Series) -> SplitSpec {
    let b = series.bars();
    let cut = b.len() * 4 / 5;
    let (first, last) = (b[0].date, b[b.len() - 1].date);
    SplitSpec::new((first, b[cut - 1].date), (b[cut].date, last), (b[cut].date, last)).unwrap()
}

/// A one-cell config over a single synthetic ticker written to `data_dir`.
pub fn one_cell_config(data_dir: &Path, out_dir: &Path, series: &Series, cell: Cell) -> ExperimentConfig {
    write_series(data_dir, series);
    let mut cfg = ExperimentConfig {
        data_dir: data_dir.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        tickers: vec![series.ticker().to_string()],
        split: split_at_80(series),
        grid: vec![cell],
        master_seed: 99,
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 2;
    cfg.train.optimizer = Optimizer::adam();
    cfg
}

/// Runs the same one-cell CNN grid twice into separate output directories and
/// compares report rows (minus wall-clock time) and checkpoint checksums.
pub fn grid_determinism() -> Result<String, String> {
    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let series = candlenet_core::synth::momentum_series("DET", 300, 4);
    let cell = Cell { classifier: Classifier::Cnn, period: 5, dimension: 20, volume: true };
    let cfg_a = one_cell_config(data.path(), out_a.path(), &series, cell);
    let cfg_b = ExperimentConfig { out_dir: out_b.path().to_path_buf(), ..cfg_a.clone() };
    let a = run_experiment(&cfg_a).map_err(|e| e.to_string())?;
    let b = run_experiment(&cfg_b).map_err(|e| e.to_string())?;
    let (ra, rb) = (&a.rows[0], &b.rows[0]);
    if let Some(e) = &ra.error {
        return Err(format!("cell failed: {e}"));
    }
    if ra.confusion != rb.confusion || ra.train_samples != rb.train_samples || ra.test_samples != rb.test_samples {
        return Err(format!("rows differ: {ra:?} vs {rb:?}"));
    }
    if ra.checksum != rb.checksum {
        return Err(format!("checksums differ: {:?} vs {:?}", ra.checksum, rb.checksum));
    }
    let bytes_a = std::fs::read(ra.checkpoint.as_ref().unwrap()).map_err(|e| e.to_string())?;
    let bytes_b = std::fs::read(rb.checkpoint.as_ref().unwrap()).map_err(|e| e.to_string())?;
    if bytes_a != bytes_b {
        return Err("checkpoint files differ".into());
    }
    Ok(ra.checksum.clone().unwrap_or_default())
}
