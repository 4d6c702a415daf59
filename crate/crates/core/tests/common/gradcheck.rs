//! Central finite-difference checks for every layer, in f64.

use candlenet_core::nn::layers::*;
use candlenet_core::nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;
/// Pre-activations and pool runner-ups closer than this to a kink are redrawn.
const KINK_MARGIN: f64 = 1e-3;

pub type Check = Result<f64, String>;
type FieldAccess = fn(&mut ResidualParams<f64>) -> &mut Tensor<f64>;

fn rnd(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Norm-wise relative error between analytic and numeric gradients.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale =
        analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every element of `x`.
fn numeric(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let plus = f(&probe);
            probe.data_mut()[i] = orig - STEP;
            let minus = f(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

fn compare(what: &str, trial: usize, analytic: &Tensor<f64>, numeric: &[f64]) -> Check {
    let e = rel_error(analytic.data(), numeric);
    if e < TOLERANCE {
        Ok(e)
    } else {
        Err(format!("{what} trial {trial} shape {:?}: relative error {e:e}", analytic.shape()))
    }
}

fn away_from_kinks(t: &Tensor<f64>) -> bool {
    t.data().iter().all(|v| v.abs() > KINK_MARGIN)
}

/// Runs `trials` checks and returns the worst relative error.
fn run(trials: usize, seed: u64, mut one: impl FnMut(usize, &mut ChaCha8Rng) -> Check) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        worst = worst.max(one(t, &mut rng)?);
    }
    Ok(worst)
}

pub fn conv(trials: usize) -> Check {
    run(trials, 1, |t, rng| {
        let (h, w) = (rng.random_range(1..7), rng.random_range(1..7));
        let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
        let x = rnd(rng, &[h, w, cin]);
        let k = rnd(rng, &[3, 3, cin, cout]);
        let b = rnd(rng, &[cout]);
        let up = rnd(rng, &[h, w, cout]);
        let g = conv2d_backward(&up, &x, &k).map_err(|e| e.to_string())?;
        let e1 = compare("conv input", t, &g.input, &numeric(&x, |x| dot(&up, &conv2d_forward(x, &k, &b).unwrap())))?;
        let e2 =
            compare("conv kernels", t, &g.kernels, &numeric(&k, |k| dot(&up, &conv2d_forward(&x, k, &b).unwrap())))?;
        let e3 = compare("conv bias", t, &g.bias, &numeric(&b, |b| dot(&up, &conv2d_forward(&x, &k, b).unwrap())))?;
        Ok(e1.max(e2).max(e3))
    })
}

pub fn dense(trials: usize) -> Check {
    run(trials, 2, |t, rng| {
        let (n_in, n_out) = (rng.random_range(1..12), rng.random_range(1..8));
        let x = rnd(rng, &[n_in]);
        let wt = rnd(rng, &[n_in, n_out]);
        let b = rnd(rng, &[n_out]);
        let up = rnd(rng, &[n_out]);
        let (gx, gw, gb) = dense_backward(&up, &x, &wt).map_err(|e| e.to_string())?;
        let e1 = compare("dense input", t, &gx, &numeric(&x, |x| dot(&up, &dense_forward(x, &wt, &b).unwrap())))?;
        let e2 = compare("dense weights", t, &gw, &numeric(&wt, |wt| dot(&up, &dense_forward(&x, wt, &b).unwrap())))?;
        let e3 = compare("dense bias", t, &gb, &numeric(&b, |b| dot(&up, &dense_forward(&x, &wt, b).unwrap())))?;
        Ok(e1.max(e2).max(e3))
    })
}

pub fn relu_layer(trials: usize) -> Check {
    run(trials, 3, |t, rng| {
        let shape = [rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4)];
        let x = loop {
            let x = rnd(rng, &shape);
            if away_from_kinks(&x) {
                break x;
            }
        };
        let up = rnd(rng, &shape);
        let g = relu_backward(&up, &x).map_err(|e| e.to_string())?;
        compare("relu", t, &g, &numeric(&x, |x| dot(&up, &relu(x))))
    })
}

fn distinct_blocks(x: &Tensor<f64>) -> bool {
    let (h, w, c) = x.hwc().unwrap();
    for y in 0..h / 2 {
        for xx in 0..w / 2 {
            for ch in 0..c {
                let mut v: Vec<f64> =
                    (0..4).map(|i| x.data()[((2 * y + i / 2) * w + 2 * xx + i % 2) * c + ch]).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                if v[0] - v[1] < KINK_MARGIN {
                    return false;
                }
            }
        }
    }
    true
}

pub fn maxpool(trials: usize) -> Check {
    run(trials, 4, |t, rng| {
        let shape = [rng.random_range(2..8), rng.random_range(2..8), rng.random_range(1..4)];
        let x = loop {
            let x = rnd(rng, &shape);
            if distinct_blocks(&x) {
                break x;
            }
        };
        let (out, cache) = maxpool2x2(&x).map_err(|e| e.to_string())?;
        let up = rnd(rng, out.shape());
        let g = maxpool2x2_backward(&up, &cache).map_err(|e| e.to_string())?;
        compare("maxpool", t, &g, &numeric(&x, |x| dot(&up, &maxpool2x2(x).unwrap().0)))
    })
}

pub fn dropout_path(trials: usize) -> Check {
    run(trials, 5, |t, rng| {
        let shape = [rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4)];
        let rate = [0.0, 0.25, 0.5, 0.75][t % 4];
        let mask_seed: u64 = rng.random();
        let x = rnd(rng, &shape);
        let up = rnd(rng, &shape);
        let masked = |x: &Tensor<f64>| dropout(x, rate, true, &mut ChaCha8Rng::seed_from_u64(mask_seed)).unwrap();
        let (_, mask) = masked(&x);
        let g = dropout_backward(&up, &mask).map_err(|e| e.to_string())?;
        compare("dropout", t, &g, &numeric(&x, |x| dot(&up, &masked(x).0)))
    })
}

pub fn residual(trials: usize) -> Check {
    run(trials, 6, |t, rng| {
        let (h, w, c) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let (x, p) = loop {
            let x = rnd(rng, &[h, w, c]);
            let p = ResidualParams {
                kernels1: rnd(rng, &[3, 3, c, c]),
                bias1: rnd(rng, &[c]),
                kernels2: rnd(rng, &[3, 3, c, c]),
                bias2: rnd(rng, &[c]),
            };
            let pre1 = conv2d_forward(&x, &p.kernels1, &p.bias1).unwrap();
            let mut sum = conv2d_forward(&relu(&pre1), &p.kernels2, &p.bias2).unwrap();
            sum.add_assign(&x).unwrap();
            if away_from_kinks(&pre1) && away_from_kinks(&sum) {
                break (x, p);
            }
        };
        let (out, cache) = residual_forward(&x, &p).map_err(|e| e.to_string())?;
        let up = rnd(rng, out.shape());
        let g = residual_backward(&up, &cache, &p).map_err(|e| e.to_string())?;
        let loss = |x: &Tensor<f64>, p: &ResidualParams<f64>| dot(&up, &residual_forward(x, p).unwrap().0);
        let mut worst = compare("residual input", t, &g.input, &numeric(&x, |x| loss(x, &p)))?;
        let fields: [(&str, FieldAccess, &Tensor<f64>); 4] = [
            ("residual kernels1", |p| &mut p.kernels1, &g.params.kernels1),
            ("residual bias1", |p| &mut p.bias1, &g.params.bias1),
            ("residual kernels2", |p| &mut p.kernels2, &g.params.kernels2),
            ("residual bias2", |p| &mut p.bias2, &g.params.bias2),
        ];
        for (name, field, analytic) in fields {
            let base = field(&mut p.clone()).clone();
            let num = numeric(&base, |v| {
                let mut q = p.clone();
                *field(&mut q) = v.clone();
                loss(&x, &q)
            });
            worst = worst.max(compare(name, t, analytic, &num)?);
        }
        Ok(worst)
    })
}

pub fn softmax_ce(trials: usize) -> Check {
    run(trials, 7, |t, rng| {
        let (n, k) = (rng.random_range(1..5), rng.random_range(2..6));
        let logits = rnd(rng, &[n, k]).map(|v| v * 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let (_, g) = softmax_cross_entropy(&logits, &labels).map_err(|e| e.to_string())?;
        compare("softmax-ce", t, &g, &numeric(&logits, |l| softmax_cross_entropy(l, &labels).unwrap().0))
    })
}

/// Every layer with its worst error, or the first failure.
pub fn all(trials: usize) -> Vec<(&'static str, Check)> {
    vec![
        ("conv", conv(trials)),
        ("dense", dense(trials)),
        ("relu", relu_layer(trials)),
        ("maxpool", maxpool(trials)),
        ("dropout", dropout_path(trials)),
        ("residual", residual(trials)),
        ("softmax-ce", softmax_ce(trials)),
    ]
}
