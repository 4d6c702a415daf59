//! Forward and backward passes for the fixed layer set.
//!
//! Image tensors are single samples in `(H, W, C)` layout. Convolutions are
//! 3×3, stride 1, zero "same" padding, with kernels laid out
//! `(3, 3, C_in, C_out)`. Dense weights are `(n_in, n_out)`.

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{contract, shape_err, Result};

pub const KERNEL: usize = 3;

/// Gradients of a 3×3 convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_conv<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (h, w, cin) = input.hwc()?;
    let cout = match kernels.shape()[..] {
        [KERNEL, KERNEL, c, f] if c == cin => f,
        _ => return shape_err([KERNEL, KERNEL, cin, 0], kernels.shape()),
    };
    if bias.shape() != [cout] {
        return shape_err([cout], bias.shape());
    }
    Ok((h, w, cin, cout))
}

/// Visits every (output pixel, in-bounds kernel tap) pair.
#[inline]
fn for_each_tap(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
    for y in 0..h {
        for x in 0..w {
            let out_pix = y * w + x;
            for ky in 0..KERNEL {
                let iy = y + ky;
                if iy < 1 || iy > h {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = x + kx;
                    if ix < 1 || ix > w {
                        continue;
                    }
                    f(out_pix, (iy - 1) * w + (ix - 1), ky * KERNEL + kx);
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, cin, cout) = check_conv(input, kernels, bias)?;
    let mut out = Tensor::zeros(&[h, w, cout]);
    let (src, k, b) = (input.data(), kernels.data(), bias.data());
    let dst = out.data_mut();
    for pix in dst.chunks_exact_mut(cout) {
        pix.copy_from_slice(b);
    }
    for_each_tap(h, w, |out_pix, in_pix, tap| {
        let o = &mut dst[out_pix * cout..(out_pix + 1) * cout];
        let inp = &src[in_pix * cin..(in_pix + 1) * cin];
        let kt = &k[tap * cin * cout..(tap + 1) * cin * cout];
        for (c, &v) in inp.iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            let krow = &kt[c * cout..(c + 1) * cout];
            for (acc, &kv) in o.iter_mut().zip(krow) {
                *acc += v * kv;
            }
        }
    });
    Ok(out)
}

pub fn conv2d_backward<T: Scalar>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let cout = kernels.shape().get(3).copied().unwrap_or(0);
    let (h, w, cin, cout) = check_conv(input, kernels, &Tensor::zeros(&[cout]))?;
    if upstream.shape() != [h, w, cout] {
        return shape_err([h, w, cout], upstream.shape());
    }
    let mut g_in = Tensor::zeros(input.shape());
    let mut g_k = Tensor::zeros(kernels.shape());
    let mut g_b = Tensor::zeros(&[cout]);
    let (up, src, k) = (upstream.data(), input.data(), kernels.data());
    for pix in up.chunks_exact(cout) {
        for (gb, &u) in g_b.data_mut().iter_mut().zip(pix) {
            *gb += u;
        }
    }
    let (gi, gk) = (g_in.data_mut(), g_k.data_mut());
    for_each_tap(h, w, |out_pix, in_pix, tap| {
        let u = &up[out_pix * cout..(out_pix + 1) * cout];
        let inp = &src[in_pix * cin..(in_pix + 1) * cin];
        let gin = &mut gi[in_pix * cin..(in_pix + 1) * cin];
        let base = tap * cin * cout;
        for c in 0..cin {
            let row = base + c * cout..base + (c + 1) * cout;
            let v = inp[c];
            let mut acc = T::zero();
            for ((gkv, &kv), &uv) in gk[row.clone()].iter_mut().zip(&k[row]).zip(u) {
                *gkv += v * uv;
                acc += kv * uv;
            }
            gin[c] += acc;
        }
    });
    Ok(ConvGrads { input: g_in, kernels: g_k, bias: g_b })
}

/// Flat input index of each pooled output's maximum.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2×2 stride-2 max pool; a trailing odd row or column is dropped.
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let (h, w, c) = input.hwc()?;
    if h < 2 || w < 2 {
        return contract(format!("max pool needs H, W >= 2, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Tensor::zeros(&[oh, ow, c]);
    let mut argmax = vec![0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * oy) * w + 2 * ox) * c + ch;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if src[idx] > src[best_idx] {
                        best_idx = idx;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out.data_mut()[o] = src[best_idx];
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, PoolCache { input_shape: input.shape().to_vec(), argmax }))
}

pub fn maxpool2x2_backward<T: Scalar>(upstream: &Tensor<T>, cache: &PoolCache) -> Result<Tensor<T>> {
    if upstream.len() != cache.argmax.len() {
        return shape_err(cache.argmax.len(), upstream.shape());
    }
    let mut g = Tensor::zeros(&cache.input_shape);
    for (&idx, &u) in cache.argmax.iter().zip(upstream.data()) {
        g.data_mut()[idx] += u;
    }
    Ok(g)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given the pre-activation `input`; zero at the kink.
pub fn relu_backward<T: Scalar>(upstream: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.shape() != input.shape() {
        return shape_err(input.shape(), upstream.shape());
    }
    let data =
        upstream.data().iter().zip(input.data()).map(|(&u, &x)| if x > T::zero() { u } else { T::zero() }).collect();
    Tensor::from_vec(input.shape().to_vec(), data)
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return contract(format!("dropout rate {rate} not in [0, 1)"));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and the per-element scale mask
/// (0 or 1/(1-rate)); in eval mode the mask is all ones.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((input.clone(), input.map(|_| T::one())));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let draws: Vec<T> = (0..input.len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
    let mask = Tensor::from_vec(input.shape().to_vec(), draws)?;
    let out =
        Tensor::from_vec(input.shape().to_vec(), input.data().iter().zip(mask.data()).map(|(&x, &m)| x * m).collect())?;
    Ok((out, mask))
}

pub fn dropout_backward<T: Scalar>(upstream: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.shape() != mask.shape() {
        return shape_err(mask.shape(), upstream.shape());
    }
    Tensor::from_vec(mask.shape().to_vec(), upstream.data().iter().zip(mask.data()).map(|(&u, &m)| u * m).collect())
}

pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(vec![input.len()], input.data().to_vec()).expect("same element count")
}

fn check_dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize)> {
    let (n_in, n_out) = match weights.shape()[..] {
        [i, o] => (i, o),
        _ => return shape_err("rank-2 weights", weights.shape()),
    };
    if input.len() != n_in || input.shape().len() != 1 {
        return shape_err([n_in], input.shape());
    }
    if bias.shape() != [n_out] {
        return shape_err([n_out], bias.shape());
    }
    Ok((n_in, n_out))
}

/// `out = input · W + b` for a flat input.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, n_out) = check_dense(input, weights, bias)?;
    let mut out = bias.clone();
    let o = out.data_mut();
    for (&x, row) in input.data().iter().zip(weights.data().chunks_exact(n_out)) {
        if x == T::zero() {
            continue;
        }
        for (acc, &wv) in o.iter_mut().zip(row) {
            *acc += x * wv;
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    upstream: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let n_out = weights.shape().get(1).copied().unwrap_or(0);
    let (_, n_out) = check_dense(input, weights, &Tensor::zeros(&[n_out]))?;
    if upstream.shape() != [n_out] {
        return shape_err([n_out], upstream.shape());
    }
    let up = upstream.data();
    let mut g_in = Tensor::zeros(input.shape());
    let mut g_w = Tensor::zeros(weights.shape());
    for (i, (&x, (row, grow))) in input
        .data()
        .iter()
        .zip(weights.data().chunks_exact(n_out).zip(g_w.data_mut().chunks_exact_mut(n_out)))
        .enumerate()
    {
        let mut acc = T::zero();
        for ((gw, &wv), &u) in grow.iter_mut().zip(row).zip(up) {
            *gw = x * u;
            acc += wv * u;
        }
        g_in.data_mut()[i] = acc;
    }
    Ok((g_in, g_w, upstream.clone()))
}

/// Parameters of a residual block: two same-channel 3×3 convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParams<T> {
    pub kernels1: Tensor<T>,
    pub bias1: Tensor<T>,
    pub kernels2: Tensor<T>,
    pub bias2: Tensor<T>,
}

impl<T: Scalar> ResidualParams<T> {
    pub fn zeros(channels: usize) -> Self {
        ResidualParams {
            kernels1: Tensor::zeros(&[KERNEL, KERNEL, channels, channels]),
            bias1: Tensor::zeros(&[channels]),
            kernels2: Tensor::zeros(&[KERNEL, KERNEL, channels, channels]),
            bias2: Tensor::zeros(&[channels]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResidualCache<T> {
    input: Tensor<T>,
    pre1: Tensor<T>,
    hidden: Tensor<T>,
    sum: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ResidualGrads<T> {
    pub input: Tensor<T>,
    pub params: ResidualParams<T>,
}

/// `relu(x + conv2(relu(conv1(x))))`.
pub fn residual_forward<T: Scalar>(input: &Tensor<T>, p: &ResidualParams<T>) -> Result<(Tensor<T>, ResidualCache<T>)> {
    let (_, _, c) = input.hwc()?;
    for k in [&p.kernels1, &p.kernels2] {
        if k.shape() != [KERNEL, KERNEL, c, c] {
            return shape_err([KERNEL, KERNEL, c, c], k.shape());
        }
    }
    let pre1 = conv2d_forward(input, &p.kernels1, &p.bias1)?;
    let hidden = relu(&pre1);
    let mut sum = conv2d_forward(&hidden, &p.kernels2, &p.bias2)?;
    sum.add_assign(input)?;
    let out = relu(&sum);
    Ok((out, ResidualCache { input: input.clone(), pre1, hidden, sum }))
}

/// Gradients flow through both the skip path and the inner path and are summed.
pub fn residual_backward<T: Scalar>(
    upstream: &Tensor<T>,
    cache: &ResidualCache<T>,
    p: &ResidualParams<T>,
) -> Result<ResidualGrads<T>> {
    let g_sum = relu_backward(upstream, &cache.sum)?;
    let g2 = conv2d_backward(&g_sum, &cache.hidden, &p.kernels2)?;
    let g_pre1 = relu_backward(&g2.input, &cache.pre1)?;
    let g1 = conv2d_backward(&g_pre1, &cache.input, &p.kernels1)?;
    let mut g_in = g1.input;
    g_in.add_assign(&g_sum)?;
    Ok(ResidualGrads {
        input: g_in,
        params: ResidualParams { kernels1: g1.kernels, bias1: g1.bias, kernels2: g2.kernels, bias2: g2.bias },
    })
}

/// Row-wise softmax of `(n, k)` logits, computed with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match logits.shape()[..] {
        [_, k] if k > 0 => k,
        _ => return shape_err("(n, k) logits", logits.shape()),
    };
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    Ok(out)
}

/// Mean cross-entropy of `(n, k)` logits against class indices, with the
/// gradient `(softmax - onehot) / n`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, k) = match logits.shape()[..] {
        [n, k] if k > 0 => (n, k),
        _ => return shape_err("(n, k) logits", logits.shape()),
    };
    if labels.len() != n || n == 0 {
        return contract(format!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return contract(format!("label {bad} out of range for {k} classes"));
    }
    let nt = T::from_usize(n).expect("row count fits");
    let mut grad = Tensor::zeros(&[n, k]);
    let mut loss = T::zero();
    for ((row, g), &label) in logits.data().chunks_exact(k).zip(grad.data_mut().chunks_exact_mut(k)).zip(labels) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|&v| (v - m).exp()).sum();
        let log_z = z.ln() + m;
        loss += log_z - row[label];
        for (j, (gv, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - log_z).exp();
            let onehot = if j == label { T::one() } else { T::zero() };
            *gv = (p - onehot) / nt;
        }
    }
    Ok((loss / nt, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    fn delta_kernel(c: usize) -> Tensor<f64> {
        let mut k = Tensor::zeros(&[3, 3, c, c]);
        for ch in 0..c {
            k.data_mut()[(4 * c + ch) * c + ch] = 1.0;
        }
        k
    }

    #[test]
    fn conv_padding_single_pixel() {
        let out = conv2d_forward(&t(&[1, 1, 1], &[5.0]), &t(&[3, 3, 1, 1], &[1.0; 9]), &t(&[1], &[0.0])).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 5, 2], &mut rng);
        let out = conv2d_forward(&x, &delta_kernel(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_shape_mismatch() {
        let x = Tensor::<f64>::zeros(&[4, 4, 2]);
        assert!(conv2d_forward(&x, &Tensor::zeros(&[3, 3, 3, 1]), &Tensor::zeros(&[1])).is_err());
        assert!(conv2d_forward(&x, &Tensor::zeros(&[3, 3, 2, 1]), &Tensor::zeros(&[2])).is_err());
        assert!(conv2d_backward(&Tensor::zeros(&[4, 4, 2]), &x, &Tensor::zeros(&[3, 3, 2, 1])).is_err());
    }

    #[test]
    fn conv_backward_zero_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[3, 3, 2], &mut rng);
        let k = random(&[3, 3, 2, 4], &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[3, 3, 4]), &x, &k).unwrap();
        for v in g.input.data().iter().chain(g.kernels.data()).chain(g.bias.data()) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn conv_backward_delta_identity() {
        let up = t(&[1, 1, 1], &[3.5]);
        let g = conv2d_backward(&up, &t(&[1, 1, 1], &[2.0]), &delta_kernel(1)).unwrap();
        assert_eq!(g.input.data(), up.data());
    }

    #[test]
    fn pool_single_block() {
        let (out, _) = maxpool2x2(&t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn pool_odd_size() {
        let x = t(&[5, 5, 1], &(0..25).map(f64::from).collect::<Vec<_>>());
        let (out, _) = maxpool2x2(&x).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert_eq!(out.data(), &[6.0, 8.0, 16.0, 18.0]);
        assert!(maxpool2x2(&Tensor::<f64>::zeros(&[1, 4, 1])).is_err());
    }

    #[test]
    fn pool_ties_route_to_first() {
        let (_, cache) = maxpool2x2(&t(&[2, 2, 1], &[1.0; 4])).unwrap();
        let g = maxpool2x2_backward(&t(&[1, 1, 1], &[2.0]), &cache).unwrap();
        assert_eq!(g.data(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(&t(&[3], &[-1.0, 0.0, 2.0])).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dropout_rate_zero_and_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[10], &mut rng);
        for training in [true, false] {
            let (out, _) = dropout(&x, 0.0, training, &mut rng).unwrap();
            assert_eq!(out, x);
        }
        let (out, _) = dropout(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(out, x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dense_identity() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = t(&[3], &[1.0, -2.0, 3.0]);
        assert_eq!(dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn residual_zero_params_is_relu() {
        let x = t(&[2, 2, 1], &[-1.0, 2.0, 0.5, -3.0]);
        let (out, _) = residual_forward(&x, &ResidualParams::zeros(1)).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 0.5, 0.0]);
        let (out, _) = residual_forward(&Tensor::<f64>::zeros(&[3, 3, 2]), &ResidualParams::zeros(2)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(residual_forward(&x, &ResidualParams::zeros(2)).is_err());
    }

    #[test]
    fn softmax_ce_symmetric_and_stable() {
        let (loss, grad) = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(grad.data(), &[-0.5, 0.5]);
        let p = softmax(&t(&[1, 2], &[0.0, 0.0])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let (loss, grad) = softmax_cross_entropy(&t(&[1, 2], &[1000.0, 0.0]), &[0]).unwrap();
        assert!(loss.abs() < 1e-12 && loss.is_finite());
        assert!(grad.is_finite());
        let (loss32, _) =
            softmax_cross_entropy(&Tensor::<f32>::from_vec(vec![1, 2], vec![1000.0, 0.0]).unwrap(), &[0]).unwrap();
        assert!(loss32.is_finite() && loss32.abs() < 1e-6);
    }
}
