//! Declarative layer stacks and the parameterized network built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{self, PoolCache, ResidualCache, ResidualParams, KERNEL};
use super::tensor::{Scalar, Tensor};
use crate::error::{contract, shape_err, Error, Result};
use crate::window::DatasetSpec;

/// One entry of a [`NetworkSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// 3×3 same-padded convolution followed by ReLU.
    Conv {
        filters: usize,
    },
    /// 2×2 stride-2 max pool.
    MaxPool,
    Dropout {
        rate: f64,
    },
    /// Channel-preserving residual block.
    Residual,
    Flatten,
    /// Fully connected layer followed by ReLU.
    Dense {
        units: usize,
    },
    /// Final linear layer whose outputs are softmax logits.
    SoftmaxOutput {
        units: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match self {
            LayerSpec::Conv { filters } => format!("conv{filters}"),
            LayerSpec::MaxPool => "maxpool".into(),
            LayerSpec::Dropout { rate } => format!("dropout{rate}"),
            LayerSpec::Residual => "residual".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { units } => format!("dense{units}"),
            LayerSpec::SoftmaxOutput { units } => format!("output{units}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `(H, W, C)`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

pub const MID_DROPOUT: f64 = 0.25;
pub const HEAD_DROPOUT: f64 = 0.5;

/// The four-block CNN: Conv32, pool, Conv48, pool, dropout, Conv64, pool,
/// Conv96, pool, dropout, flatten, Dense256, dropout, Dense2.
pub fn build_table2_network(spec: &DatasetSpec) -> Result<NetworkSpec> {
    use LayerSpec::*;
    let net = NetworkSpec {
        input_shape: [spec.dimension, spec.dimension, 3],
        layers: vec![
            Conv { filters: 32 },
            MaxPool,
            Conv { filters: 48 },
            MaxPool,
            Dropout { rate: MID_DROPOUT },
            Conv { filters: 64 },
            MaxPool,
            Conv { filters: 96 },
            MaxPool,
            Dropout { rate: MID_DROPOUT },
            Flatten,
            Dense { units: 256 },
            Dropout { rate: HEAD_DROPOUT },
            SoftmaxOutput { units: 2 },
        ],
    };
    net.output_shapes().map_err(|e| Error::Config(format!("dimension {}: {e}", spec.dimension)))?;
    Ok(net)
}

impl NetworkSpec {
    /// Output shape after each layer, validating compatibility along the way.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.to_vec();
        if shape.contains(&0) {
            return contract(format!("empty input shape {shape:?}"));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, &shape[..]) {
                (LayerSpec::Conv { filters }, &[h, w, _]) if filters > 0 => vec![h, w, filters],
                (LayerSpec::MaxPool, &[h, w, c]) => {
                    if h < 2 || w < 2 {
                        return contract(format!("layer {i}: cannot pool {h}x{w}"));
                    }
                    vec![h / 2, w / 2, c]
                }
                (LayerSpec::Dropout { rate }, s) => {
                    layers::check_dropout_rate(rate)?;
                    s.to_vec()
                }
                (LayerSpec::Residual, s @ &[_, _, _]) => s.to_vec(),
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (LayerSpec::Dense { units } | LayerSpec::SoftmaxOutput { units }, &[_]) if units > 0 => vec![units],
                (l, s) => return contract(format!("layer {i} ({}) cannot take shape {s:?}", l.name())),
            };
            out.push(shape.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput { units: 2 }) => Ok(out),
            _ => contract("network must end in a 2-unit softmax output"),
        }
    }

    /// Length of the vector produced by the `Flatten` layer, if any.
    pub fn flatten_len(&self) -> Result<Option<usize>> {
        let shapes = self.output_shapes()?;
        Ok(self.layers.iter().position(|l| *l == LayerSpec::Flatten).map(|i| shapes[i][0]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv { kernels: Tensor<T>, bias: Tensor<T> },
    MaxPool,
    Dropout { rate: f64 },
    Residual(ResidualParams<T>),
    Flatten,
    Dense { weights: Tensor<T>, bias: Tensor<T>, relu: bool },
}

/// Per-layer state saved by a training forward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv { input: Tensor<T>, pre: Tensor<T> },
    Pool(PoolCache),
    Dropout(Tensor<T>),
    Residual(Box<ResidualCache<T>>),
    Flatten(Vec<usize>),
    Dense { input: Tensor<T>, pre: Tensor<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
}

fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| T::from_f64_lossy(normal.sample(rng))).collect())
        .expect("shape matches")
}

impl<T: Scalar> Network<T> {
    /// He-normal weights, zero biases. The output layer uses Glorot-normal.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.output_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let in_shape: Vec<usize> = if i == 0 { spec.input_shape.to_vec() } else { shapes[i - 1].clone() };
            layers.push(match *l {
                LayerSpec::Conv { filters } => {
                    let cin = in_shape[2];
                    Layer::Conv {
                        kernels: he_normal(&[KERNEL, KERNEL, cin, filters], KERNEL * KERNEL * cin, &mut rng),
                        bias: Tensor::zeros(&[filters]),
                    }
                }
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::Residual => {
                    let c = in_shape[2];
                    let fan = KERNEL * KERNEL * c;
                    Layer::Residual(ResidualParams {
                        kernels1: he_normal(&[KERNEL, KERNEL, c, c], fan, &mut rng),
                        bias1: Tensor::zeros(&[c]),
                        kernels2: he_normal(&[KERNEL, KERNEL, c, c], fan, &mut rng),
                        bias2: Tensor::zeros(&[c]),
                    })
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units } => Layer::Dense {
                    weights: he_normal(&[in_shape[0], units], in_shape[0], &mut rng),
                    bias: Tensor::zeros(&[units]),
                    relu: true,
                },
                LayerSpec::SoftmaxOutput { units } => Layer::Dense {
                    // glorot: 2 / (fan_in + fan_out) == he with fan_in' = (in + out)
                    weights: he_normal(&[in_shape[0], units], in_shape[0] + units, &mut rng),
                    bias: Tensor::zeros(&[units]),
                    relu: false,
                },
            });
        }
        Ok(Network { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Named parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Conv { kernels, bias } => {
                    out.push((format!("layer{i}.conv.kernels"), kernels));
                    out.push((format!("layer{i}.conv.bias"), bias));
                }
                Layer::Residual(p) => {
                    out.push((format!("layer{i}.residual.kernels1"), &p.kernels1));
                    out.push((format!("layer{i}.residual.bias1"), &p.bias1));
                    out.push((format!("layer{i}.residual.kernels2"), &p.kernels2));
                    out.push((format!("layer{i}.residual.bias2"), &p.bias2));
                }
                Layer::Dense { weights, bias, .. } => {
                    out.push((format!("layer{i}.dense.weights"), weights));
                    out.push((format!("layer{i}.dense.bias"), bias));
                }
                Layer::MaxPool | Layer::Dropout { .. } | Layer::Flatten => {}
            }
        }
        out
    }

    /// Mutable parameters, same order as [`Network::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { kernels, bias } | Layer::Dense { weights: kernels, bias, .. } => {
                    out.push(kernels);
                    out.push(bias);
                }
                Layer::Residual(p) => {
                    out.push(&mut p.kernels1);
                    out.push(&mut p.bias1);
                    out.push(&mut p.kernels2);
                    out.push(&mut p.bias2);
                }
                Layer::MaxPool | Layer::Dropout { .. } | Layer::Flatten => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.spec.input_shape {
            return shape_err(self.spec.input_shape, input.shape());
        }
        Ok(())
    }

    /// Evaluation-mode forward pass (dropout off) returning the logits.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv { kernels, bias } => layers::relu(&layers::conv2d_forward(&x, kernels, bias)?),
                Layer::MaxPool => layers::maxpool2x2(&x)?.0,
                Layer::Dropout { .. } => x,
                Layer::Residual(p) => layers::residual_forward(&x, p)?.0,
                Layer::Flatten => layers::flatten(&x),
                Layer::Dense { weights, bias, relu } => {
                    let pre = layers::dense_forward(&x, weights, bias)?;
                    if *relu {
                        layers::relu(&pre)
                    } else {
                        pre
                    }
                }
            };
        }
        Ok(x)
    }

    /// Training-mode forward pass. Dropout masks are drawn from `rng`.
    /// Fails with [`Error::NonFinite`] at the first layer producing NaN/Inf.
    pub fn forward_train<R: Rng + ?Sized>(&self, input: &Tensor<T>, rng: &mut R) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = match layer {
                Layer::Conv { kernels, bias } => {
                    let pre = layers::conv2d_forward(&x, kernels, bias)?;
                    (layers::relu(&pre), Cache::Conv { input: x, pre })
                }
                Layer::MaxPool => {
                    let (out, c) = layers::maxpool2x2(&x)?;
                    (out, Cache::Pool(c))
                }
                Layer::Dropout { rate } => {
                    let (out, mask) = layers::dropout(&x, *rate, true, rng)?;
                    (out, Cache::Dropout(mask))
                }
                Layer::Residual(p) => {
                    let (out, c) = layers::residual_forward(&x, p)?;
                    (out, Cache::Residual(Box::new(c)))
                }
                Layer::Flatten => (layers::flatten(&x), Cache::Flatten(x.shape().to_vec())),
                Layer::Dense { weights, bias, relu } => {
                    let pre = layers::dense_forward(&x, weights, bias)?;
                    let out = if *relu { layers::relu(&pre) } else { pre.clone() };
                    (out, Cache::Dense { input: x, pre })
                }
            };
            let pre_ok = match &cache {
                Cache::Conv { pre, .. } | Cache::Dense { pre, .. } => pre.is_finite(),
                _ => true,
            };
            if !pre_ok || !out.is_finite() {
                return Err(Error::NonFinite { layer: i, name: self.spec.layers[i].name() });
            }
            caches.push(cache);
            x = out;
        }
        Ok((x, caches))
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the logits) through the
    /// cached pass. Returns parameter gradients in [`Network::params`] order
    /// and the gradient w.r.t. the input.
    pub fn backward(&self, caches: &[Cache<T>], grad_out: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        if caches.len() != self.layers.len() {
            return contract(format!("{} caches for {} layers", caches.len(), self.layers.len()));
        }
        let mut grads: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (g_in, pg) = match (layer, cache) {
                (Layer::Conv { kernels, .. }, Cache::Conv { input, pre }) => {
                    let g_pre = layers::relu_backward(&g, pre)?;
                    let cg = layers::conv2d_backward(&g_pre, input, kernels)?;
                    (cg.input, vec![cg.kernels, cg.bias])
                }
                (Layer::MaxPool, Cache::Pool(c)) => (layers::maxpool2x2_backward(&g, c)?, vec![]),
                (Layer::Dropout { .. }, Cache::Dropout(mask)) => (layers::dropout_backward(&g, mask)?, vec![]),
                (Layer::Residual(p), Cache::Residual(c)) => {
                    let rg = layers::residual_backward(&g, c, p)?;
                    let ResidualParams { kernels1, bias1, kernels2, bias2 } = rg.params;
                    (rg.input, vec![kernels1, bias1, kernels2, bias2])
                }
                (Layer::Flatten, Cache::Flatten(shape)) => (g.reshape(shape.clone())?, vec![]),
                (Layer::Dense { weights, relu, .. }, Cache::Dense { input, pre }) => {
                    let g_pre = if *relu { layers::relu_backward(&g, pre)? } else { g };
                    let (gi, gw, gb) = layers::dense_backward(&g_pre, input, weights)?;
                    (gi, vec![gw, gb])
                }
                _ => return contract("cache does not match layer"),
            };
            grads.push(pg);
            g = g_in;
        }
        grads.reverse();
        Ok((grads.into_iter().flatten().collect(), g))
    }

    /// Copies parameters from another network with the same architecture.
    pub fn load_params(&mut self, tensors: Vec<Tensor<T>>) -> Result<()> {
        let mine = self.params_mut();
        if mine.len() != tensors.len() {
            return shape_err(format!("{} parameter tensors", mine.len()), format!("{}", tensors.len()));
        }
        for (dst, src) in mine.iter().zip(&tensors) {
            if dst.shape() != src.shape() {
                return shape_err(dst.shape(), src.shape());
            }
        }
        for (dst, src) in mine.into_iter().zip(tensors) {
            *dst = src;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv { kernels, bias } => Layer::Conv { kernels: kernels.cast(), bias: bias.cast() },
                Layer::MaxPool => Layer::MaxPool,
                Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                Layer::Residual(p) => Layer::Residual(ResidualParams {
                    kernels1: p.kernels1.cast(),
                    bias1: p.bias1.cast(),
                    kernels2: p.kernels2.cast(),
                    bias2: p.bias2.cast(),
                }),
                Layer::Flatten => Layer::Flatten,
                Layer::Dense { weights, bias, relu } => {
                    Layer::Dense { weights: weights.cast(), bias: bias.cast(), relu: *relu }
                }
            })
            .collect();
        Network { spec: self.spec.clone(), layers }
    }
}
