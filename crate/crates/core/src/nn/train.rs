//! Mini-batch training, optimizers and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{softmax, softmax_cross_entropy};
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};
use crate::seed::mix;
use crate::window::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_seed: u64,
    pub shuffle_seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            dropout_seed: 0x0d40,
            shuffle_seed: 0x5eed,
            optimizer: Optimizer::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy of the training-mode predictions seen during the epoch.
    pub accuracy: f64,
}

/// Parameter gradients, loss and hit flag for one training sample.
type SampleGrad = (Vec<Tensor<f32>>, f32, bool);

/// Optimizer state plus the network being trained.
pub struct Trainer {
    network: Network<f32>,
    config: TrainConfig,
    first_moment: Vec<Vec<f32>>,
    second_moment: Vec<Vec<f32>>,
    step: u64,
    epoch: usize,
}

impl Trainer {
    pub fn new(network: Network<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let sizes: Vec<usize> = network.params().iter().map(|(_, t)| t.len()).collect();
        let zeros = || sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Ok(Trainer { first_moment: zeros(), second_moment: zeros(), network, config, step: 0, epoch: 0 })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn into_network(self) -> Network<f32> {
        self.network
    }

    /// One pass over `inputs` in a seeded shuffled order.
    pub fn run_epoch(&mut self, inputs: &[Tensor<f32>], labels: &[Label]) -> Result<EpochStats> {
        if inputs.is_empty() {
            return contract("training needs at least one sample");
        }
        if inputs.len() != labels.len() {
            return contract(format!("{} inputs, {} labels", inputs.len(), labels.len()));
        }
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.config.shuffle_seed, &[epoch as u64])));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let net = &self.network;
            let dropout_seed = self.config.dropout_seed;
            let per_sample: Vec<Result<SampleGrad>> = batch
                .par_iter()
                .map(|&idx| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(dropout_seed, &[epoch as u64, idx as u64]));
                    let (logits, caches) = net.forward_train(&inputs[idx], &mut rng)?;
                    let logits = logits.reshape(vec![1, 2])?;
                    let target = labels[idx].index();
                    let (loss, grad) = softmax_cross_entropy(&logits, &[target])?;
                    let hit = (logits.data()[1] > logits.data()[0]) == (target == 1);
                    let (grads, _) = net.backward(&caches, &grad.reshape(vec![2])?)?;
                    Ok((grads, loss, hit))
                })
                .collect();

            let mut total: Option<Vec<Tensor<f32>>> = None;
            let mut batch_loss = 0.0f64;
            for r in per_sample {
                let (grads, loss, hit) = r?;
                batch_loss += loss as f64;
                correct += hit as usize;
                match total.as_mut() {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite { layer: self.network.layers().len(), name: "loss".into() });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f32;
            let mut grads = total.expect("non-empty batch");
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            self.apply(&grads);
        }
        self.epoch += 1;
        Ok(EpochStats { epoch, loss: loss_sum / inputs.len() as f64, accuracy: correct as f64 / inputs.len() as f64 })
    }

    fn apply(&mut self, grads: &[Tensor<f32>]) {
        self.step += 1;
        let lr = self.config.learning_rate;
        match self.config.optimizer {
            Optimizer::Sgd => {
                let lr = lr as f32;
                for (p, g) in self.network.params_mut().into_iter().zip(grads) {
                    for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * gv;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let step_size = (lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t))) as f32;
                let (b1, b2, eps) = (beta1 as f32, beta2 as f32, eps as f32);
                let params = self.network.params_mut();
                for (((p, g), m), v) in
                    params.into_iter().zip(grads).zip(&mut self.first_moment).zip(&mut self.second_moment)
                {
                    for (((w, &gv), mv), vv) in
                        p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        *w -= step_size * *mv / (vv.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Result of [`train`].
pub struct Trained {
    pub network: Network<f32>,
    pub trace: Vec<EpochStats>,
}

/// Trains for `config.epochs` epochs. Deterministic for fixed seeds
/// regardless of thread count: per-sample gradients are summed in batch order.
pub fn train(network: Network<f32>, inputs: &[Tensor<f32>], labels: &[Label], config: &TrainConfig) -> Result<Trained> {
    let mut trainer = Trainer::new(network, *config)?;
    let trace = (0..config.epochs).map(|_| trainer.run_epoch(inputs, labels)).collect::<Result<Vec<_>>>()?;
    Ok(Trained { network: trainer.into_network(), trace })
}

/// Eval-mode prediction: argmax label and `[p_down, p_up]`.
pub fn predict(network: &Network<f32>, input: &Tensor<f32>) -> Result<(Label, [f32; 2])> {
    let logits = network.forward(input)?.reshape(vec![1, 2])?;
    let p = softmax(&logits)?;
    let probs = [p.data()[0], p.data()[1]];
    let label = if probs[1] > probs[0] { Label::Up } else { Label::Down };
    Ok((label, probs))
}

/// Predicts many inputs in parallel; output order matches input order.
pub fn predict_batch(network: &Network<f32>, inputs: &[Tensor<f32>]) -> Result<Vec<(Label, [f32; 2])>> {
    inputs.par_iter().map(|x| predict(network, x)).collect()
}
