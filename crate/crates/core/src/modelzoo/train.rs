use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{forward_logits, Graph, Tensor};
use crate::error::{Error, Result};
use crate::modelzoo::Model;
use crate::par::{self, Execution};

/// SGD-with-momentum recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Every `holdout_every`-th sample (index ≡ holdout_every−1) is held out.
    pub holdout_every: usize,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lr: 0.02,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
            holdout_every: 5,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Predicted class (lowest index on ties) and the logits.
pub fn classify(model: &Model, x: &Tensor) -> Result<(Tensor, usize)> {
    let z = forward_logits(model, x)?;
    let k = z.argmax();
    Ok((z, k))
}

/// Fraction of `(images, labels)` the model classifies correctly.
pub fn accuracy(model: &Model, images: &[Tensor], labels: &[usize], exec: Execution) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let hits = par::try_map_indexed(exec, images.len(), |i| {
        classify(model, &images[i]).map(|(_, k)| (k == labels[i]) as usize)
    })?;
    Ok(hits.iter().sum::<usize>() as f64 / images.len() as f64)
}

fn sample_gradient(model: &Model, x: &Tensor, y: usize) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let xin = g.leaf_ref(x, false)?;
    let mut leaves = Vec::with_capacity(model.params.len());
    for p in &model.params {
        leaves.push(g.leaf_ref(&p.value, true)?);
    }
    let z = model.forward_with(&mut g, xin, &leaves)?;
    let l = g.cross_entropy(z, y)?;
    let loss = g.value(l).data()[0];
    let mut grads = g.backward(l)?;
    let out = leaves
        .iter()
        .zip(&model.params)
        .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    Ok((loss, out))
}

/// Minimises cross-entropy with minibatch SGD and momentum. Deterministic
/// given the config: minibatch gradients are summed in sample order.
pub fn train_model(model: &mut Model, images: &[Tensor], labels: &[usize], cfg: &TrainConfig) -> Result<TrainReport> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::config("training set must be nonempty with one label per image"));
    }
    let shape = model.spec.input_shape();
    if let Some(bad) = images.iter().position(|t| t.shape() != shape) {
        return Err(Error::config(format!("image {bad} does not match model input {shape:?}")));
    }
    if let Some(bad) = labels.iter().position(|&y| y >= model.spec.classes) {
        return Err(Error::config(format!("label at {bad} exceeds class count")));
    }
    if cfg.batch_size == 0 || cfg.holdout_every < 2 {
        return Err(Error::config("batch_size must be ≥ 1 and holdout_every ≥ 2"));
    }
    let k = cfg.holdout_every;
    let (mut train_idx, mut hold_idx) = (Vec::new(), Vec::new());
    for i in 0..images.len() {
        if i % k == k - 1 {
            hold_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let per_sample = {
                let m: &Model = model;
                par::try_map_indexed(cfg.exec, batch.len(), |j| {
                    sample_gradient(m, &images[batch[j]], labels[batch[j]])
                })?
            };
            let scale = 1.0 / batch.len() as f64;
            let mut sum: Vec<Tensor> = model.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            for (loss, grads) in &per_sample {
                epoch_loss += loss;
                for (s, g) in sum.iter_mut().zip(grads) {
                    s.add_assign(g);
                }
            }
            for ((p, v), g) in model.params.iter_mut().zip(velocity.iter_mut()).zip(&sum) {
                for ((pv, vv), gv) in p.value.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = cfg.momentum * *vv + gv * scale;
                    *pv -= cfg.lr * *vv;
                }
            }
        }
        let mean_loss = epoch_loss / train_idx.len() as f64;
        if !mean_loss.is_finite() || model.params.iter().any(|p| !p.value.is_finite()) {
            return Err(Error::Divergence(format!("training diverged in epoch {epoch}")));
        }
        loss_curve.push(mean_loss);
    }
    model.trained = cfg.epochs > 0 || model.trained;
    model.train_seed = cfg.seed;
    let pick = |idx: &[usize]| -> (Vec<Tensor>, Vec<usize>) {
        (idx.iter().map(|&i| images[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    train_idx.sort_unstable();
    let (tx, ty) = pick(&train_idx);
    let (hx, hy) = pick(&hold_idx);
    Ok(TrainReport {
        epochs: cfg.epochs,
        train_accuracy: accuracy(model, &tx, &ty, cfg.exec)?,
        holdout_accuracy: accuracy(model, &hx, &hy, cfg.exec)?,
        loss_curve,
    })
}
