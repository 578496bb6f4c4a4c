//! Minibatch SGD for [`TinyNet`], with or without fake quantization, and
//! post-training quantization of float-trained networks.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::fake_quant;
use super::net::{argmax, backward, forward, forward_cached, softmax_cross_entropy, QuantContext, QuantMode, TinyNet};
use crate::error::{Error, Result};
use crate::rng::child_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Fraction of all steps spent ramping the learning rate up.
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 32,
            peak_lr: 0.05,
            warmup_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("epochs, batch_size and hidden widths must be >= 1".into()));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Linear warmup to `peak_lr`, then linear decay towards zero.
    pub fn learning_rate(&self, step: usize, total_steps: usize) -> f64 {
        let warmup = ((total_steps as f64 * self.warmup_fraction).round() as usize).max(1);
        let s = step as f64 + 1.0;
        if step < warmup {
            self.peak_lr * s / warmup as f64
        } else {
            let rest = (total_steps - warmup).max(1) as f64;
            self.peak_lr * (1.0 - (step - warmup) as f64 / rest).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TinyNet,
    /// Frozen observers for QAT runs.
    pub quant: Option<QuantContext>,
    pub curve: Vec<EpochStat>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// A network plus the observers used to fake-quantize it at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNet {
    pub net: TinyNet,
    pub quant: QuantContext,
}

fn train(
    config: &TrainConfig,
    data: &Dataset,
    weight_bits: Option<u32>,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    if let Some(bits) = weight_bits {
        if !(2..=8).contains(&bits) {
            return Err(Error::Precondition(format!("weight bits must be in 2..=8, got {bits}")));
        }
    }
    let mut dims = vec![data.dim];
    dims.extend(&config.hidden);
    dims.push(data.classes);
    let mut net = TinyNet::new(&dims, &mut child_rng(seed, &[0]))?;
    let mut quant = weight_bits.map(|b| QuantContext::new(&net, b));

    let n = data.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let diverged = |reason: String| Error::Divergence { seed, reason };

    for epoch in 0..config.epochs {
        order.shuffle(&mut child_rng(seed, &[1, epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let mut x = Vec::with_capacity(idx.len() * data.dim);
            let mut y = Vec::with_capacity(idx.len());
            for &i in idx {
                x.extend_from_slice(data.row(i));
                y.push(data.y[i]);
            }
            let mode = match quant.as_mut() {
                Some(q) => QuantMode::Observe(q),
                None => QuantMode::Float,
            };
            let (logits, caches) = forward_cached(&net, &x, mode).map_err(|e| diverged(e.to_string()))?;
            let (loss, dz) = softmax_cross_entropy(&logits, &y, data.classes);
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss} at epoch {epoch}")));
            }
            loss_sum += loss * idx.len() as f64;
            correct += logits
                .chunks(data.classes)
                .zip(&y)
                .filter(|(row, &t)| argmax(row) == t)
                .count();
            let grads = backward(&net, &caches, &dz);
            let lr = config.learning_rate(step, total);
            for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
            step += 1;
        }
        if !net.is_finite() {
            return Err(diverged(format!("non-finite parameters at epoch {epoch}")));
        }
        curve.push(EpochStat {
            epoch,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        });
    }
    Ok(TrainOutcome { net, quant, curve })
}

/// Full-precision baseline training.
pub fn train_float(config: &TrainConfig, data: &Dataset, seed: u64) -> Result<TrainOutcome> {
    train(config, data, None, seed)
}

/// Quantization-aware training: observers and fake quantization of weights
/// (`weight_bits`) and layer inputs (8 bits) are active from the first step.
pub fn train_qat(config: &TrainConfig, data: &Dataset, weight_bits: u32, seed: u64) -> Result<TrainOutcome> {
    train(config, data, Some(weight_bits), seed)
}

/// Post-training quantization: one float calibration pass populates the
/// activation observers, then weights are fake-quantized once.
pub fn ptq_quantize(net: &TinyNet, calibration: &Dataset, weight_bits: u32) -> Result<QuantizedNet> {
    if !(2..=8).contains(&weight_bits) {
        return Err(Error::Precondition(format!("weight bits must be in 2..=8, got {weight_bits}")));
    }
    let mut quant = QuantContext::new(net, weight_bits);
    let (_, caches) = forward_cached(net, &calibration.x, QuantMode::Float)?;
    for (obs, cache) in quant.activations.iter_mut().zip(&caches) {
        obs.observe(&cache.input_q)?;
    }
    let mut out = net.clone();
    for (layer, obs) in out.layers.iter_mut().zip(quant.weights.iter_mut()) {
        obs.observe(&layer.weights)?;
        layer.weights = fake_quant(&layer.weights, obs);
    }
    Ok(QuantizedNet { net: out, quant })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and accuracy; `quant` selects fake-quantized inference.
pub fn evaluate(net: &TinyNet, quant: Option<&QuantContext>, data: &Dataset) -> Result<Evaluation> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    const CHUNK: usize = 256;
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let x = &data.x[start * data.dim..end * data.dim];
        let y = &data.y[start..end];
        let mode = match quant {
            Some(q) => QuantMode::Frozen(q),
            None => QuantMode::Float,
        };
        let logits = forward(net, x, mode)?;
        loss_sum += softmax_cross_entropy(&logits, y, data.classes).0 * y.len() as f64;
        correct += logits
            .chunks(data.classes)
            .zip(y)
            .filter(|(row, &t)| argmax(row) == t)
            .count();
    }
    Ok(Evaluation {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}
