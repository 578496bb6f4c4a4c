//! A small multilayer perceptron with manual backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fake_quant_ste, Observer};
use crate::error::{Error, Result};

/// Dense layer; `weights` is row-major `in_features x out_features`, the
/// crossbar orientation (rows are inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dense layers with ReLU between them; the last layer emits logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyNet {
    pub layers: Vec<Dense>,
}

impl TinyNet {
    /// He-uniform initialization for layer widths `dims` (input first).
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Precondition(format!("invalid layer dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|d| {
                let (n, m) = (d[0], d[1]);
                let bound = (6.0 / n as f64).sqrt();
                Dense {
                    in_features: n,
                    out_features: m,
                    weights: (0..n * m).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: vec![0.0; m],
                }
            })
            .collect();
        Ok(TinyNet { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_features];
        d.extend(self.layers.iter().map(|l| l.out_features));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_features
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_features)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Layer shapes chain and buffers match their shapes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Precondition("network has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.in_features == 0
                || l.out_features == 0
                || l.weights.len() != l.in_features * l.out_features
                || l.bias.len() != l.out_features
            {
                return Err(Error::shape(
                    format!("layer {k}: {}x{}", l.in_features, l.out_features),
                    format!("{} weights, {} biases", l.weights.len(), l.bias.len()),
                ));
            }
            if k > 0 && self.layers[k - 1].out_features != l.in_features {
                return Err(Error::shape(self.layers[k - 1].out_features, l.in_features));
            }
        }
        Ok(())
    }
}

/// Observers for every weight tensor and every layer input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantContext {
    pub weight_bits: u32,
    pub weights: Vec<Observer>,
    pub activations: Vec<Observer>,
}

impl QuantContext {
    pub fn new(net: &TinyNet, weight_bits: u32) -> Self {
        QuantContext {
            weight_bits,
            weights: vec![Observer::weight(weight_bits); net.layers.len()],
            activations: vec![Observer::activation(); net.layers.len()],
        }
    }
}

/// How a forward pass treats quantization.
pub enum QuantMode<'a> {
    Float,
    /// Update observers from this pass, then fake-quantize (training).
    Observe(&'a mut QuantContext),
    /// Fake-quantize with fixed observers (inference).
    Frozen(&'a QuantContext),
}

/// Per-layer values saved for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Layer input after fake quantization.
    pub input_q: Vec<f64>,
    pub input_mask: Vec<f64>,
    pub weights_q: Vec<f64>,
    pub weight_mask: Vec<f64>,
    /// Pre-activation output.
    pub pre: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

fn quantize(
    t: &[f64],
    obs: Option<&mut Observer>,
    frozen: Option<&Observer>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match (obs, frozen) {
        (Some(o), _) => {
            o.observe(t)?;
            Ok(fake_quant_ste(t, o))
        }
        (None, Some(o)) => Ok(fake_quant_ste(t, o)),
        (None, None) => Ok((t.to_vec(), vec![1.0; t.len()])),
    }
}

/// `out[b][j] = sum_i a[b][i] * w[i][j] + bias[j]`.
pub fn affine(a: &[f64], w: &[f64], bias: &[f64], n: usize, m: usize) -> Vec<f64> {
    let batch = a.len() / n;
    let mut out = Vec::with_capacity(batch * m);
    for row in a.chunks(n) {
        let mut z = bias.to_vec();
        for (i, &ai) in row.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (zj, wij) in z.iter_mut().zip(&w[i * m..(i + 1) * m]) {
                *zj += ai * wij;
            }
        }
        out.extend(z);
    }
    out
}

pub fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Forward a row-major batch; returns logits and per-layer caches.
pub fn forward_cached(
    net: &TinyNet,
    x: &[f64],
    mut mode: QuantMode<'_>,
) -> Result<(Vec<f64>, Vec<LayerCache>)> {
    if !x.len().is_multiple_of(net.input_dim()) {
        return Err(Error::shape(format!("multiple of {}", net.input_dim()), x.len()));
    }
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut h = x.to_vec();
    for (k, layer) in net.layers.iter().enumerate() {
        let ((input_q, input_mask), (weights_q, weight_mask)) = match &mut mode {
            QuantMode::Float => (quantize(&h, None, None)?, quantize(&layer.weights, None, None)?),
            QuantMode::Observe(ctx) => {
                let a = quantize(&h, Some(&mut ctx.activations[k]), None)?;
                let w = quantize(&layer.weights, Some(&mut ctx.weights[k]), None)?;
                (a, w)
            }
            QuantMode::Frozen(ctx) => (
                quantize(&h, None, Some(&ctx.activations[k]))?,
                quantize(&layer.weights, None, Some(&ctx.weights[k]))?,
            ),
        };
        let pre = affine(&input_q, &weights_q, &layer.bias, layer.in_features, layer.out_features);
        h = pre.clone();
        if k + 1 < net.layers.len() {
            relu_inplace(&mut h);
        }
        caches.push(LayerCache {
            input_q,
            input_mask,
            weights_q,
            weight_mask,
            pre,
        });
    }
    Ok((h, caches))
}

pub fn forward(net: &TinyNet, x: &[f64], mode: QuantMode<'_>) -> Result<Vec<f64>> {
    Ok(forward_cached(net, x, mode)?.0)
}

/// Backpropagate `dlogits` (gradient w.r.t. the last pre-activation) with
/// straight-through gradients at every fake-quantization node.
pub fn backward(net: &TinyNet, caches: &[LayerCache], dlogits: &[f64]) -> Gradients {
    let n_layers = net.layers.len();
    let mut gw = vec![Vec::new(); n_layers];
    let mut gb = vec![Vec::new(); n_layers];
    let mut dz = dlogits.to_vec();
    for k in (0..n_layers).rev() {
        let layer = &net.layers[k];
        let cache = &caches[k];
        let (n, m) = (layer.in_features, layer.out_features);
        let mut dw = vec![0.0; n * m];
        let mut db = vec![0.0; m];
        let mut da = vec![0.0; cache.input_q.len()];
        for (b, dzb) in dz.chunks(m).enumerate() {
            let a = &cache.input_q[b * n..(b + 1) * n];
            for (d, g) in db.iter_mut().zip(dzb) {
                *d += g;
            }
            for i in 0..n {
                let wrow = &cache.weights_q[i * m..(i + 1) * m];
                let dwrow = &mut dw[i * m..(i + 1) * m];
                let mut acc = 0.0;
                for j in 0..m {
                    dwrow[j] += a[i] * dzb[j];
                    acc += dzb[j] * wrow[j];
                }
                da[b * n + i] = acc;
            }
        }
        for (d, mask) in dw.iter_mut().zip(&cache.weight_mask) {
            *d *= mask;
        }
        gw[k] = dw;
        gb[k] = db;
        if k > 0 {
            let prev = &caches[k - 1].pre;
            dz = da
                .iter()
                .zip(&cache.input_mask)
                .zip(prev)
                .map(|((g, mask), z)| if *z > 0.0 { g * mask } else { 0.0 })
                .collect();
        }
    }
    Gradients { weights: gw, bias: gb }
}

/// Mean softmax cross-entropy over the batch and its logit gradient.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = Vec::with_capacity(logits.len());
    let mut loss = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - mx).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += -(exps[y] / sum).ln();
        for (j, e) in exps.iter().enumerate() {
            let p = e / sum;
            grad.push((p - if j == y { 1.0 } else { 0.0 }) / batch as f64);
        }
    }
    (loss / batch as f64, grad)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}
