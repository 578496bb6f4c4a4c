//! Reference computations shared by the integration tests. Nothing here
//! calls into the pipeline being checked; the oracles are rebuilt from
//! first principles.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use memxbar::device::{program_cell, read_current};
use memxbar::qat::net::{backward, forward_cached, softmax_cross_entropy, QuantMode};
use memxbar::qat::{Observer, QuantContext, TinyNet};
use memxbar::{CellLevel, DeviceModelParams};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const G_LOW: f64 = 42.0e-6;
pub const G_HIGH: f64 = 250.1e-6;
pub const V_MAX: f64 = 0.6;
pub const DAC_LEVELS: i64 = 127;
pub const ADC_LEVELS: f64 = 127.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Zero-variance, linear device with a 208.1 uS window.
pub fn noiseless() -> DeviceModelParams {
    DeviceModelParams::ideal(G_LOW, G_HIGH)
}

pub fn closed_form_c(g_low: f64, g_high: f64, v_max: f64) -> f64 {
    1.0 / (v_max * (g_high - g_low))
}

/// Expected layer output from an integer matmul, and the tolerance of one
/// ADC step per (bit level, row block) partial sum carried to the output.
pub struct Oracle {
    pub expected: Vec<f64>,
    pub bound: f64,
    pub levels: Vec<i64>,
}

pub fn integer_matmul_oracle(
    w: &[f64],
    n_in: usize,
    n_out: usize,
    bits: u32,
    x: &[f64],
    input_scale: f64,
    tile_rows: usize,
) -> Oracle {
    let l_w = (1i64 << (bits - 1)) - 1;
    let max_abs = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs > 0.0 { max_abs / l_w as f64 } else { 1.0 };
    let q: Vec<i64> = w
        .iter()
        .map(|v| ((v / scale).round() as i64).clamp(-l_w, l_w))
        .collect();
    let codes: Vec<i64> = x
        .iter()
        .map(|v| ((v * input_scale).clamp(-1.0, 1.0) * DAC_LEVELS as f64).round() as i64)
        .collect();
    let mut acc = vec![0i64; n_out];
    for i in 0..n_in {
        for j in 0..n_out {
            acc[j] += codes[i] * q[i * n_out + j];
        }
    }
    let expected = acc
        .iter()
        .map(|&a| a as f64 / DAC_LEVELS as f64 * scale / input_scale)
        .collect();

    let bound = adc_bound(n_in, bits, scale, input_scale, tile_rows);
    Oracle { expected, bound, levels: q }
}

/// One ADC step per (bit level, row block) partial sum, in output units, for
/// the noiseless device with worst-case ADC ranges.
pub fn adc_bound(n_in: usize, bits: u32, scale: f64, input_scale: f64, tile_rows: usize) -> f64 {
    let l_w = ((1i64 << (bits - 1)) - 1) as f64;
    let c = closed_form_c(G_LOW, G_HIGH, V_MAX);
    let mut step_sum = 0.0;
    let mut r0 = 0;
    while r0 < n_in {
        let rows = tile_rows.min(n_in - r0);
        step_sum += rows as f64 * G_HIGH * V_MAX / ADC_LEVELS;
        r0 += tile_rows;
    }
    // bit-level significances 2^(bits-2) .. 1 sum to l_w
    l_w * step_sum * c * scale / input_scale
}

/// Noiseless crossbar emulation in integer codes: per tile and bit level,
/// the partial sum of DAC code times sign-magnitude digit is rounded once on
/// the tile's worst-case ADC range, then levels are shift-added and rescaled.
pub fn emulate_noiseless_layer(
    w: &[f64],
    n_in: usize,
    n_out: usize,
    bits: u32,
    scale: f64,
    x: &[f64],
    input_scale: f64,
    tile_rows: usize,
) -> Vec<f64> {
    let l_w = (1i64 << (bits - 1)) - 1;
    let q: Vec<i64> = w
        .iter()
        .map(|v| ((v / scale).round() as i64).clamp(-l_w, l_w))
        .collect();
    let codes: Vec<i64> = x
        .iter()
        .map(|v| ((v * input_scale).clamp(-1.0, 1.0) * DAC_LEVELS as f64).round() as i64)
        .collect();
    let ratio = (G_HIGH - G_LOW) / G_HIGH;
    let mut out = vec![0.0; n_out];
    for k in 0..(bits - 1) as usize {
        let shift = bits as usize - 2 - k;
        let sig = (1i64 << shift) as f64;
        let mut r0 = 0;
        while r0 < n_in {
            let rows = tile_rows.min(n_in - r0);
            for j in 0..n_out {
                let partial: i64 = (r0..r0 + rows)
                    .map(|i| {
                        let v = q[i * n_out + j];
                        codes[i] * v.signum() * ((v.abs() >> shift) & 1)
                    })
                    .sum();
                let adc = (partial as f64 * ratio / rows as f64).round().clamp(-ADC_LEVELS, ADC_LEVELS);
                out[j] += sig * adc * rows as f64 / (ADC_LEVELS * ratio);
            }
            r0 += tile_rows;
        }
    }
    out.iter().map(|v| v * scale / input_scale).collect()
}

/// Random weights and an input scaled so the DAC never clips.
pub fn random_case<R: Rng>(rng: &mut R, n_in: usize, n_out: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let a: f64 = rng.random_range(0.01..2.0);
    let b: f64 = rng.random_range(0.1..5.0);
    let w: Vec<f64> = (0..n_in * n_out).map(|_| rng.random_range(-a..a)).collect();
    let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-b..b)).collect();
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (w, x, if m > 0.0 { 1.0 / m } else { 1.0 })
}

/// Paired-cell (target, current difference) observations drawn through the
/// public device API.
pub fn correction_observations<R: Rng>(params: &DeviceModelParams, count: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(3 * count);
    for _ in 0..count {
        let x: f64 = rng.random_range(-1.0..=1.0);
        let v = x * params.v_read_max;
        for (pos, neg, t) in [
            (CellLevel::High, CellLevel::Low, x),
            (CellLevel::Low, CellLevel::Low, 0.0),
            (CellLevel::Low, CellLevel::High, -x),
        ] {
            let p = program_cell(params, pos, rng);
            let n = program_cell(params, neg, rng);
            let d = read_current(&p, params, v, rng).unwrap() - read_current(&n, params, v, rng).unwrap();
            out.push((t, d));
        }
    }
    out
}

/// Grid search for the c minimizing the squared error, refined three times
/// around the best grid point.
pub fn brute_force_c(obs: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let sse = |c: f64| obs.iter().map(|(t, d)| (t - c * d).powi(2)).sum::<f64>();
    let (mut lo, mut hi) = (lo, hi);
    let mut best = lo;
    for _ in 0..4 {
        let n = 400;
        let step = (hi - lo) / n as f64;
        best = (0..=n)
            .map(|k| lo + k as f64 * step)
            .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
            .unwrap();
        lo = best - step;
        hi = best + step;
    }
    best
}

pub struct SteReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

fn softmax_ce(logits: &[f64], labels: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Forward of the straight-through surrogate: every quantizer is replaced by
/// `t + (fq(t0) - t0)` with the offset frozen at the base point. Returns the
/// loss and the sign pattern of all hidden pre-activations.
fn surrogate(
    net: &TinyNet,
    off_w: &[Vec<f64>],
    off_a: &[Vec<f64>],
    x: &[f64],
    labels: &[usize],
) -> (f64, Vec<bool>) {
    let mut h = x.to_vec();
    let mut signs = Vec::new();
    let last = net.layers.len() - 1;
    for (k, layer) in net.layers.iter().enumerate() {
        let (n, m) = (layer.in_features, layer.out_features);
        let a: Vec<f64> = h.iter().zip(&off_a[k]).map(|(v, o)| v + o).collect();
        let w: Vec<f64> = layer.weights.iter().zip(&off_w[k]).map(|(v, o)| v + o).collect();
        let batch = a.len() / n;
        let mut z = vec![0.0; batch * m];
        for b in 0..batch {
            for j in 0..m {
                let mut s = layer.bias[j];
                for i in 0..n {
                    s += a[b * n + i] * w[i * m + j];
                }
                z[b * m + j] = s;
            }
        }
        if k < last {
            signs.extend(z.iter().map(|v| *v > 0.0));
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            h = z;
        }
    }
    (softmax_ce(&h, labels, net.output_dim()), signs)
}

/// Compare the straight-through backward pass against central differences
/// of the frozen-offset surrogate at `points` random weight coordinates,
/// skipping coordinates whose perturbation crosses a ReLU kink.
/// Observers sit at 1.1x the observed range so every value is in range.
pub fn ste_gradient_check(
    net: &TinyNet,
    x: &[f64],
    labels: &[usize],
    bits: u32,
    points: usize,
    seed: u64,
) -> SteReport {
    let classes = net.output_dim();
    let mut ctx = QuantContext::new(net, bits);
    for (k, layer) in net.layers.iter().enumerate() {
        let wmax = layer.weights.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ctx.weights[k] = Observer::weight(bits);
        ctx.weights[k].observe(&[1.1 * wmax]).unwrap();
    }
    // each activation range only affects later layers, so size them in order
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ctx.activations[0] = Observer::activation();
    ctx.activations[0].observe(&[1.1 * xmax]).unwrap();
    for k in 1..net.layers.len() {
        ctx.activations[k] = Observer::activation();
        ctx.activations[k].observe(&[f64::MIN_POSITIVE]).unwrap();
        let (_, caches) = forward_cached(net, x, QuantMode::Frozen(&ctx)).unwrap();
        let amax = caches[k - 1].pre.iter().fold(0.0f64, |m, v| m.max(*v));
        ctx.activations[k] = Observer::activation();
        ctx.activations[k].observe(&[1.1 * amax]).unwrap();
    }
    let (logits, caches) = forward_cached(net, x, QuantMode::Frozen(&ctx)).unwrap();
    for c in &caches {
        assert!(c.weight_mask.iter().chain(&c.input_mask).all(|&m| m == 1.0));
    }
    let (loss, dz) = softmax_cross_entropy(&logits, labels, classes);
    let grads = backward(net, &caches, &dz);

    let mut off_w = Vec::new();
    let mut off_a = Vec::new();
    for (k, layer) in net.layers.iter().enumerate() {
        off_w.push(caches[k].weights_q.iter().zip(&layer.weights).map(|(q, w)| q - w).collect::<Vec<_>>());
        let a0: Vec<f64> = if k == 0 {
            x.to_vec()
        } else {
            caches[k - 1].pre.iter().map(|v| v.max(0.0)).collect()
        };
        off_a.push(caches[k].input_q.iter().zip(&a0).map(|(q, a)| q - a).collect::<Vec<_>>());
    }
    let (base, base_signs) = surrogate(net, &off_w, &off_a, x, labels);
    assert!((base - loss).abs() <= 1e-10 * loss.abs().max(1.0), "surrogate {base} vs {loss}");

    let coords: Vec<(usize, usize)> = net
        .layers
        .iter()
        .enumerate()
        .flat_map(|(k, l)| (0..l.weights.len()).map(move |i| (k, i)))
        .collect();
    let mut r = rng(seed);
    let h = 1e-4;
    let mut report = SteReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_err: 0.0,
    };
    for idx in sample(&mut r, coords.len(), coords.len()) {
        if report.checked == points {
            break;
        }
        let (k, i) = coords[idx];
        let mut plus = net.clone();
        plus.layers[k].weights[i] += h;
        let mut minus = net.clone();
        minus.layers[k].weights[i] -= h;
        let (lp, sp) = surrogate(&plus, &off_w, &off_a, x, labels);
        let (lm, sm) = surrogate(&minus, &off_w, &off_a, x, labels);
        if sp != base_signs || sm != base_signs {
            report.skipped_kinks += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let g = grads.weights[k][i];
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        report.max_rel_err = report.max_rel_err.max(rel);
        report.checked += 1;
    }
    report
}

/// Parse a CSV file into header-keyed string maps.
pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = rd.headers().unwrap().clone();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
