//! Float baseline vs. post-training quantization vs. quantization-aware
//! training across weight bit widths and training seeds.

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::qat::train::EpochStat;
use crate::qat::{evaluate, ptq_quantize, train_float, train_qat, Dataset, QuantizedNet, TinyNet};
use crate::rng::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Float,
    Ptq,
    Qat,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Float => "float",
            Method::Ptq => "ptq",
            Method::Qat => "qat",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "float" => Some(Method::Float),
            "ptq" => Some(Method::Ptq),
            "qat" => Some(Method::Qat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    /// 32 for the float baseline.
    pub bits: u32,
    pub seed_index: usize,
    /// `None` when training diverged.
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub train_loss: Option<f64>,
    pub note: String,
}

/// Everything a sweep produced: table rows plus the trained models.
#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub float_nets: Vec<(usize, TinyNet, Vec<EpochStat>)>,
    /// `(bits, seed_index, net, curve)`.
    pub qat_nets: Vec<(u32, usize, QuantizedNet, Vec<EpochStat>)>,
}

impl SweepResult {
    pub fn qat_net(&self, bits: u32, seed_index: usize) -> Option<&QuantizedNet> {
        self.qat_nets
            .iter()
            .find(|(b, s, _, _)| *b == bits && *s == seed_index)
            .map(|(_, _, n, _)| n)
    }

    /// Mean accuracy over seeds, skipping diverged cells.
    pub fn mean_accuracy(&self, method: Method, bits: u32) -> Option<f64> {
        let acc: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.bits == bits)
            .filter_map(|r| r.accuracy)
            .collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }
}

pub fn training_seed(config: &ExperimentConfig, seed_index: usize) -> u64 {
    child_seed(config.master_seed, &[10, seed_index as u64])
}

fn diverged_row(method: Method, bits: u32, seed_index: usize, err: &crate::Error) -> SweepRow {
    log::warn!("{} {bits}-bit seed {seed_index}: {err}", method.as_str());
    SweepRow {
        method,
        bits,
        seed_index,
        accuracy: None,
        loss: None,
        train_loss: None,
        note: err.to_string(),
    }
}

/// Train and evaluate every (method, bits, seed) cell. Diverged cells are
/// reported and the sweep continues.
pub fn run_quant_sweep(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<SweepResult> {
    config.validate()?;
    let calibration = train.head(config.calibration_samples);

    let per_seed: Vec<_> = (0..config.seeds)
        .into_par_iter()
        .map(|s| -> Result<_> {
            let seed = training_seed(config, s);
            let mut rows = Vec::new();
            let mut float_net = None;
            match train_float(&config.training, train, seed) {
                Ok(out) => {
                    let ev = evaluate(&out.net, None, test)?;
                    rows.push(SweepRow {
                        method: Method::Float,
                        bits: 32,
                        seed_index: s,
                        accuracy: Some(ev.accuracy),
                        loss: Some(ev.loss),
                        train_loss: Some(out.final_loss()),
                        note: String::new(),
                    });
                    for &bits in &config.bits {
                        let q = ptq_quantize(&out.net, &calibration, bits)?;
                        let ev = evaluate(&q.net, Some(&q.quant), test)?;
                        rows.push(SweepRow {
                            method: Method::Ptq,
                            bits,
                            seed_index: s,
                            accuracy: Some(ev.accuracy),
                            loss: Some(ev.loss),
                            train_loss: None,
                            note: String::new(),
                        });
                    }
                    float_net = Some((s, out.net, out.curve));
                }
                Err(e) => rows.push(diverged_row(Method::Float, 32, s, &e)),
            }
            Ok((rows, float_net))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(u32, usize)> = config
        .bits
        .iter()
        .flat_map(|&b| (0..config.seeds).map(move |s| (b, s)))
        .collect();
    let qat: Vec<_> = cells
        .par_iter()
        .map(|&(bits, s)| -> Result<_> {
            match train_qat(&config.training, train, bits, training_seed(config, s)) {
                Ok(out) => {
                    let quant = out.quant.clone().expect("QAT run has observers");
                    let ev = evaluate(&out.net, Some(&quant), test)?;
                    let row = SweepRow {
                        method: Method::Qat,
                        bits,
                        seed_index: s,
                        accuracy: Some(ev.accuracy),
                        loss: Some(ev.loss),
                        train_loss: Some(out.final_loss()),
                        note: String::new(),
                    };
                    let net = QuantizedNet { net: out.net, quant };
                    Ok((row, Some((bits, s, net, out.curve))))
                }
                Err(e) => Ok((diverged_row(Method::Qat, bits, s, &e), None)),
            }
        })
        .collect::<Result<_>>()?;

    let mut result = SweepResult::default();
    for (rows, net) in per_seed {
        result.rows.extend(rows);
        result.float_nets.extend(net);
    }
    for (row, net) in qat {
        result.rows.push(row);
        result.qat_nets.extend(net);
    }
    result
        .rows
        .sort_by_key(|a| (a.method, a.bits, a.seed_index));
    Ok(result)
}
