//! Monte Carlo evaluation of QAT networks on programmed device instances.
//!
//! Every dense layer of a network is mapped once; each device instance is a
//! clone whose cells are reset with random pulses and programmed again from
//! an independent child seed. Instances run in parallel and are reported in
//! index order.

use std::time::Instant;

use rayon::prelude::*;

use crate::convert::SaturationTally;
use crate::device::DeviceModelParams;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::mapping::{map_linear, MappedLinear, MappingConfig, QuantScheme};
use crate::qat::net::argmax;
use crate::qat::{evaluate, Dataset, QuantizedNet};
use crate::rng::{child_rng, child_seed};
use crate::stats::Summary;

/// Fraction of clipped ADC conversions above which a run is flagged.
pub const SATURATION_WARNING_RATIO: f64 = 0.01;

/// A network whose dense layers live on crossbars. Biases stay digital.
#[derive(Debug, Clone)]
pub struct MappedNetwork {
    pub layers: Vec<MappedLinear>,
    pub biases: Vec<Vec<f64>>,
}

impl MappedNetwork {
    pub fn map(
        qnet: &QuantizedNet,
        params: &DeviceModelParams,
        mapping: &MappingConfig,
        seed: u64,
    ) -> Result<Self> {
        qnet.net.validate()?;
        let mut layers = Vec::with_capacity(qnet.net.layers.len());
        for (k, layer) in qnet.net.layers.iter().enumerate() {
            let scheme = QuantScheme::from_max_abs(
                qnet.quant.weights[k].running_max_abs,
                qnet.quant.weight_bits,
            )?;
            let act_max = qnet.quant.activations[k].running_max_abs;
            let input_scale = if act_max > 0.0 { 1.0 / act_max } else { 1.0 };
            layers.push(map_linear(
                &layer.weights,
                layer.in_features,
                layer.out_features,
                scheme,
                input_scale,
                params,
                mapping,
                child_seed(seed, &[k as u64]),
            )?);
        }
        Ok(MappedNetwork {
            layers,
            biases: qnet.net.layers.iter().map(|l| l.bias.clone()).collect(),
        })
    }

    /// Reset and program every cell again: a new device instance.
    pub fn reprogram(&mut self, num_pulses: usize, seed: u64) -> Result<()> {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer.reprogram(num_pulses, child_seed(seed, &[k as u64]))?;
        }
        Ok(())
    }

    pub fn forward<R: rand::Rng + ?Sized>(
        &self,
        x: &[f64],
        rng: &mut R,
        tally: &mut SaturationTally,
    ) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, (layer, bias)) in self.layers.iter().zip(&self.biases).enumerate() {
            h = layer.forward_with_tally(&h, rng, tally)?;
            for (v, b) in h.iter_mut().zip(bias) {
                *v += b;
                if k < last && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(h)
    }

    /// Classification accuracy; sample `i` draws read noise from child
    /// stream `i` of `seed`.
    pub fn evaluate(&self, data: &Dataset, seed: u64) -> Result<(f64, SaturationTally)> {
        let per_sample: Vec<(bool, SaturationTally)> = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let mut tally = SaturationTally::default();
                let mut rng = child_rng(seed, &[i as u64]);
                let logits = self.forward(data.row(i), &mut rng, &mut tally)?;
                Ok((argmax(&logits) == data.y[i], tally))
            })
            .collect::<Result<_>>()?;
        let mut tally = SaturationTally::default();
        let mut correct = 0usize;
        for (ok, t) in per_sample {
            correct += ok as usize;
            tally.merge(t);
        }
        Ok((correct as f64 / data.len() as f64, tally))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub instance: usize,
    pub accuracy: f64,
    pub error: f64,
    pub saturation: SaturationTally,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub bits: u32,
    /// Error of the fake-quantized digital model on the same test set.
    pub digital_error: f64,
    pub instances: Vec<InstanceResult>,
    /// Statistics of the per-instance error.
    pub aggregate: Summary,
    pub saturation: SaturationTally,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn from_instances(bits: u32, digital_error: f64, instances: Vec<InstanceResult>, wall_clock_secs: f64) -> Result<Self> {
        let errors: Vec<f64> = instances.iter().map(|r| r.error).collect();
        let aggregate = Summary::of(&errors)
            .ok_or_else(|| Error::Precondition("report needs at least one instance".into()))?;
        let mut saturation = SaturationTally::default();
        for r in &instances {
            saturation.merge(r.saturation);
        }
        Ok(RunReport {
            bits,
            digital_error,
            instances,
            aggregate,
            saturation,
            wall_clock_secs,
        })
    }

    /// `(max - mean) / mean` of the per-instance error.
    pub fn relative_spread(&self) -> f64 {
        let a = &self.aggregate;
        if a.mean == 0.0 {
            0.0
        } else {
            (a.max - a.mean) / a.mean
        }
    }

    /// Mean analog error relative to the digital fake-quant error.
    pub fn relative_degradation(&self) -> f64 {
        if self.digital_error == 0.0 {
            self.aggregate.mean
        } else {
            (self.aggregate.mean - self.digital_error) / self.digital_error
        }
    }
}

/// Evaluate each `(bits, net)` pair on `config.instances` device instances.
pub fn run_memristor_eval(
    config: &ExperimentConfig,
    nets: &[(u32, QuantizedNet)],
    test: &Dataset,
) -> Result<Vec<RunReport>> {
    config.validate()?;
    let mapping = config.mapping();
    let mut reports = Vec::with_capacity(nets.len());
    for (bits, qnet) in nets {
        let started = Instant::now();
        let bits = *bits;
        let digital = evaluate(&qnet.net, Some(&qnet.quant), test)?;
        let base = MappedNetwork::map(
            qnet,
            &config.device,
            &mapping,
            child_seed(config.master_seed, &[20, bits as u64]),
        )?;
        let instances: Vec<InstanceResult> = (0..config.instances)
            .into_par_iter()
            .map(|i| {
                let mut inst = base.clone();
                inst.reprogram(
                    config.reset_pulses,
                    child_seed(config.master_seed, &[21, bits as u64, i as u64]),
                )?;
                let (accuracy, saturation) =
                    inst.evaluate(test, child_seed(config.master_seed, &[22, bits as u64, i as u64]))?;
                Ok(InstanceResult {
                    instance: i,
                    accuracy,
                    error: 1.0 - accuracy,
                    saturation,
                })
            })
            .collect::<Result<_>>()?;
        let report = RunReport::from_instances(
            bits,
            1.0 - digital.accuracy,
            instances,
            started.elapsed().as_secs_f64(),
        )?;
        if report.saturation.ratio() > SATURATION_WARNING_RATIO {
            log::warn!(
                "{bits}-bit: ADC saturation in {:.2}% of conversions",
                100.0 * report.saturation.ratio()
            );
        }
        reports.push(report);
    }
    Ok(reports)
}
