//! Quantization-aware training and post-training quantization.
//!
//! Observers track the running max-abs of every weight tensor and every
//! dense-layer input. Fake quantization snaps a tensor onto the symmetric
//! grid `k * max_abs / L`, `|k| <= L`, while keeping f64 arithmetic; its
//! gradient is passed straight through inside the clamp range.

pub mod data;
pub mod net;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::max_level;

pub use data::{Dataset, DatasetSpec};
pub use net::{QuantContext, TinyNet};
pub use train::{evaluate, ptq_quantize, train_float, train_qat, QuantizedNet, TrainConfig, TrainOutcome};

/// Activation (DAC) precision during QAT and simulated inference.
pub const ACTIVATION_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObserverTarget {
    Weight,
    Activation,
}

/// Per-tensor running max-abs statistic. Never decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub running_max_abs: f64,
    pub target: ObserverTarget,
    pub bits: u32,
}

impl Observer {
    pub fn new(target: ObserverTarget, bits: u32) -> Self {
        Observer {
            running_max_abs: 0.0,
            target,
            bits,
        }
    }

    pub fn weight(bits: u32) -> Self {
        Observer::new(ObserverTarget::Weight, bits)
    }

    pub fn activation() -> Self {
        Observer::new(ObserverTarget::Activation, ACTIVATION_BITS)
    }

    pub fn observe(&mut self, tensor: &[f64]) -> Result<()> {
        let mut m = self.running_max_abs;
        for &t in tensor {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("{:?} observer input", self.target)));
            }
            m = m.max(t.abs());
        }
        self.running_max_abs = m;
        Ok(())
    }

    pub fn max_level(&self) -> i32 {
        max_level(self.bits)
    }

    /// Grid step, or `None` while nothing nonzero has been observed.
    pub fn scale(&self) -> Option<f64> {
        (self.running_max_abs > 0.0).then(|| self.running_max_abs / self.max_level() as f64)
    }
}

/// Fake-quantize `tensor` on the observer's grid.
pub fn fake_quant(tensor: &[f64], obs: &Observer) -> Vec<f64> {
    fake_quant_ste(tensor, obs).0
}

/// Fake quantization plus the straight-through gradient mask (1 inside the
/// clamp range, 0 outside). A zero observer passes the tensor through.
pub fn fake_quant_ste(tensor: &[f64], obs: &Observer) -> (Vec<f64>, Vec<f64>) {
    let Some(scale) = obs.scale() else {
        log::warn!("fake_quant with an empty observer; passing tensor through");
        return (tensor.to_vec(), vec![1.0; tensor.len()]);
    };
    let l = obs.max_level() as f64;
    let mut out = Vec::with_capacity(tensor.len());
    let mut mask = Vec::with_capacity(tensor.len());
    for &t in tensor {
        let u = t / scale;
        out.push(u.round().clamp(-l, l) * scale);
        mask.push(if u.abs() <= l { 1.0 } else { 0.0 });
    }
    (out, mask)
}
