//! DAC and ADC models on a symmetric signed mid-tread grid.
//!
//! A `bits`-bit converter has `L = 2^(bits-1) - 1` levels on each side of an
//! exactly representable zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub bits: u32,
    /// Volts for a DAC, amperes for an ADC.
    pub full_scale: f64,
}

impl ConverterSpec {
    pub fn new(bits: u32, full_scale: f64) -> Result<Self> {
        let spec = ConverterSpec { bits, full_scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=24).contains(&self.bits) {
            return Err(Error::InvalidConverter(format!(
                "bits must be in 2..=24, got {}",
                self.bits
            )));
        }
        if !(self.full_scale > 0.0 && self.full_scale.is_finite()) {
            return Err(Error::InvalidConverter(format!(
                "full_scale must be positive, got {}",
                self.full_scale
            )));
        }
        Ok(())
    }

    /// Levels per side.
    pub fn max_code(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Physical value of one code step.
    pub fn step(&self) -> f64 {
        self.full_scale / self.max_code() as f64
    }

    /// Integer DAC code for a normalized input (clamped to [-1, 1]).
    pub fn dac_code(&self, x_norm: f64) -> i32 {
        let l = self.max_code() as f64;
        // NaN maps to zero
        let x = if x_norm.is_nan() { 0.0 } else { x_norm.clamp(-1.0, 1.0) };
        (x * l).round() as i32
    }

    /// Read voltage for a normalized input.
    pub fn dac(&self, x_norm: f64) -> f64 {
        self.code_to_value(self.dac_code(x_norm))
    }

    /// Quantize a current to a code; saturation is recorded in `tally`.
    pub fn adc(&self, current: f64, tally: &mut SaturationTally) -> i32 {
        let l = self.max_code();
        let raw = (current / self.full_scale * l as f64).round();
        tally.conversions += 1;
        if raw > l as f64 {
            tally.saturated += 1;
            l
        } else if raw < -(l as f64) {
            tally.saturated += 1;
            -l
        } else {
            raw as i32
        }
    }

    pub fn code_to_value(&self, code: i32) -> f64 {
        code as f64 / self.max_code() as f64 * self.full_scale
    }
}

/// Count of ADC conversions and of those that clipped. Merged by summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaturationTally {
    pub conversions: u64,
    pub saturated: u64,
}

impl SaturationTally {
    pub fn merge(&mut self, other: SaturationTally) {
        self.conversions += other.conversions;
        self.saturated += other.saturated;
    }

    pub fn ratio(&self) -> f64 {
        if self.conversions == 0 {
            0.0
        } else {
            self.saturated as f64 / self.conversions as f64
        }
    }
}
