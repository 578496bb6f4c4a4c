//! Parametric stochastic model of a single memristor cell.
//!
//! Programming draws a conductance from a zero-truncated Gaussian around the
//! mean of the requested state. Reading applies Ohm's law with a quadratic
//! I-V nonlinearity and multiplicative read noise. Thermal noise is folded
//! into the read noise term.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistical parameters of a memristor cell population.
///
/// Conductances are in siemens, `nonlin_alpha` in 1/V, voltages in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceModelParams {
    /// Mean low-conductance (high resistance) state.
    pub g_low_mean: f64,
    pub g_low_rel_std: f64,
    /// Mean high-conductance (low resistance) state.
    pub g_high_mean: f64,
    pub g_high_rel_std: f64,
    /// Relative spread when programming the intermediate state.
    pub g_half_rel_std: f64,
    pub nonlin_alpha: f64,
    pub read_noise_rel_std: f64,
    pub v_read_max: f64,
}

impl Default for DeviceModelParams {
    /// Calibrated against the measured paired-cell statistics (see
    /// `memxbar calibrate`).
    fn default() -> Self {
        DeviceModelParams {
            g_low_mean: 42.0e-6,
            g_low_rel_std: 0.169,
            g_high_mean: 250.0e-6,
            g_high_rel_std: 0.0452,
            g_half_rel_std: 0.1267,
            nonlin_alpha: -0.0254,
            read_noise_rel_std: 0.01,
            v_read_max: 0.6,
        }
    }
}

impl DeviceModelParams {
    /// Starting point of the calibration search.
    pub fn uncalibrated() -> Self {
        DeviceModelParams {
            g_low_mean: 42.0e-6,
            g_low_rel_std: 0.25,
            g_high_mean: 250.0e-6,
            g_high_rel_std: 0.06,
            g_half_rel_std: 0.18,
            nonlin_alpha: 0.0,
            read_noise_rel_std: 0.01,
            v_read_max: 0.6,
        }
    }

    /// Noise-free, linear device with the given conductance means.
    pub fn ideal(g_low_mean: f64, g_high_mean: f64) -> Self {
        DeviceModelParams {
            g_low_mean,
            g_low_rel_std: 0.0,
            g_high_mean,
            g_high_rel_std: 0.0,
            g_half_rel_std: 0.0,
            nonlin_alpha: 0.0,
            read_noise_rel_std: 0.0,
            v_read_max: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.g_low_mean,
            self.g_low_rel_std,
            self.g_high_mean,
            self.g_high_rel_std,
            self.g_half_rel_std,
            self.nonlin_alpha,
            self.read_noise_rel_std,
            self.v_read_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.g_low_mean <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "g_low_mean must be positive, got {}",
                self.g_low_mean
            )));
        }
        if self.g_high_mean <= self.g_low_mean {
            return Err(Error::InvalidParams(format!(
                "g_high_mean ({}) must exceed g_low_mean ({})",
                self.g_high_mean, self.g_low_mean
            )));
        }
        if self.g_low_rel_std < 0.0
            || self.g_high_rel_std < 0.0
            || self.g_half_rel_std < 0.0
            || self.read_noise_rel_std < 0.0
        {
            return Err(Error::InvalidParams("relative spreads must be >= 0".into()));
        }
        if self.v_read_max <= 0.0 {
            return Err(Error::InvalidParams("v_read_max must be positive".into()));
        }
        Ok(())
    }

    /// Nominal paired difference `g_high_mean - g_low_mean`.
    pub fn delta_g(&self) -> f64 {
        self.g_high_mean - self.g_low_mean
    }

    /// Mean and absolute standard deviation of a programmed state.
    pub fn level_distribution(&self, level: CellLevel) -> (f64, f64) {
        match level {
            CellLevel::Low => (self.g_low_mean, self.g_low_mean * self.g_low_rel_std),
            CellLevel::High => (self.g_high_mean, self.g_high_mean * self.g_high_rel_std),
            CellLevel::Half => {
                let mean = 0.5 * (self.g_low_mean + self.g_high_mean);
                (mean, mean * self.g_half_rel_std)
            }
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.g_low_rel_std == 0.0
            && self.g_high_rel_std == 0.0
            && self.g_half_rel_std == 0.0
            && self.read_noise_rel_std == 0.0
    }
}

/// Programming target of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellLevel {
    Low,
    High,
    Half,
}

/// A cell after programming. `target` is `None` after a random reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgrammedCell {
    pub g_actual: f64,
    pub target: Option<CellLevel>,
}

fn positive_gaussian<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> f64 {
    if std == 0.0 {
        return mean;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let g = mean + std * z;
        if g > 0.0 {
            return g;
        }
    }
}

/// Program a cell to `target`. Each call is an independent draw.
pub fn program_cell<R: Rng + ?Sized>(
    params: &DeviceModelParams,
    target: CellLevel,
    rng: &mut R,
) -> ProgrammedCell {
    debug_assert!(params.validate().is_ok());
    let (mean, std) = params.level_distribution(target);
    ProgrammedCell {
        g_actual: positive_gaussian(mean, std, rng),
        target: Some(target),
    }
}

/// Noisy nonlinear readout `g * v * (1 + alpha * v) * (1 + eps)`.
pub fn read_current<R: Rng + ?Sized>(
    cell: &ProgrammedCell,
    params: &DeviceModelParams,
    v: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(v.abs() <= params.v_read_max) {
        return Err(Error::VoltageOutOfRange {
            voltage: v,
            limit: params.v_read_max,
        });
    }
    Ok(read_current_unchecked(cell.g_actual, params, v, rng))
}

/// Readout without the range check. Callers validate the voltage vector once.
#[inline]
pub(crate) fn read_current_unchecked<R: Rng + ?Sized>(
    g: f64,
    params: &DeviceModelParams,
    v: f64,
    rng: &mut R,
) -> f64 {
    // zero input reads exactly zero and consumes no randomness
    if v == 0.0 {
        return 0.0;
    }
    let ideal = g * v * (1.0 + params.nonlin_alpha * v);
    if params.read_noise_rel_std == 0.0 {
        ideal
    } else {
        let eps: f64 = StandardNormal.sample(rng);
        ideal * (1.0 + params.read_noise_rel_std * eps)
    }
}

/// Apply `num_pulses` randomly drawn voltage pulses. Each pulse leaves the
/// cell at a conductance uniform in `[g_low_mean, g_high_mean]`, so the
/// result carries no memory of the previous state.
pub fn reset_cell_random<R: Rng + ?Sized>(
    cell: &ProgrammedCell,
    params: &DeviceModelParams,
    num_pulses: usize,
    rng: &mut R,
) -> Result<ProgrammedCell> {
    if num_pulses == 0 {
        return Err(Error::Precondition("num_pulses must be >= 1".into()));
    }
    let mut g = cell.g_actual;
    for _ in 0..num_pulses {
        // normalized pulse amplitude; the post-pulse state is set by the
        // last pulse alone
        let pulse: f64 = rng.random_range(-1.0..=1.0);
        g = params.g_low_mean + params.delta_g() * 0.5 * (pulse + 1.0);
    }
    Ok(ProgrammedCell {
        g_actual: g,
        target: None,
    })
}
