use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convert::ConverterSpec;
use crate::crossbar::TileLimits;
use crate::device::DeviceModelParams;
use crate::error::{Error, Result};
use crate::mapping::MappingConfig;
use crate::qat::{DatasetSpec, TrainConfig};

/// Converter and tiling settings as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareConfig {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub dac_bits: u32,
    pub adc_bits: u32,
    /// Amperes; omitted means worst-case sizing per tile.
    pub adc_full_scale: Option<f64>,
    /// Fraction of the worst-case per-tile range.
    pub adc_range_fraction: f64,
    pub correction_samples: usize,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            tile_rows: 128,
            tile_cols: 128,
            dac_bits: 8,
            adc_bits: 8,
            adc_full_scale: None,
            adc_range_fraction: 0.5,
            correction_samples: 10_000,
        }
    }
}

impl HardwareConfig {
    pub fn mapping(&self, device: &DeviceModelParams) -> MappingConfig {
        MappingConfig {
            tile: TileLimits {
                max_rows: self.tile_rows,
                max_cols: self.tile_cols,
            },
            dac: ConverterSpec {
                bits: self.dac_bits,
                full_scale: device.v_read_max,
            },
            adc_bits: self.adc_bits,
            adc_full_scale: self.adc_full_scale,
            adc_range_fraction: self.adc_range_fraction,
            correction_samples: self.correction_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Weight bit widths for the quantization sweep and Monte Carlo runs.
    pub bits: Vec<u32>,
    /// Programmed device instances per bit width.
    pub instances: usize,
    pub reset_pulses: usize,
    /// Training seeds per sweep cell.
    pub seeds: usize,
    /// Training samples in the PTQ calibration pass.
    pub calibration_samples: usize,
    pub cell_bench_cells: usize,
    pub device: DeviceModelParams,
    pub hardware: HardwareConfig,
    pub dataset: DatasetSpec,
    pub training: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 20250,
            output_dir: PathBuf::from("memxbar-out"),
            bits: vec![3, 4, 5, 6, 8],
            instances: 10,
            reset_pulses: 4,
            seeds: 3,
            calibration_samples: 1000,
            cell_bench_cells: 10_000,
            device: DeviceModelParams::default(),
            hardware: HardwareConfig::default(),
            dataset: DatasetSpec::default(),
            training: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn mapping(&self) -> MappingConfig {
        self.hardware.mapping(&self.device)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.mapping().validate(&self.device)?;
        if self.hardware.correction_samples < 1000 {
            return Err(Error::Config("hardware.correction_samples must be >= 1000".into()));
        }
        if let Some(b) = self.bits.iter().find(|b| !(2..=8).contains(*b)) {
            return Err(Error::Config(format!("weight bits {b} not in 2..=8")));
        }
        if self.instances == 0 || self.seeds == 0 || self.reset_pulses == 0 {
            return Err(Error::Config("instances, seeds and reset_pulses must be >= 1".into()));
        }
        if self.cell_bench_cells == 0 || self.calibration_samples == 0 {
            return Err(Error::Config("cell_bench_cells and calibration_samples must be >= 1".into()));
        }
        self.dataset.validate()?;
        self.training.validate()?;
        Ok(())
    }
}
