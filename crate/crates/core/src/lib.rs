//! Variability-aware memristor crossbar simulation.
//!
//! Quantized linear layers are executed as analog vector-matrix products on
//! paired-bitline crossbar tiles: each signed weight is the difference of a
//! positive and a negative memristor, higher weight precision is obtained by
//! stacking one ternary crossbar per bit level, and large matrices are tiled.
//! Inputs enter through a DAC, column currents leave through an ADC.
//!
//! The crate also contains a small quantization-aware training engine and the
//! Monte Carlo experiment harness behind the `memxbar` command line tool.

pub mod checkpoint;
pub mod convert;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod harness;
pub mod mapping;
pub mod qat;
pub mod rng;
pub mod stats;

pub use convert::{ConverterSpec, SaturationTally};
pub use crossbar::CrossbarTile;
pub use device::{CellLevel, DeviceModelParams, ProgrammedCell};
pub use error::{Error, Result};
pub use mapping::{MappedLinear, QuantScheme};
pub use qat::{Observer, TinyNet};
