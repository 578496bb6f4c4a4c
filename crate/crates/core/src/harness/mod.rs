//! Experiment runners behind the `memxbar` CLI.

pub mod calibrate;
pub mod cellbench;
pub mod config;
pub mod montecarlo;
pub mod report;
pub mod sweep;

pub use calibrate::{calibrate, CalibrationResult};
pub use cellbench::{check_table1, run_cell_benchmark, CellBenchRow, WindowCheck};
pub use config::ExperimentConfig;
pub use montecarlo::{run_memristor_eval, InstanceResult, RunReport};
pub use sweep::{run_quant_sweep, SweepResult, SweepRow};
