//! Single-cell product statistics of paired memristors.
//!
//! Each benchmark row programs independent (positive, negative) pairs,
//! reads them at `x * v_read_max` and corrects the current difference with
//! the fitted correction factor. The five rows mirror the measured
//! reference table: three input magnitudes against weight 1, weight 0, and
//! a half-conductance weight.

use rayon::prelude::*;
use serde::Serialize;

use crate::device::{program_cell, read_current_unchecked, CellLevel, DeviceModelParams};
use crate::error::Result;
use crate::mapping::fit_correction_factor;
use crate::rng::child_rng;
use crate::stats::Summary;

/// One benchmark operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOp {
    pub name: &'static str,
    pub input: f64,
    pub positive: CellLevel,
    /// Measured reference mean and standard deviation.
    pub reference: (f64, f64),
}

pub const CELL_OPS: [CellOp; 5] = [
    CellOp {
        name: "1.0 x 1",
        input: 1.0,
        positive: CellLevel::High,
        reference: (1.016, 0.063),
    },
    CellOp {
        name: "0.1 x 1",
        input: 0.1,
        positive: CellLevel::High,
        reference: (0.989e-1, 0.062e-1),
    },
    CellOp {
        name: "0.01 x 1",
        input: 0.01,
        positive: CellLevel::High,
        reference: (0.985e-2, 0.069e-2),
    },
    CellOp {
        name: "1.0 x 0",
        input: 1.0,
        positive: CellLevel::Low,
        reference: (8.52e-4, 4.75e-2),
    },
    CellOp {
        name: "1.0 x 0.5",
        input: 1.0,
        positive: CellLevel::Half,
        reference: (0.476, 0.094),
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellBenchRow {
    pub operation: &'static str,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Corrected paired products for one operation.
pub fn cell_op_samples(
    params: &DeviceModelParams,
    op: &CellOp,
    correction: f64,
    cells: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = child_rng(seed, &[op.input.to_bits(), op.positive as u64]);
    let v = op.input * params.v_read_max;
    (0..cells)
        .map(|_| {
            let p = program_cell(params, op.positive, &mut rng);
            let n = program_cell(params, CellLevel::Low, &mut rng);
            let ip = read_current_unchecked(p.g_actual, params, v, &mut rng);
            let in_ = read_current_unchecked(n.g_actual, params, v, &mut rng);
            correction * (ip - in_)
        })
        .collect()
}

/// Run all five operations with `cells` pairs each.
pub fn run_cell_benchmark(
    params: &DeviceModelParams,
    cells: usize,
    correction_samples: usize,
    seed: u64,
) -> Result<(f64, Vec<CellBenchRow>)> {
    params.validate()?;
    let c = fit_correction_factor(params, correction_samples, &mut child_rng(seed, &[0]))?;
    let rows = CELL_OPS
        .par_iter()
        .map(|op| {
            let s = Summary::of(&cell_op_samples(params, op, c, cells.max(1), seed))
                .expect("non-empty sample");
            CellBenchRow {
                operation: op.name,
                mean: s.mean,
                std: s.std,
                min: s.min,
                max: s.max,
            }
        })
        .collect();
    Ok((c, rows))
}

/// One acceptance window on a benchmark statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCheck {
    pub operation: &'static str,
    pub quantity: &'static str,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

/// Tolerance windows around the measured reference statistics. The
/// "0.01 x 1" row is informational.
pub fn check_table1(rows: &[CellBenchRow]) -> Vec<WindowCheck> {
    let find = |name: &str| rows.iter().find(|r| r.operation == name);
    let mut out = Vec::new();
    let mut push = |operation: &'static str, quantity: &'static str, value: f64, lo: f64, hi: f64| {
        out.push(WindowCheck {
            operation,
            quantity,
            value,
            lo,
            hi,
            pass: value >= lo && value <= hi,
        });
    };
    if let Some(r) = find("1.0 x 1") {
        push("1.0 x 1", "mean", r.mean, 0.97, 1.06);
        push("1.0 x 1", "std", r.std, 0.04, 0.09);
    }
    if let Some(r) = find("0.1 x 1") {
        push("0.1 x 1", "mean", r.mean, 0.095, 0.104);
        push("0.1 x 1", "std/mean", r.std / r.mean, 0.04, 0.09);
    }
    if let Some(r) = find("1.0 x 0") {
        push("1.0 x 0", "|mean|", r.mean.abs(), 0.0, 5e-3);
        push("1.0 x 0", "std", r.std, 0.03, 0.07);
    }
    if let Some(r) = find("1.0 x 0.5") {
        push("1.0 x 0.5", "mean", r.mean, 0.43, 0.53);
        push("1.0 x 0.5", "std", r.std, 0.06, 0.13);
    }
    out
}
